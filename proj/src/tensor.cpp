#include "rfusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "rfusion/error.hpp"
#include "rfusion/kernels.hpp"

namespace rfusion {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

void check_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << "non-finite value " << values[i] << " at index " << i << " in " << what;
      throw NumericError(os.str());
    }
  }
}

Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<NodePtr> parents, std::function<void(detail::Node&)> bw) {
  check_finite(data, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

const kernels::KernelTable& K() { return kernels::active(); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    std::ostringstream os;
    os << op << ": expected rank " << rank << " operand, got shape " << shape_str(t.shape());
    throw DimensionError(os.str());
  }
}

enum class Bcast { none, left_scalar, right_scalar };

Bcast binary_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::none;
  if (a.rank() == 0) return Bcast::left_scalar;
  if (b.rank() == 0) return Bcast::right_scalar;
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

// Accumulate `g` (full-size) into parent p, summing when p is a broadcast scalar.
void accumulate(detail::Node& p, std::span<const double> g, double factor = 1.0) {
  if (!p.requires_grad) return;
  p.ensure_grad();
  if (p.grad.size() == g.size()) {
    K().axpy(factor, g.data(), p.grad.data(), g.size());
  } else {
    p.grad[0] += factor * K().sum(g.data(), g.size());
  }
}

template <typename F>
std::vector<double> map_binary(const Tensor& a, const Tensor& b, Bcast layout, F f) {
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t n = layout == Bcast::left_scalar ? bd.size() : ad.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = layout == Bcast::left_scalar ? ad[0] : ad[i];
    const double y = layout == Bcast::right_scalar ? bd[0] : bd[i];
    out[i] = f(x, y);
  }
  return out;
}

const Shape& result_shape(const Tensor& a, const Tensor& b, Bcast layout) {
  return layout == Bcast::left_scalar ? b.shape() : a.shape();
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

void detail::Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape.size() > 2) {
    throw DimensionError("tensors of rank > 2 are not supported: " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  check_finite(values, "tensor construction");
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor(Shape{n, n}, std::move(v), requires_grad);
}

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return node_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() needs a single-element tensor, got " + shape_str(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

void Tensor::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->data = node_->data;
  n->op = "detach";
  return Tensor(std::move(n));
}

Tensor Tensor::clone() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->data = node_->data;
  n->requires_grad = node_->requires_grad;
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast layout = binary_layout(a, b, "add");
  std::vector<double> out;
  if (layout == Bcast::none) {
    out.resize(a.numel());
    K().add(a.data().data(), b.data().data(), out.data(), out.size());
  } else {
    out = map_binary(a, b, layout, [](double x, double y) { return x + y; });
  }
  return make_result(result_shape(a, b, layout), std::move(out), "add",
                     {a.node_ptr(), b.node_ptr()}, [](detail::Node& self) {
                       accumulate(*self.parents[0], self.grad);
                       accumulate(*self.parents[1], self.grad);
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bcast layout = binary_layout(a, b, "sub");
  std::vector<double> out;
  if (layout == Bcast::none) {
    out.resize(a.numel());
    K().sub(a.data().data(), b.data().data(), out.data(), out.size());
  } else {
    out = map_binary(a, b, layout, [](double x, double y) { return x - y; });
  }
  return make_result(result_shape(a, b, layout), std::move(out), "sub",
                     {a.node_ptr(), b.node_ptr()}, [](detail::Node& self) {
                       accumulate(*self.parents[0], self.grad);
                       accumulate(*self.parents[1], self.grad, -1.0);
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast layout = binary_layout(a, b, "mul");
  std::vector<double> out;
  if (layout == Bcast::none) {
    out.resize(a.numel());
    K().mul(a.data().data(), b.data().data(), out.data(), out.size());
  } else {
    out = map_binary(a, b, layout, [](double x, double y) { return x * y; });
  }
  return make_result(
      result_shape(a, b, layout), std::move(out), "mul", {a.node_ptr(), b.node_ptr()},
      [layout](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const std::size_t n = self.grad.size();
        std::vector<double> g(n);
        if (pa.requires_grad) {
          for (std::size_t i = 0; i < n; ++i) {
            g[i] = self.grad[i] * (layout == Bcast::right_scalar ? pb.data[0] : pb.data[i]);
          }
          accumulate(pa, g);
        }
        if (pb.requires_grad) {
          for (std::size_t i = 0; i < n; ++i) {
            g[i] = self.grad[i] * (layout == Bcast::left_scalar ? pa.data[0] : pa.data[i]);
          }
          accumulate(pb, g);
        }
      });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  const Bcast layout = binary_layout(a, b, "maximum");
  auto out = map_binary(a, b, layout, [](double x, double y) { return x >= y ? x : y; });
  return make_result(
      result_shape(a, b, layout), std::move(out), "maximum", {a.node_ptr(), b.node_ptr()},
      [layout](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const std::size_t n = self.grad.size();
        std::vector<double> ga(n, 0.0), gb(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = layout == Bcast::left_scalar ? pa.data[0] : pa.data[i];
          const double y = layout == Bcast::right_scalar ? pb.data[0] : pb.data[i];
          (x >= y ? ga : gb)[i] = self.grad[i];
        }
        accumulate(pa, ga);
        accumulate(pb, gb);
      });
}

Tensor scale(const Tensor& a, double alpha) {
  std::vector<double> out(a.numel());
  K().scale(alpha, a.data().data(), out.data(), out.size());
  return make_result(a.shape(), std::move(out), "scale", {a.node_ptr()},
                     [alpha](detail::Node& self) { accumulate(*self.parents[0], self.grad, alpha); });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += c;
  return make_result(a.shape(), std::move(out), "add_scalar", {a.node_ptr()},
                     [](detail::Node& self) { accumulate(*self.parents[0], self.grad); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  K().relu(a.data().data(), out.data(), out.size());
  return make_result(a.shape(), std::move(out), "relu", {a.node_ptr()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    K().relu_backward(p.data.data(), self.grad.data(), p.grad.data(), self.grad.size());
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
  return make_result(a.shape(), std::move(out), "exp", {a.node_ptr()}, [](detail::Node& self) {
    std::vector<double> g(self.grad.size());
    K().mul(self.grad.data(), self.data.data(), g.data(), g.size());
    accumulate(*self.parents[0], g);
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(a[i] > 0.0)) {
      std::ostringstream os;
      os << "log: non-positive input " << a[i] << " at index " << i;
      throw DomainError(os.str());
    }
    out[i] = std::log(a[i]);
  }
  return make_result(a.shape(), std::move(out), "log", {a.node_ptr()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] / p.data[i];
    accumulate(p, g);
  });
}

Tensor abs(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a[i]);
  return make_result(a.shape(), std::move(out), "abs", {a.node_ptr()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = p.data[i];
      g[i] = x > 0.0 ? self.grad[i] : (x < 0.0 ? -self.grad[i] : 0.0);
    }
    accumulate(p, g);
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.numel());
  K().mul(a.data().data(), a.data().data(), out.data(), out.size());
  return make_result(a.shape(), std::move(out), "square", {a.node_ptr()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    std::vector<double> g(self.grad.size());
    K().mul(self.grad.data(), p.data.data(), g.data(), g.size());
    accumulate(p, g, 2.0);
  });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a) {
  switch (op) {
    case ElementwiseOp::relu:
      return relu(a);
    case ElementwiseOp::exp:
      return exp(a);
    case ElementwiseOp::log:
      return log(a);
    case ElementwiseOp::abs:
      return abs(a);
    case ElementwiseOp::square:
      return square(a);
    default:
      throw ContractError("elementwise: binary op requested with one operand");
  }
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case ElementwiseOp::add:
      return add(a, b);
    case ElementwiseOp::sub:
      return sub(a, b);
    case ElementwiseOp::mul:
      return mul(a, b);
    case ElementwiseOp::max:
      return maximum(a, b);
    default:
      throw ContractError("elementwise: unary op requested with two operands");
  }
}

// ---------------------------------------------------------------------------
// Linear algebra and reductions

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  K().gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result(Shape{m, n}, std::move(out), "matmul", {a.node_ptr(), b.node_ptr()},
                     [m, n, k](detail::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (pa.requires_grad) {  // dA = G * B^T
                         pa.ensure_grad();
                         K().gemm_nt(m, k, n, self.grad.data(), pb.data.data(), pa.grad.data());
                       }
                       if (pb.requires_grad) {  // dB = A^T * G
                         pb.ensure_grad();
                         K().gemm_tn(k, n, m, pa.data.data(), self.grad.data(), pb.grad.data());
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return make_result(Shape{n, m}, std::move(out), "transpose", {a.node_ptr()},
                     [m, n](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
                     });
}

Tensor sum(const Tensor& a) {
  const double s = K().sum(a.data().data(), a.numel());
  return make_result(Shape{}, {s}, "sum", {a.node_ptr()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0];
    for (auto& v : p.grad) v += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor add_columnwise(const Tensor& a, const Tensor& bias) {
  require_rank(a, 2, "add_columnwise");
  require_rank(bias, 1, "add_columnwise");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.numel() != m) {
    throw DimensionError("add_columnwise: bias " + shape_str(bias.shape()) + " vs matrix " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[i];
  return make_result(Shape{m, n}, std::move(out), "add_columnwise", {a.node_ptr(), bias.node_ptr()},
                     [m, n](detail::Node& self) {
                       accumulate(*self.parents[0], self.grad);
                       auto& pb = *self.parents[1];
                       if (!pb.requires_grad) return;
                       pb.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i)
                         pb.grad[i] += K().sum(self.grad.data() + i * n, n);
                     });
}

Tensor row(const Tensor& a, std::size_t r) {
  require_rank(a, 2, "row");
  const std::size_t m = a.rows(), n = a.cols();
  if (r >= m) {
    throw DimensionError("row: index " + std::to_string(r) + " out of range for " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin() + r * n, a.data().begin() + (r + 1) * n);
  return make_result(Shape{n}, std::move(out), "row", {a.node_ptr()}, [r, n](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    K().axpy(1.0, self.grad.data(), p.grad.data() + r * n, n);
  });
}

Tensor column_max(const Tensor& a) {
  require_rank(a, 2, "column_max");
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw DimensionError("column_max: matrix has no rows");
  std::vector<double> out(n);
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    double best = a[j];
    for (std::size_t i = 1; i < m; ++i) {
      if (a[i * n + j] > best) {
        best = a[i * n + j];
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  return make_result(Shape{n}, std::move(out), "column_max", {a.node_ptr()},
                     [n, arg = std::move(arg)](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (std::size_t j = 0; j < n; ++j) p.grad[arg[j] * n + j] += self.grad[j];
                     });
}

Tensor softmax_columns(const Tensor& a) {
  require_rank(a, 2, "softmax_columns");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t j = 0; j < n; ++j) {
    double mx = a[j];
    for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, a[i * n + j]);
    double z = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      out[i * n + j] = std::exp(a[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t i = 0; i < m; ++i) out[i * n + j] /= z;
  }
  return make_result(Shape{m, n}, std::move(out), "softmax_columns", {a.node_ptr()},
                     [m, n](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       // dx_i = y_i * (g_i - sum_k g_k y_k), per column
                       for (std::size_t j = 0; j < n; ++j) {
                         double dotgy = 0.0;
                         for (std::size_t i = 0; i < m; ++i)
                           dotgy += self.grad[i * n + j] * self.data[i * n + j];
                         for (std::size_t i = 0; i < m; ++i)
                           p.grad[i * n + j] += self.data[i * n + j] * (self.grad[i * n + j] - dotgy);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Tape and optimizers

ComputationTape::ComputationTape(const Tensor& root) : root_(root.node_ptr()) {
  // Iterative post-order DFS: a node is emitted after all of its parents.
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root_.get(), 0);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void ComputationTape::backward() {
  if (!root_->shape.empty() && root_->data.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(root_->shape));
  }
  if (!root_->requires_grad) {
    throw ContractError("backward: loss does not depend on any tensor that requires grad");
  }
  // Interior buffers are per-sweep; leaves accumulate across sweeps.
  for (detail::Node* n : order_) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  if (root_->is_leaf()) root_->ensure_grad();
  root_->grad[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->is_leaf() && n->backward) n->backward(*n);
  }
  for (detail::Node* n : order_) {
    if (n->is_leaf()) check_finite(n->grad, "gradient after backward");
  }
  for (detail::Node* n : order_) {
    if (!n->is_leaf()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& loss) {
  ComputationTape tape(loss);
  tape.backward();
}

void sgd_step(std::span<const Tensor> params, double rate) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    throw ContractError("sgd_step: rate must be a finite non-negative number");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& node = params[k].node();
    for (double g : node.grad) {
      if (!std::isfinite(g)) {
        throw NumericError("sgd_step: non-finite gradient in parameter #" + std::to_string(k) +
                           " of shape " + shape_str(node.shape));
      }
    }
  }
  for (const Tensor& p : params) {
    auto& node = *p.node_ptr();
    if (node.grad.empty()) continue;
    if (rate != 0.0) K().axpy(-rate, node.grad.data(), node.data.data(), node.data.size());
    std::fill(node.grad.begin(), node.grad.end(), 0.0);
  }
}

void adam_step(std::span<const Tensor> params, std::span<AdamMoments> state, double rate) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    throw ContractError("adam_step: rate must be a finite non-negative number");
  }
  if (state.size() != params.size()) throw ContractError("adam_step: one moment slot per parameter");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& node = params[k].node();
    for (double g : node.grad) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in parameter #" + std::to_string(k) +
                           " of shape " + shape_str(node.shape));
      }
    }
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& node = *params[k].node_ptr();
    if (node.grad.empty()) continue;
    auto& s = state[k];
    if (s.m.size() != node.data.size()) {
      s.m.assign(node.data.size(), 0.0);
      s.v.assign(node.data.size(), 0.0);
      s.t = 0;
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < node.data.size(); ++i) {
      const double g = node.grad[i];
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
      node.data[i] -= rate * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps);
    }
    std::fill(node.grad.begin(), node.grad.end(), 0.0);
  }
}

void clamp_(Tensor& t, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp_: lower bound exceeds upper bound");
  for (auto& v : t.mutable_data()) v = std::clamp(v, lo, hi);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace rfusion
