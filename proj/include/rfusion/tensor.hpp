#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle: copying it aliases the same storage, which is
// what lets optimizers update parameters that networks hold. Values are
// treated as immutable except through the explicit in-place operations
// (sgd_step, clamp_, Tensor::mutable_data). Use clone() for an independent copy.
//
// Ranks 0 (scalar), 1 (vector) and 2 (row-major matrix) are supported. The only
// implicit broadcast is a rank-0 operand in the elementwise binary ops.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rfusion {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates self.grad into parents

  bool is_leaf() const { return parents.empty(); }
  void ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  /// Rank-0 zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t rows() const;  // rank 2 only
  std::size_t cols() const;  // rank 2 only

  std::span<const double> data() const { return node_->data; }
  std::vector<double> to_vector() const { return node_->data; }
  /// Mutable view of the stored values; bypasses the tape.
  std::span<double> mutable_data() { return node_->data; }

  double item() const;  // numel must be 1
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; all zeros when nothing has been accumulated yet.
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, cut from the graph (no gradient flows through).
  Tensor detach() const;
  /// Deep copy of values, same requires_grad flag, fresh leaf.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  const detail::Node& node() const { return *node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Elementwise. Shapes must match, or one side must be rank 0.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// max(a, b) elementwise; on ties the gradient goes to `a`.
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double alpha);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);  // relu'(0) = 0
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError on entries <= 0
Tensor abs(const Tensor& a);  // abs'(0) = 0
Tensor square(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Which elementwise primitive to apply; mirrors the named functions above.
enum class ElementwiseOp { add, sub, mul, relu, exp, log, max, abs, square };
Tensor elementwise(ElementwiseOp op, const Tensor& a);
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);

// Linear algebra and reductions.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// a[m x n] + bias[m] added to every column.
Tensor add_columnwise(const Tensor& a, const Tensor& bias);
/// Row r of a matrix as a rank-1 tensor.
Tensor row(const Tensor& a, std::size_t r);
/// Per-column maximum of a matrix, rank-1 result. The gradient of each column
/// goes to its first (lowest row index) maximal entry.
Tensor column_max(const Tensor& a);
/// Numerically stable softmax over each column.
Tensor softmax_columns(const Tensor& a);

/// Topologically ordered record of the operations reachable from a root.
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor& root);

  /// Nodes in topological order (every node after all of its inputs).
  const std::vector<detail::Node*>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

  /// Reverse sweep from the root; the root must be a scalar.
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> order_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad.
/// Throws ContractError for non-scalar losses or losses that do not depend on
/// any trainable leaf, NumericError when a gradient is non-finite.
void backward(const Tensor& loss);

/// p -= rate * grad(p), then zero the gradient. Throws NumericError naming the
/// parameter when a gradient is non-finite (no parameter is modified then).
void sgd_step(std::span<const Tensor> params, double rate);

/// First and second moment estimates of one parameter, plus its step count.
struct AdamMoments {
  std::vector<double> m, v;
  std::uint64_t t = 0;
};

/// Adam update with bias correction (beta1 0.9, beta2 0.999, eps 1e-8), then
/// zero the gradient. state[k] belongs to params[k] and is sized on first use.
/// Same non-finite check as sgd_step.
void adam_step(std::span<const Tensor> params, std::span<AdamMoments> state, double rate);

/// Clamp every entry into [lo, hi] in place; not recorded on any tape.
void clamp_(Tensor& t, double lo, double hi);

/// While alive, newly created tensors on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace rfusion
