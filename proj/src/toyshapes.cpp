#include "rfusion/toyshapes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rfusion/error.hpp"
#include "rfusion/rng.hpp"

namespace rfusion {

std::vector<ToyTask> default_toy_tasks(double epsilon) {
  const ShapeDistribution circle{ShapeKind::circle, epsilon}, disk{ShapeKind::disk, epsilon},
      square{ShapeKind::square, epsilon};
  return {{circle, square}, {square, circle}, {disk, square}, {square, disk}, {square, square}};
}

double sliced_w2(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                 std::size_t projections, std::uint64_t seed, std::vector<double>* grad_a) {
  if (a.size() != 2 * n || b.size() != 2 * n) throw DimensionError("sliced_w2: point sets differ in size");
  if (grad_a) grad_a->assign(2 * n, 0.0);
  CounterRng rng(seed, "slice");
  std::vector<double> pa(n), pb(n);
  std::vector<std::size_t> ia(n), ib(n);
  double total = 0.0;
  for (std::size_t p = 0; p < projections; ++p) {
    const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double c = std::cos(t), s = std::sin(t);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = c * a[i] + s * a[n + i];
      pb[i] = c * b[i] + s * b[n + i];
    }
    std::iota(ia.begin(), ia.end(), 0);
    std::iota(ib.begin(), ib.end(), 0);
    std::sort(ia.begin(), ia.end(), [&](auto x, auto y) { return pa[x] < pa[y] || (pa[x] == pa[y] && x < y); });
    std::sort(ib.begin(), ib.end(), [&](auto x, auto y) { return pb[x] < pb[y] || (pb[x] == pb[y] && x < y); });
    const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(projections));
    for (std::size_t k = 0; k < n; ++k) {
      const double d = pa[ia[k]] - pb[ib[k]];
      total += d * d * norm;
      if (grad_a) {
        (*grad_a)[ia[k]] += 2.0 * d * c * norm;
        (*grad_a)[n + ia[k]] += 2.0 * d * s * norm;
      }
    }
  }
  return total;
}

double support_violation(const ShapeDistribution& target, double x, double y) {
  switch (target.kind) {
    case ShapeKind::square: {
      const double dx = std::max({0.0, -x, x - 1.0}), dy = std::max({0.0, -y, y - 1.0});
      return std::hypot(dx, dy);
    }
    case ShapeKind::circle:
      return std::fabs(std::hypot(x, y) - 1.0);
    case ShapeKind::disk: {
      const double r = std::hypot(x, y);
      const double lo = std::sqrt(1.0 - target.epsilon), hi = std::sqrt(1.0 + target.epsilon);
      return std::max({0.0, lo - r, r - hi});
    }
  }
  return 0.0;
}

namespace {

struct Mlp {
  std::vector<Tensor> w, b;

  Tensor forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t k = 0; k < w.size(); ++k) {
      h = add_columnwise(matmul(w[k], h), b[k]);
      if (k + 1 < w.size()) h = relu(h);
    }
    return h;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> p;
    for (std::size_t k = 0; k < w.size(); ++k) {
      p.push_back(w[k]);
      p.push_back(b[k]);
    }
    return p;
  }
};

Mlp make_mlp(const ToyShapesConfig& cfg, CounterRng rng) {
  Mlp m;
  std::size_t in = 2;
  for (std::size_t k = 0; k < cfg.layers; ++k) {
    const std::size_t out = k + 1 == cfg.layers ? 2 : cfg.width;
    std::vector<double> v(out * in);
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& x : v) x = rng.normal(0.0, sd);
    m.w.push_back(Tensor::matrix(out, in, std::move(v), true));
    m.b.push_back(Tensor::zeros({out}, true));
    in = out;
  }
  return m;
}

// Adam with the usual bias correction.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double rate) : params_(std::move(params)), rate_(rate) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void step(double rate) {
    rate_ = rate;
    ++t_;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      const auto g = p.grad();
      auto x = p.mutable_data();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(g[i])) throw NumericError("toy generator gradient is not finite");
        m_[k][i] = 0.9 * m_[k][i] + 0.1 * g[i];
        v_[k][i] = 0.999 * v_[k][i] + 0.001 * g[i] * g[i];
        x[i] -= rate_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + 1e-8);
      }
      p.zero_grad();
    }
  }

 private:
  std::vector<Tensor> params_;
  double rate_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// [n x 2] rows -> [2 x n] columns.
std::vector<double> as_columns(const Tensor& pts) {
  const std::size_t n = pts.rows();
  std::vector<double> out(2 * n);
  const auto p = pts.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = p[2 * i];
    out[n + i] = p[2 * i + 1];
  }
  return out;
}

std::vector<double> pick(const std::vector<double>& cols, std::size_t total, std::span<const std::size_t> idx) {
  const std::size_t n = idx.size();
  std::vector<double> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = cols[idx[i]];
    out[n + i] = cols[total + idx[i]];
  }
  return out;
}

}  // namespace

ToyResult run_toy_task(const ToyTask& task, const ToyShapesConfig& cfg, std::uint64_t seed) {
  CounterRng root(seed, "toy/" + task.name());
  const auto src = as_columns(sample_shape(task.source, cfg.samples, root.split("source").key()));
  const auto tgt = as_columns(sample_shape(task.target, cfg.samples, root.split("target").key()));
  const std::size_t n = cfg.samples, batch = std::min(cfg.batch, n);

  Mlp net = make_mlp(cfg, root.split("init"));
  Adam opt(net.parameters(), cfg.learning_rate);
  CounterRng draw = root.split("batches");
  std::vector<std::size_t> is(batch), it(batch);
  std::vector<double> grad;
  double loss = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < batch; ++i) {
      is[i] = draw.below(n);
      it[i] = draw.below(n);
    }
    const Tensor x = Tensor::matrix(2, batch, pick(src, n, is));
    const Tensor y = net.forward(x);
    loss = sliced_w2(y.to_vector(), pick(tgt, n, it), batch, cfg.projections, root.split(step).key(), &grad);
    // The sliced distance is differentiated by hand; sum(Y * G) carries G back
    // through the network.
    backward(sum(mul(y, Tensor::matrix(2, batch, grad))));
    // Cosine decay to zero over the run.
    const double progress = static_cast<double>(step) / static_cast<double>(cfg.steps);
    opt.step(0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * progress)));
  }

  ToyResult r;
  r.task = task;
  r.final_loss = loss;
  NoGradGuard guard;
  const auto eval = as_columns(sample_shape(task.source, cfg.eval_samples, root.split("eval").key()));
  const auto out = net.forward(Tensor::matrix(2, cfg.eval_samples, eval)).to_vector();
  const std::size_t m = cfg.eval_samples;
  std::vector<double> rows(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    const double px = out[i], py = out[m + i];
    rows[2 * i] = px;
    rows[2 * i + 1] = py;
    r.mean_abs_r2 += std::fabs(px * px + py * py - 1.0);
    r.violation += support_violation(task.target, px, py);
  }
  r.mean_abs_r2 /= static_cast<double>(m);
  r.violation /= static_cast<double>(m);
  r.generated = Tensor::matrix(m, 2, std::move(rows));
  r.coverage = coverage_fraction(r.generated, cfg.grid);
  return r;
}

}  // namespace rfusion
