#pragma once

// Generator dimensionality study on 2-D shapes: a small MLP is fitted to map
// samples of a source shape onto a target shape by minimizing the sliced
// Wasserstein distance, then the image is scored for coverage and for how
// well it respects the target's constraint.

#include <cstdint>
#include <string>
#include <vector>

#include "rfusion/config.hpp"
#include "rfusion/simdata.hpp"
#include "rfusion/tensor.hpp"

namespace rfusion {

struct ToyTask {
  ShapeDistribution source, target;

  std::string name() const { return source.name() + "_to_" + target.name(); }
};

/// circle->square, square->circle, disk->square, square->disk, square->square.
std::vector<ToyTask> default_toy_tasks(double epsilon);

struct ToyResult {
  ToyTask task;
  double coverage = 0.0;        // k x k grid over [0, 1]^2
  double mean_abs_r2 = 0.0;     // mean |x^2 + y^2 - 1| of generated points
  double violation = 0.0;       // mean distance outside the target's support
  double final_loss = 0.0;      // sliced W2^2 on the last batch
  Tensor generated;             // [eval_samples x 2]
};

/// Mean over `projections` random unit directions of the squared 1-D W2
/// distance between equal-size point sets (sorted matching). Writes the
/// gradient with respect to `a` into grad_a when non-null. Points are columns
/// of [2 x n] matrices given row-major.
double sliced_w2(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                 std::size_t projections, std::uint64_t seed, std::vector<double>* grad_a);

/// Distance from a point to the support of a shape; 0 inside.
double support_violation(const ShapeDistribution& target, double x, double y);

ToyResult run_toy_task(const ToyTask& task, const ToyShapesConfig& cfg, std::uint64_t seed);

}  // namespace rfusion
