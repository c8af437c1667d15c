#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tconv {

/// A differentiable scalar function over named blocks of variables.
struct GradCheckProblem {
  struct Block {
    std::string name;
    std::span<double> values;            // perturbed in place, then restored
    std::span<const double> analytic;    // filled by compute_gradients
  };
  std::function<double()> loss;              // forward pass only
  std::function<void()> compute_gradients;   // zeroes, then fills every analytic span
  std::vector<Block> blocks;
  /// Optional: the discrete choices of the last loss() call (ReLU masks,
  /// pooling argmaxes). An entry whose perturbation flips a choice sits on
  /// a kink and is skipped.
  std::function<std::vector<std::uint32_t>()> branches;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Without a branches callback, an entry is treated as a kink when its
  /// second difference exceeds this relative amount and does not shrink
  /// with the step as smooth curvature would.
  double kink_tolerance = 1e-6;
  /// Check at most this many entries per block (0 = all), sampled by seed.
  std::size_t max_entries_per_block = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_entry;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Central finite differences against analytic gradients. The relative
/// error of an entry is |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(GradCheckProblem& problem, const GradCheckOptions& options = {});

}  // namespace tconv
