#include "tconv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tconv/rng.hpp"

namespace tconv {

GradCheckReport grad_check(GradCheckProblem& problem, const GradCheckOptions& options) {
  problem.compute_gradients();
  // Analytic spans may alias buffers the loss reuses; take a copy.
  std::vector<std::vector<double>> analytic;
  for (const auto& b : problem.blocks) analytic.emplace_back(b.analytic.begin(), b.analytic.end());

  GradCheckReport report;
  Rng rng(options.seed);
  const double eps = options.epsilon;
  for (std::size_t bi = 0; bi < problem.blocks.size(); ++bi) {
    auto& block = problem.blocks[bi];
    std::vector<std::size_t> entries(block.values.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_block && entries.size() > options.max_entries_per_block) {
      shuffle(entries, rng);
      entries.resize(options.max_entries_per_block);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t i : entries) {
      const double x = block.values[i];
      const double f0 = problem.loss();
      const auto b0 = problem.branches ? problem.branches() : std::vector<std::uint32_t>{};
      block.values[i] = x + eps;
      const double fp = problem.loss();
      bool flipped = problem.branches && problem.branches() != b0;
      block.values[i] = x - eps;
      const double fm = problem.loss();
      flipped = flipped || (problem.branches && problem.branches() != b0);

      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[bi][i];
      const double scale = std::max({1.0, std::abs(a), std::abs(numeric)});
      bool kink = flipped;
      if (!problem.branches) {
        // Curvature makes the second difference shrink linearly with the
        // step; a kink within the step does not.
        const double d2 = std::abs(fp - 2.0 * f0 + fm) / (2.0 * eps);
        if (d2 > options.kink_tolerance * scale) {
          block.values[i] = x + eps / 2;
          const double fph = problem.loss();
          block.values[i] = x - eps / 2;
          const double fmh = problem.loss();
          const double d2h = std::abs(fph - 2.0 * f0 + fmh) / eps;
          kink = std::abs(d2h - d2 / 2) > 0.25 * d2;
        }
      }
      block.values[i] = x;
      if (kink) {
        ++report.skipped_kinks;
        continue;
      }
      const double err = std::abs(a - numeric) / scale;
      ++report.checked;
      if (report.worst_entry.empty() || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_entry = block.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace tconv
