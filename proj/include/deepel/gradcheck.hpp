// Central finite-difference validation of tape gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "deepel/autodiff.hpp"
#include "deepel/sampling.hpp"

namespace deepel {

struct GradCheckOptions {
  double epsilon = 1e-6;
  double tolerance = 1e-4;
  // Check at most this many coordinates per parameter block, sampled
  // uniformly without replacement; 0 checks every coordinate.
  std::size_t max_coordinates_per_block = 0;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  std::vector<double> max_rel_error_per_block;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/- epsilon probes changed a discrete choice (argmax,
  // relu sign, top-R set); finite differences are meaningless there.
  std::size_t skipped = 0;

  bool Passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Relative error |a - n| / max(|a|, |n|, 1e-8).
inline double RelativeError(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// `loss` must build a fresh computation on the given tape, binding every
/// block in `blocks` with Tape::Parameter, and return the scalar loss. The
/// blocks are perturbed in place and restored afterwards.
inline GradCheckReport GradCheck(const std::function<Var(Tape&)>& loss,
                                 std::span<const std::span<double>> blocks,
                                 const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  report.max_rel_error_per_block.assign(blocks.size(), 0.0);

  Tape base;
  Var out = loss(base);
  if (!std::isfinite(out.scalar())) throw Error("grad_check: non-finite loss");
  base.Backward(out);
  const auto signature = base.decisions();

  auto probe = [&](bool& kink) {
    Tape t;
    Var v = loss(t);
    const double f = v.scalar();
    if (!std::isfinite(f))
      throw Error("grad_check: non-finite loss at probe point");
    if (t.decisions() != signature) kink = true;
    return f;
  };

  std::mt19937_64 rng(opt.seed);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    std::span<double> block = blocks[b];
    auto grad = base.GradOf(block.data());
    std::vector<std::size_t> coords(block.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opt.max_coordinates_per_block > 0 &&
        coords.size() > opt.max_coordinates_per_block) {
      Shuffle(coords, rng);
      coords.resize(opt.max_coordinates_per_block);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double analytic = grad.empty() ? 0.0 : grad[i];
      const double saved = block[i];
      bool kink = false;
      block[i] = saved + opt.epsilon;
      const double fp = probe(kink);
      block[i] = saved - opt.epsilon;
      const double fm = probe(kink);
      block[i] = saved;
      if (kink) {
        ++report.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * opt.epsilon);
      const double err = RelativeError(analytic, numeric);
      report.max_rel_error_per_block[b] =
          std::max(report.max_rel_error_per_block[b], err);
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace deepel
