#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sparsecap/autodiff.hpp"

namespace sparsecap {

struct GradCheckOptions {
  double h = 1e-5;
  // Coordinates sampled per parameter tensor; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

// Central finite differences (f(θ+h) - f(θ-h)) / 2h against the reverse-mode
// gradient, per coordinate, with relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|). The builder must be
// deterministic and rebuild the loss from the current parameter values.
GradCheckReport grad_check_report(const std::function<Var<double>()>& build_loss,
                                  std::vector<Var<double>> params,
                                  const GradCheckOptions& options = {});

double grad_check(const std::function<Var<double>()>& build_loss, std::vector<Var<double>> params,
                  double h = 1e-5);

}  // namespace sparsecap
