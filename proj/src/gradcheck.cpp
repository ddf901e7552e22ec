#include "sparsecap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparsecap/rng.hpp"

namespace sparsecap {

GradCheckReport grad_check_report(const std::function<Var<double>()>& build_loss,
                                  std::vector<Var<double>> params,
                                  const GradCheckOptions& options) {
  if (params.empty()) throw Error("grad_check: empty parameter set");
  if (!(options.h >= 1e-6 && options.h <= 1e-4)) {
    throw Error("grad_check: step h must lie in [1e-6, 1e-4]");
  }
  for (auto& p : params) {
    if (!p.requires_grad()) throw Error("grad_check: parameter does not require grad");
    p.zero_grad();
  }
  const Var<double> loss = build_loss();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    const auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.size(), 0.0);
  }

  GradCheckReport report;
  SplitMix64 rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].mutable_value().data;
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      // Partial Fisher-Yates keeps the sample reproducible for a given seed.
      for (std::size_t i = 0; i < options.max_coords_per_param; ++i)
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (const std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + options.h;
      const double up = build_loss().item();
      values[i] = saved - options.h;
      const double down = build_loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.h);
      const double a = analytic[pi][i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coords_checked;
      if (report.coords_checked == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = pi;
        report.worst_index = i;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Var<double>()>& build_loss, std::vector<Var<double>> params,
                  double h) {
  GradCheckOptions options;
  options.h = h;
  return grad_check_report(build_loss, std::move(params), options).max_rel_error;
}

}  // namespace sparsecap
