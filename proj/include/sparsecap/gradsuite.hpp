#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparsecap {

struct GradSuiteEntry {
  std::string module;
  std::string check;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
};

// Finite-difference verification, in 64-bit, of every differentiable
// operation and of the composite loss L_MLM + L_sparse on a small model.
// Each check runs at `points` seeded parameter draws.
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed, std::size_t points = 5);

}  // namespace sparsecap
