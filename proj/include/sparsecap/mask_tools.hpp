#pragma once

#include <filesystem>
#include <vector>

#include "sparsecap/config.hpp"
#include "sparsecap/tensor.hpp"

namespace sparsecap {

// Post-sigmoid M×M mask over video tokens in t-major order.
struct MaskGrid {
  GridDims grid;
  std::vector<double> values;  // row-major M×M, each in [0,1]

  MaskGrid() = default;
  MaskGrid(GridDims g, double fill);
  MaskGrid(GridDims g, std::vector<double> v);

  std::size_t m() const { return grid.tokens(); }
  double& at(std::size_t i, std::size_t j) { return values[i * m() + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * m() + j]; }
  bool operator==(const MaskGrid&) const = default;
};

// sigmoid(P) for a pre-activation tensor of shape [M×M].
template <typename T>
MaskGrid mask_from_logits(const Tensor<T>& p, GridDims grid);

// Inverse of the sigmoid with activations clamped to [1e-6, 1 - 1e-6].
template <typename T>
Tensor<T> logits_from_mask(const MaskGrid& mask);

// Ties at exactly the threshold binarize to 1.
MaskGrid binarize(const MaskGrid& mask, double threshold = 0.5);

// Endpoint-aligned linear resampling along both temporal axes.
MaskGrid interpolate_mask_temporal(const MaskGrid& mask, std::size_t t_new);

// Same resampling applied to rows of a per-token table [t·h·w × c]
// (position embeddings move with the mask).
template <typename T>
Tensor<T> interpolate_rows_temporal(const Tensor<T>& table, GridDims grid, std::size_t t_new);

MaskGrid heuristic_mask(HeuristicKind kind, std::size_t w, GridDims grid);

struct SparsityStats {
  double mean_activation = 0.0;
  double frac_below_zero = 0.0;  // below the zero threshold
  double frac_below_half = 0.0;
};

SparsityStats sparsity_stats(const MaskGrid& mask, double zero_threshold = 0.01);

enum class MaskFormat { kPgm, kCsv };

void export_mask(const MaskGrid& mask, const std::filesystem::path& path, MaskFormat format);
// Reads the CSV form back (grid from its header line).
MaskGrid read_mask_csv(const std::filesystem::path& path);

}  // namespace sparsecap
