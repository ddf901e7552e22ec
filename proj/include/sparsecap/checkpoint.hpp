#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sparsecap/model.hpp"

namespace sparsecap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct StoredTensor {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<float> f32;
  std::vector<double> f64;

  template <typename T>
  Tensor<T> as() const;
};

// File layout (little-endian): "SWBC", u32 version, u32 config length +
// config text, u32 tensor count, then per tensor u32 name length + name,
// u8 dtype, u32 rank, u32 dims..., payload.
struct Checkpoint {
  std::string config_text;
  std::vector<StoredTensor> tensors;

  ModelConfig model_config() const;
  const StoredTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
Checkpoint make_checkpoint(const CaptionModel<T>& model);

enum class RestoreScope { kAll, kMaskOnly };

// kAll replaces every tensor (names and shapes must match exactly). kMaskOnly
// replaces only the mask; a mask from a grid with the same spatial extent but
// a different temporal extent is resampled along time.
template <typename T>
void restore(const Checkpoint& ck, RestoreScope scope, CaptionModel<T>& target);

template <typename T>
CaptionModel<T> model_from_checkpoint(const Checkpoint& ck);

}  // namespace sparsecap
