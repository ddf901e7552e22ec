#include "sparsecap/checkpoint.hpp"

#include <bit>

#include "binary_io.hpp"
#include "sparsecap/mask_tools.hpp"

namespace sparsecap {

template <typename T>
Tensor<T> StoredTensor::as() const {
  if (dtype == DType::kF32) return Tensor<T>(shape, std::vector<T>(f32.begin(), f32.end()));
  return Tensor<T>(shape, std::vector<T>(f64.begin(), f64.end()));
}

ModelConfig Checkpoint::model_config() const { return parse_model_config(config_text); }

const StoredTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  binio::Writer w(path);
  w.bytes("SWBC", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ck.config_text.size()));
  w.bytes(ck.config_text.data(), ck.config_text.size());
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (const auto e : t.shape) w.u32(static_cast<std::uint32_t>(e));
    if (t.dtype == DType::kF32) w.f32s(t.f32);
    else w.f64s(t.f64);
  }
  w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  binio::Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "SWBC") throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_text = r.str(r.u32());
  const std::uint32_t count = r.u32();
  ck.tensors.resize(count);
  for (auto& t : ck.tensors) {
    t.name = r.str(r.u32());
    const std::uint8_t code = r.u8();
    if (code > 1) throw FormatError(path.string() + ": tensor '" + t.name + "' has unknown dtype");
    t.dtype = static_cast<DType>(code);
    const std::uint32_t rank = r.u32();
    t.shape.resize(rank);
    for (auto& e : t.shape) e = r.u32();
    const std::size_t n = numel(t.shape);
    if (rank == 0 || n == 0 || n > (std::size_t{1} << 30)) {
      throw FormatError(path.string() + ": tensor '" + t.name + "' has invalid shape " + shape_str(t.shape));
    }
    if (t.dtype == DType::kF32) {
      t.f32.resize(n);
      r.f32s(t.f32);
    } else {
      t.f64.resize(n);
      r.f64s(t.f64);
    }
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after tensor table");
  return ck;
}

template <typename T>
Checkpoint make_checkpoint(const CaptionModel<T>& model) {
  Checkpoint ck;
  ck.config_text = model.config().to_text();
  for (const auto& p : model.params()) {
    StoredTensor t;
    t.name = p.name;
    t.shape = p.var.shape();
    if constexpr (std::is_same_v<T, float>) {
      t.dtype = DType::kF32;
      t.f32 = p.var.value().data;
    } else {
      t.dtype = DType::kF64;
      t.f64 = p.var.value().data;
    }
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <typename T>
void restore(const Checkpoint& ck, RestoreScope scope, CaptionModel<T>& target) {
  if (scope == RestoreScope::kAll) {
    if (ck.tensors.size() != target.params().size()) {
      throw FormatError("checkpoint holds " + std::to_string(ck.tensors.size()) +
                        " tensors, model has " + std::to_string(target.params().size()));
    }
    std::vector<Tensor<T>> staged;
    staged.reserve(target.params().size());
    for (const auto& p : target.params()) {
      const StoredTensor* t = ck.find(p.name);
      if (!t) throw FormatError("checkpoint lacks tensor '" + p.name + "'");
      if (t->shape != p.var.shape()) {
        throw DimensionError("tensor '" + p.name + "': checkpoint " + shape_str(t->shape) + " vs model " +
                             shape_str(p.var.shape()));
      }
      staged.push_back(t->as<T>());
    }
    // Nothing is written until every tensor has been validated.
    for (std::size_t i = 0; i < staged.size(); ++i) {
      target.params()[i].var.mutable_value() = std::move(staged[i]);
    }
    return;
  }

  const StoredTensor* t = ck.find(kMaskParam);
  if (!t) throw FormatError("checkpoint lacks tensor '" + std::string(kMaskParam) + "'");
  Var<T>& p = target.mask_logits();
  if (t->shape == p.shape()) {
    p.mutable_value() = t->as<T>();
    return;
  }
  const GridDims src = ck.model_config().grid();
  const GridDims dst = target.grid();
  if (src.h != dst.h || src.w != dst.w || t->shape != Shape{src.tokens(), src.tokens()}) {
    throw DimensionError("mask " + shape_str(t->shape) + " cannot be resampled to " +
                         shape_str(p.shape()) + ": spatial grids differ");
  }
  const MaskGrid resampled = interpolate_mask_temporal(mask_from_logits(t->as<double>(), src), dst.t);
  p.mutable_value() = logits_from_mask<T>(resampled);
}

template <typename T>
CaptionModel<T> model_from_checkpoint(const Checkpoint& ck) {
  CaptionModel<T> model(ck.model_config(), 0);
  restore(ck, RestoreScope::kAll, model);
  return model;
}

template Tensor<float> StoredTensor::as<float>() const;
template Tensor<double> StoredTensor::as<double>() const;
template Checkpoint make_checkpoint(const CaptionModel<float>&);
template Checkpoint make_checkpoint(const CaptionModel<double>&);
template void restore(const Checkpoint&, RestoreScope, CaptionModel<float>&);
template void restore(const Checkpoint&, RestoreScope, CaptionModel<double>&);
template CaptionModel<float> model_from_checkpoint(const Checkpoint&);
template CaptionModel<double> model_from_checkpoint(const Checkpoint&);

}  // namespace sparsecap
