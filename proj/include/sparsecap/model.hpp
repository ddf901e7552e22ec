#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sparsecap/autodiff.hpp"
#include "sparsecap/config.hpp"

namespace sparsecap {

// Name of the single learnable video-video mask pre-activation P (M×M).
inline constexpr const char* kMaskParam = "mask.P";

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

// Every tensor of the captioner, in a fixed creation order. Weight matrices
// and embeddings start at Gaussian(0, 0.02), biases at zero, norm scales at
// one; P starts at the configured mask_init.
template <typename T>
class CaptionModel {
 public:
  explicit CaptionModel(ModelConfig cfg, std::uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }
  GridDims grid() const { return grid_; }
  std::size_t video_tokens() const { return grid_.tokens(); }
  std::size_t text_len() const { return cfg_.encoder.text_len; }
  std::size_t vocab_size() const { return cfg_.vocab.size(); }

  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const Var<T>& get(const std::string& name) const;
  Var<T>& get(const std::string& name);

  Var<T>& mask_logits() { return get(kMaskParam); }
  const Var<T>& mask_logits() const { return get(kMaskParam); }

  void set_mode(MaskMode mode) { cfg_.encoder.mode = mode; }
  void zero_grad();

  // Same parameter values in another precision.
  template <typename U>
  CaptionModel<U> cast() const {
    CaptionModel<U> out(cfg_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.params()[i].var.mutable_value() = params_[i].var.value().template cast<U>();
    }
    return out;
  }

 private:
  void add(std::string name, Tensor<T> value);

  ModelConfig cfg_;
  GridDims grid_;
  std::vector<NamedParam<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class CaptionModel<float>;
extern template class CaptionModel<double>;

}  // namespace sparsecap
