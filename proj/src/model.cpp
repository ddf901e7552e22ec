#include "sparsecap/model.hpp"

#include "sparsecap/rng.hpp"

namespace sparsecap {

namespace {

template <typename T>
Tensor<T> gaussian(Shape shape, SplitMix64& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(0.02 * rng.normal());
  return t;
}

}  // namespace

template <typename T>
CaptionModel<T>::CaptionModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  grid_ = cfg_.grid();
  SplitMix64 rng(mix_seed(seed, 0x6d6f64656cULL));
  const std::size_t m = grid_.tokens();
  const std::size_t dv = cfg_.patch.width;
  const std::size_t d = cfg_.encoder.hidden;
  const std::size_t raw = cfg_.patch.patch_t * cfg_.patch.patch_s * cfg_.patch.patch_s * 3;
  const std::size_t vocab = cfg_.vocab.size();

  auto block = [&](const std::string& p, std::size_t width, std::size_t ffn) {
    add(p + ".ln1.g", Tensor<T>({width}, T{1}));
    add(p + ".ln1.b", Tensor<T>({width}));
    add(p + ".qkv.w", gaussian<T>({width, 3 * width}, rng));
    add(p + ".qkv.b", Tensor<T>({3 * width}));
    add(p + ".out.w", gaussian<T>({width, width}, rng));
    add(p + ".out.b", Tensor<T>({width}));
    add(p + ".ln2.g", Tensor<T>({width}, T{1}));
    add(p + ".ln2.b", Tensor<T>({width}));
    add(p + ".fc1.w", gaussian<T>({width, ffn}, rng));
    add(p + ".fc1.b", Tensor<T>({ffn}));
    add(p + ".fc2.w", gaussian<T>({ffn, width}, rng));
    add(p + ".fc2.b", Tensor<T>({width}));
  };

  add("video.patch.w", gaussian<T>({raw, dv}, rng));
  add("video.patch.b", Tensor<T>({dv}));
  add("video.pos", gaussian<T>({m, dv}, rng));
  for (std::size_t i = 0; i < cfg_.patch.depth; ++i) block("video.block" + std::to_string(i), dv, 4 * dv);
  add("video.ln.g", Tensor<T>({dv}, T{1}));
  add("video.ln.b", Tensor<T>({dv}));
  add("video.proj1.w", gaussian<T>({dv, d}, rng));
  add("video.proj1.b", Tensor<T>({d}));
  add("video.proj2.w", gaussian<T>({d, d}, rng));
  add("video.proj2.b", Tensor<T>({d}));

  add("text.word", gaussian<T>({vocab, d}, rng));
  add("text.pos", gaussian<T>({cfg_.encoder.text_len, d}, rng));
  add("type.text", gaussian<T>({d}, rng));
  add("type.video", gaussian<T>({d}, rng));
  for (std::size_t i = 0; i < cfg_.encoder.layers; ++i) {
    block("enc.layer" + std::to_string(i), d, cfg_.encoder.ffn);
  }
  add("enc.ln.g", Tensor<T>({d}, T{1}));
  add("enc.ln.b", Tensor<T>({d}));
  add("head.w", gaussian<T>({d, vocab}, rng));
  add("head.b", Tensor<T>({vocab}));
  add(kMaskParam, Tensor<T>({m, m}, static_cast<T>(cfg_.encoder.mask_init)));
}

template <typename T>
void CaptionModel<T>::add(std::string name, Tensor<T> value) {
  index_.emplace(name, params_.size());
  params_.push_back({std::move(name), Var<T>::parameter(std::move(value))});
}

template <typename T>
const Var<T>& CaptionModel<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("model has no parameter '" + name + "'");
  return params_[it->second].var;
}

template <typename T>
Var<T>& CaptionModel<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("model has no parameter '" + name + "'");
  return params_[it->second].var;
}

template <typename T>
void CaptionModel<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template class CaptionModel<float>;
template class CaptionModel<double>;

}  // namespace sparsecap
