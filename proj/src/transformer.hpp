#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sparsecap/autodiff.hpp"
#include "sparsecap/model.hpp"

namespace sparsecap::detail {

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return add_bias(matmul(x, w), b);
}

// Multi-head self-attention over `batch` stacked sequences of length `seq`.
// One additive bias [seq×seq] is shared by every sample and head.
template <typename T>
Var<T> self_attention(const Var<T>& h, const Var<T>& qkv_w, const Var<T>& qkv_b, std::size_t batch,
                      std::size_t seq, std::size_t heads, const Var<T>& bias) {
  const std::size_t d = h.value().cols();
  const std::size_t hd = d / heads;
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
  const Var<T> qkv = linear(h, qkv_w, qkv_b);
  std::vector<Var<T>> rows;
  rows.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<Var<T>> cols;
    cols.reserve(heads);
    for (std::size_t k = 0; k < heads; ++k) {
      const Var<T> q = slice(qkv, b * seq, seq, k * hd, hd);
      const Var<T> key = slice(qkv, b * seq, seq, d + k * hd, hd);
      const Var<T> v = slice(qkv, b * seq, seq, 2 * d + k * hd, hd);
      const Var<T> p = masked_softmax(scale(matmul_nt(q, key), inv), bias);
      cols.push_back(matmul(p, v));
    }
    rows.push_back(heads == 1 ? cols.front() : concat_cols(cols));
  }
  return batch == 1 ? rows.front() : concat_rows(rows);
}

// Pre-norm block: x + attn(ln1 x), then + ffn(ln2 x).
template <typename T>
Var<T> transformer_block(const CaptionModel<T>& m, const std::string& p, const Var<T>& x,
                         std::size_t batch, std::size_t seq, std::size_t heads, const Var<T>& bias) {
  const T eps = static_cast<T>(1e-5);
  const Var<T> h1 = layer_norm(x, m.get(p + ".ln1.g"), m.get(p + ".ln1.b"), eps);
  const Var<T> att = self_attention(h1, m.get(p + ".qkv.w"), m.get(p + ".qkv.b"), batch, seq, heads, bias);
  const Var<T> x1 = add(x, linear(att, m.get(p + ".out.w"), m.get(p + ".out.b")));
  const Var<T> h2 = layer_norm(x1, m.get(p + ".ln2.g"), m.get(p + ".ln2.b"), eps);
  const Var<T> f = linear(gelu(linear(h2, m.get(p + ".fc1.w"), m.get(p + ".fc1.b"))),
                          m.get(p + ".fc2.w"), m.get(p + ".fc2.b"));
  return add(x1, f);
}

}  // namespace sparsecap::detail
