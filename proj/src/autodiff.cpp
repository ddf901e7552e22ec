#include "sparsecap/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "kernels.hpp"

namespace sparsecap {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
T Var<T>::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value.data[0];
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (const T v : t.data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

template <typename T>
Var<T> record(const char* op, Tensor<T> value, std::vector<Var<T>> inputs,
              std::function<void(Node<T>&)> bw) {
  check_finite(value, op);
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  if (g_grad_enabled) {
    for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (const auto& in : inputs) n->inputs.push_back(in.shared());
    n->backward = std::move(bw);
  }
  return Var<T>(std::move(n));
}

// Grad buffer of input `i`, or nullptr when that input is not differentiated.
template <typename T>
T* input_grad(Node<T>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

template <typename T>
void require_2d(const Var<T>& x, const char* op) {
  if (x.shape().size() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_str(x.shape()));
  }
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor<T> out({m, n});
  kernels::gemm_nn(a.value().data.data(), b.value().data.data(), out.data.data(), m, k, n, false);
  return record<T>("matmul", std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    const T* dc = self.grad.data();
    const auto& av = self.inputs[0]->value.data;
    const auto& bv = self.inputs[1]->value.data;
    if (T* da = input_grad(self, 0)) kernels::gemm_nt(dc, bv.data(), da, m, n, k, true);
    if (T* db = input_grad(self, 1)) kernels::gemm_tn(av.data(), dc, db, m, k, n, true);
  });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  Tensor<T> out({m, n});
  kernels::gemm_nt(a.value().data.data(), b.value().data.data(), out.data.data(), m, k, n, false);
  return record<T>("matmul_nt", std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    const T* dc = self.grad.data();
    const auto& av = self.inputs[0]->value.data;
    const auto& bv = self.inputs[1]->value.data;
    // C = A Bᵀ: dA = dC B, dB = dCᵀ A
    if (T* da = input_grad(self, 0)) kernels::gemm_nn(dc, bv.data(), da, m, n, k, true);
    if (T* db = input_grad(self, 1)) kernels::gemm_tn(dc, av.data(), db, m, n, k, true);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] + b.value().data[i];
  return record<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* d = input_grad(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] * b.value().data[i];
  return record<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value.data;
    const auto& bv = self.inputs[1]->value.data;
    if (T* da = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i] * bv[i];
    if (T* db = input_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) db[i] += self.grad[i] * av[i];
  });
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  const std::size_t c = x.value().cols();
  if (bias.size() != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match rows of " +
                         shape_str(x.shape()));
  }
  Tensor<T> out = x.value();
  const std::size_t r = out.rows();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += bias.value().data[j];
  return record<T>("add_bias", std::move(out), {x, bias}, [r, c](Node<T>& self) {
    if (T* dx = input_grad(self, 0))
      for (std::size_t i = 0; i < r * c; ++i) dx[i] += self.grad[i];
    if (T* db = input_grad(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) db[j] += self.grad[i * c + j];
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.data) v *= factor;
  return record<T>("scale", std::move(out), {x}, [factor](Node<T>& self) {
    if (T* dx = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += factor * self.grad[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T offset) {
  Tensor<T> out = x.value();
  for (auto& v : out.data) v += offset;
  return record<T>("add_scalar", std::move(out), {x}, [](Node<T>& self) {
    if (T* dx = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
  });
}

namespace {

template <typename T>
T sigmoid_scalar(T x) {
  // Branches keep exp() from overflowing for large |x|.
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <typename T>
T gelu_scalar(T x) {
  const T u = T(kGeluC) * (x + T(kGeluA) * x * x * x);
  return T(0.5) * x * (T{1} + std::tanh(u));
}

template <typename T>
T gelu_derivative(T x) {
  const T u = T(kGeluC) * (x + T(kGeluA) * x * x * x);
  const T th = std::tanh(u);
  const T du = T(kGeluC) * (T{1} + T(3 * kGeluA) * x * x);
  return T(0.5) * (T{1} + th) + T(0.5) * x * (T{1} - th * th) * du;
}

const char* unary_name(UnaryKind kind) {
  switch (kind) {
    case UnaryKind::kSigmoid: return "sigmoid";
    case UnaryKind::kGelu: return "gelu";
    case UnaryKind::kAbs: return "abs";
    case UnaryKind::kLog: return "log";
  }
  return "unary";
}

}  // namespace

template <typename T>
Var<T> unary(const Var<T>& x, UnaryKind kind) {
  const auto& xv = x.value().data;
  for (const T v : xv) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite input to ") + unary_name(kind));
  }
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    switch (kind) {
      case UnaryKind::kSigmoid: out.data[i] = sigmoid_scalar(v); break;
      case UnaryKind::kGelu: out.data[i] = gelu_scalar(v); break;
      case UnaryKind::kAbs: out.data[i] = std::abs(v); break;
      case UnaryKind::kLog:
        if (v <= T{0}) throw NumericError("log of non-positive value");
        out.data[i] = std::log(v);
        break;
    }
  }
  return record<T>(unary_name(kind), std::move(out), {x}, [kind](Node<T>& self) {
    T* dx = input_grad(self, 0);
    if (!dx) return;
    const auto& in = self.inputs[0]->value.data;
    const auto& y = self.value.data;
    for (std::size_t i = 0; i < y.size(); ++i) {
      T d{};
      switch (kind) {
        case UnaryKind::kSigmoid: d = y[i] * (T{1} - y[i]); break;
        case UnaryKind::kGelu: d = gelu_derivative(in[i]); break;
        case UnaryKind::kAbs: d = in[i] > T{0} ? T{1} : (in[i] < T{0} ? T{-1} : T{0}); break;
        case UnaryKind::kLog: d = T{1} / in[i]; break;
      }
      dx[i] += d * self.grad[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s{0};
  for (const T v : x.value().data) s += v;
  return record<T>("sum", Tensor<T>({1}, {s}), {x}, [](Node<T>& self) {
    if (T* dx = input_grad(self, 0)) {
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) dx[i] += self.grad[0];
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.size();
  T s{0};
  for (const T v : x.value().data) s += v;
  return record<T>("mean", Tensor<T>({1}, {s / static_cast<T>(n)}), {x}, [n](Node<T>& self) {
    if (T* dx = input_grad(self, 0)) {
      const T g = self.grad[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) dx[i] += g;
    }
  });
}

template <typename T>
Var<T> masked_softmax(const Var<T>& logits, const Var<T>& bias) {
  const std::size_t cols = logits.value().cols();
  const std::size_t rows = logits.value().rows();
  const bool broadcast = bias.size() == cols && bias.shape() != logits.shape();
  if (!broadcast && bias.shape() != logits.shape()) {
    throw DimensionError("masked_softmax: bias " + shape_str(bias.shape()) +
                         " is not broadcast-compatible with " + shape_str(logits.shape()));
  }
  const T blocked = -static_cast<T>(kBlocked);
  const auto& lv = logits.value().data;
  const auto& bv = bias.value().data;
  Tensor<T> out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* l = lv.data() + r * cols;
    const T* b = bv.data() + (broadcast ? 0 : r * cols);
    T* o = out.data.data() + r * cols;
    bool any_open = false;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      any_open = any_open || b[c] > blocked;
      o[c] = l[c] + b[c];
      mx = std::max(mx, o[c]);
    }
    if (!any_open) {
      throw DegenerateRowError("masked_softmax: row " + std::to_string(r) +
                               " has every entry blocked");
    }
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(o[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return record<T>("masked_softmax", std::move(out), {logits, bias},
                   [rows, cols, broadcast](Node<T>& self) {
    T* dl = input_grad(self, 0);
    T* db = input_grad(self, 1);
    const auto& p = self.value.data;
    std::vector<T> dz(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* pr = p.data() + r * cols;
      const T* gr = self.grad.data() + r * cols;
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += pr[c] * gr[c];
      for (std::size_t c = 0; c < cols; ++c) dz[c] = pr[c] * (gr[c] - dot);
      if (dl)
        for (std::size_t c = 0; c < cols; ++c) dl[r * cols + c] += dz[c];
      if (db) {
        T* dbr = db + (broadcast ? 0 : r * cols);
        for (std::size_t c = 0; c < cols; ++c) dbr[c] += dz[c];
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const std::size_t d = x.value().cols();
  if (x.shape().empty() || d == 0) throw DimensionError("layer_norm over an empty axis");
  if (!(eps > T{0})) throw NumericError("layer_norm: eps must be positive");
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " vs feature size " + std::to_string(d));
  }
  const std::size_t rows = x.value().rows();
  const auto& xv = x.value().data;
  const auto& g = gamma.value().data;
  const auto& b = beta.value().data;
  Tensor<T> out(x.shape());
  // Cache of normalised inputs and inverse std-devs for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out.data[r * d + j] = h * g[j] + b[j];
    }
  }
  return record<T>("layer_norm", std::move(out), {x, gamma, beta},
                   [rows, d, xhat, inv_std](Node<T>& self) {
    T* dx = input_grad(self, 0);
    T* dg = input_grad(self, 1);
    T* dbeta = input_grad(self, 2);
    const auto& g = self.inputs[1]->value.data;
    const auto& h = *xhat;
    std::vector<T> dh(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = self.grad.data() + r * d;
      const T* hr = h.data() + r * d;
      if (dg)
        for (std::size_t j = 0; j < d; ++j) dg[j] += gr[j] * hr[j];
      if (dbeta)
        for (std::size_t j = 0; j < d; ++j) dbeta[j] += gr[j];
      if (!dx) continue;
      T mean_dh{0}, mean_dh_h{0};
      for (std::size_t j = 0; j < d; ++j) {
        dh[j] = gr[j] * g[j];
        mean_dh += dh[j];
        mean_dh_h += dh[j] * hr[j];
      }
      mean_dh /= static_cast<T>(d);
      mean_dh_h /= static_cast<T>(d);
      for (std::size_t j = 0; j < d; ++j)
        dx[r * d + j] += (*inv_std)[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
    }
  });
}

template <typename T>
Var<T> embedding(const Var<T>& table, std::span<const std::int32_t> ids) {
  require_2d(table, "embedding");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  auto id_copy = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  if (id_copy->empty()) throw DimensionError("embedding: no ids");
  Tensor<T> out({id_copy->size(), d});
  for (std::size_t i = 0; i < id_copy->size(); ++i) {
    const auto id = (*id_copy)[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(id) + " outside table of " +
                           std::to_string(vocab) + " rows");
    }
    std::copy_n(table.value().data.data() + id * d, d, out.data.data() + i * d);
  }
  return record<T>("embedding", std::move(out), {table}, [id_copy, d](Node<T>& self) {
    if (T* dt = input_grad(self, 0))
      for (std::size_t i = 0; i < id_copy->size(); ++i)
        for (std::size_t j = 0; j < d; ++j) dt[(*id_copy)[i] * d + j] += self.grad[i * d + j];
  });
}

template <typename T>
Var<T> cross_entropy_mlm(const Var<T>& logits, std::span<const std::int32_t> targets,
                         std::span<const std::uint8_t> supervised) {
  require_2d(logits, "cross_entropy_mlm");
  const std::size_t n = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != n || supervised.size() != n) {
    throw DimensionError("cross_entropy_mlm: " + std::to_string(n) + " rows but " +
                         std::to_string(targets.size()) + " targets and " +
                         std::to_string(supervised.size()) + " supervision flags");
  }
  std::size_t count = 0;
  for (auto s : supervised) count += s ? 1 : 0;
  if (count == 0) throw EmptySupervisionError("cross_entropy_mlm: no supervised positions");

  // Softmax of supervised rows, kept for backward.
  auto probs = std::make_shared<std::vector<T>>(n * v, T{0});
  auto tgt = std::make_shared<std::vector<std::int32_t>>(targets.begin(), targets.end());
  auto sup = std::make_shared<std::vector<std::uint8_t>>(supervised.begin(), supervised.end());
  const auto& lv = logits.value().data;
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    if (!supervised[i]) continue;
    const auto t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw DimensionError("cross_entropy_mlm: target " + std::to_string(t) + " outside vocab");
    }
    const T* l = lv.data() + i * v;
    T mx = *std::max_element(l, l + v);
    T z{0};
    for (std::size_t j = 0; j < v; ++j) z += std::exp(l[j] - mx);
    const T lse = mx + std::log(z);
    total += lse - l[t];
    for (std::size_t j = 0; j < v; ++j) (*probs)[i * v + j] = std::exp(l[j] - lse);
  }
  const T loss = total / static_cast<T>(count);
  return record<T>("cross_entropy_mlm", Tensor<T>({1}, {loss}), {logits},
                   [probs, tgt, sup, n, v, count](Node<T>& self) {
    T* dl = input_grad(self, 0);
    if (!dl) return;
    const T g = self.grad[0] / static_cast<T>(count);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(*sup)[i]) continue;
      for (std::size_t j = 0; j < v; ++j) dl[i * v + j] += g * (*probs)[i * v + j];
      dl[i * v + (*tgt)[i]] -= g;
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t row0, std::size_t nrows, std::size_t col0,
             std::size_t ncols) {
  require_2d(x, "slice");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (row0 + nrows > r || col0 + ncols > c || nrows == 0 || ncols == 0) {
    throw DimensionError("slice [" + std::to_string(row0) + "+" + std::to_string(nrows) + ", " +
                         std::to_string(col0) + "+" + std::to_string(ncols) + "] out of " +
                         shape_str(x.shape()));
  }
  Tensor<T> out({nrows, ncols});
  for (std::size_t i = 0; i < nrows; ++i)
    std::copy_n(x.value().data.data() + (row0 + i) * c + col0, ncols, out.data.data() + i * ncols);
  return record<T>("slice", std::move(out), {x}, [=](Node<T>& self) {
    if (T* dx = input_grad(self, 0))
      for (std::size_t i = 0; i < nrows; ++i)
        for (std::size_t j = 0; j < ncols; ++j)
          dx[(row0 + i) * c + col0 + j] += self.grad[i * ncols + j];
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t c = parts[0].value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.value().cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.shape()[0];
  }
  Tensor<T> out({rows, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + off);
    off += p.size();
  }
  return record<T>("concat_rows", std::move(out), parts, [](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t n = self.inputs[k]->value.size();
      if (T* d = input_grad(self, k))
        for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[off + i];
      off += n;
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t r = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.shape()[0] != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.shape()[1]);
    cols += p.shape()[1];
  }
  Tensor<T> out({r, cols});
  std::size_t c0 = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(parts[k].value().data.data() + i * widths[k], widths[k],
                  out.data.data() + i * cols + c0);
    c0 += widths[k];
  }
  return record<T>("concat_cols", std::move(out), parts, [r, cols, widths](Node<T>& self) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (T* d = input_grad(self, k))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            d[i * widths[k] + j] += self.grad[i * cols + c0 + j];
      c0 += widths[k];
    }
  });
}

template <typename T>
Var<T> repeat_rows(const Var<T>& x, std::size_t times) {
  if (times == 0) throw DimensionError("repeat_rows: zero repetitions");
  require_2d(x, "repeat_rows");
  const std::size_t n = x.size();
  Tensor<T> out({x.shape()[0] * times, x.shape()[1]});
  for (std::size_t t = 0; t < times; ++t)
    std::copy(x.value().data.begin(), x.value().data.end(), out.data.begin() + t * n);
  return record<T>("repeat_rows", std::move(out), {x}, [n, times](Node<T>& self) {
    if (T* dx = input_grad(self, 0))
      for (std::size_t t = 0; t < times; ++t)
        for (std::size_t i = 0; i < n; ++i) dx[i] += self.grad[t * n + i];
  });
}

template <typename T>
Var<T> overlay(const Tensor<T>& base, const Var<T>& block, std::size_t row0, std::size_t col0) {
  require_2d(block, "overlay");
  if (base.rank() != 2) throw DimensionError("overlay: base must be 2-D");
  const std::size_t br = block.shape()[0], bc = block.shape()[1], c = base.shape[1];
  if (row0 + br > base.shape[0] || col0 + bc > c) {
    throw DimensionError("overlay: block " + shape_str(block.shape()) + " at (" +
                         std::to_string(row0) + "," + std::to_string(col0) + ") exceeds " +
                         shape_str(base.shape));
  }
  Tensor<T> out = base;
  for (std::size_t i = 0; i < br; ++i)
    std::copy_n(block.value().data.data() + i * bc, bc, out.data.data() + (row0 + i) * c + col0);
  return record<T>("overlay", std::move(out), {block}, [=](Node<T>& self) {
    if (T* d = input_grad(self, 0))
      for (std::size_t i = 0; i < br; ++i)
        for (std::size_t j = 0; j < bc; ++j) d[i * bc + j] += self.grad[(row0 + i) * c + col0 + j];
  });
}

template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  if (!root.defined() || !root.requires_grad()) return order;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS; frames hold (node, next input index).
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined() || root.size() != 1) {
    throw DimensionError("backward: root must be a scalar, got " +
                         (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  }
  if (!root.requires_grad()) return;
  const auto order = topological_order(root);
  for (Node<T>* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), T{0});
  }
  root.node()->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

#define SPARSECAP_INSTANTIATE(T)                                                                \
  template class Var<T>;                                                                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                         \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                            \
  template Var<T> add_bias(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale(const Var<T>&, T);                                                      \
  template Var<T> add_scalar(const Var<T>&, T);                                                 \
  template Var<T> unary(const Var<T>&, UnaryKind);                                              \
  template Var<T> sum(const Var<T>&);                                                           \
  template Var<T> mean(const Var<T>&);                                                          \
  template Var<T> masked_softmax(const Var<T>&, const Var<T>&);                                 \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                   \
  template Var<T> embedding(const Var<T>&, std::span<const std::int32_t>);                      \
  template Var<T> cross_entropy_mlm(const Var<T>&, std::span<const std::int32_t>,               \
                                    std::span<const std::uint8_t>);                             \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t, std::size_t);     \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                                      \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                                      \
  template Var<T> repeat_rows(const Var<T>&, std::size_t);                                      \
  template Var<T> overlay(const Tensor<T>&, const Var<T>&, std::size_t, std::size_t);           \
  template void backward(const Var<T>&);                                                        \
  template std::vector<Node<T>*> topological_order(const Var<T>&);

SPARSECAP_INSTANTIATE(float)
SPARSECAP_INSTANTIATE(double)

#undef SPARSECAP_INSTANTIATE

}  // namespace sparsecap
