#include "sparsecap/mask_tools.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sparsecap {

MaskGrid::MaskGrid(GridDims g, double fill) : grid(g), values(g.tokens() * g.tokens(), fill) {}

MaskGrid::MaskGrid(GridDims g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (values.size() != m() * m()) {
    throw DimensionError("mask of " + std::to_string(values.size()) + " values for a grid of " +
                         std::to_string(m()) + " tokens");
  }
}

template <typename T>
MaskGrid mask_from_logits(const Tensor<T>& p, GridDims grid) {
  const std::size_t m = grid.tokens();
  if (p.shape != Shape{m, m}) {
    throw DimensionError("mask logits " + shape_str(p.shape) + " do not match grid of " +
                         std::to_string(m) + " tokens");
  }
  MaskGrid out(grid, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.values[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(p.data[i])));
  }
  return out;
}

template <typename T>
Tensor<T> logits_from_mask(const MaskGrid& mask) {
  Tensor<T> out({mask.m(), mask.m()});
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    const double v = std::clamp(mask.values[i], 1e-6, 1.0 - 1e-6);
    out.data[i] = static_cast<T>(std::log(v / (1.0 - v)));
  }
  return out;
}

MaskGrid binarize(const MaskGrid& mask, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error("binarize: threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  MaskGrid out = mask;
  for (auto& v : out.values) v = v >= threshold ? 1.0 : 0.0;
  return out;
}

namespace {

// Source blocks and weight for target block i when resampling t -> t_new.
struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> temporal_taps(std::size_t t, std::size_t t_new) {
  std::vector<Tap> taps(t_new);
  for (std::size_t i = 0; i < t_new; ++i) {
    if (t == 1 || t_new == 1) {
      taps[i] = {0, 0, 0.0};
      continue;
    }
    const double q = static_cast<double>(i) * static_cast<double>(t - 1) / static_cast<double>(t_new - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(q));
    if (lo >= t - 1) lo = t - 1;
    const std::size_t hi = std::min(lo + 1, t - 1);
    taps[i] = {lo, hi, q - static_cast<double>(lo)};
  }
  return taps;
}

double lerp(double a, double b, double f) { return f == 0.0 ? a : a + (b - a) * f; }

}  // namespace

MaskGrid interpolate_mask_temporal(const MaskGrid& mask, std::size_t t_new) {
  if (t_new < 1) throw Error("interpolate_mask_temporal: t_new must be at least 1");
  const GridDims g = mask.grid;
  if (t_new == g.t) return mask;
  const std::size_t s = g.spatial();
  const std::size_t m_old = g.tokens();
  GridDims ng{t_new, g.h, g.w};
  MaskGrid out(ng, 0.0);
  const std::size_t m_new = ng.tokens();
  auto src = [&](std::size_t ta, std::size_t sa, std::size_t tb, std::size_t sb) {
    return mask.values[(ta * s + sa) * m_old + tb * s + sb];
  };

  if (t_new == 1) {
    // Temporal mean over both axes.
    for (std::size_t sa = 0; sa < s; ++sa)
      for (std::size_t sb = 0; sb < s; ++sb) {
        // Running mean stays exact on constant input.
        double mean = 0.0, k = 0.0;
        for (std::size_t ta = 0; ta < g.t; ++ta)
          for (std::size_t tb = 0; tb < g.t; ++tb) mean += (src(ta, sa, tb, sb) - mean) / ++k;
        out.values[sa * m_new + sb] = std::clamp(mean, 0.0, 1.0);
      }
    return out;
  }

  const auto taps = temporal_taps(g.t, t_new);
  for (std::size_t ia = 0; ia < t_new; ++ia) {
    const Tap a = taps[ia];
    for (std::size_t ib = 0; ib < t_new; ++ib) {
      const Tap b = taps[ib];
      for (std::size_t sa = 0; sa < s; ++sa)
        for (std::size_t sb = 0; sb < s; ++sb) {
          const double top = lerp(src(a.lo, sa, b.lo, sb), src(a.lo, sa, b.hi, sb), b.frac);
          const double bot = lerp(src(a.hi, sa, b.lo, sb), src(a.hi, sa, b.hi, sb), b.frac);
          out.values[(ia * s + sa) * m_new + ib * s + sb] = std::clamp(lerp(top, bot, a.frac), 0.0, 1.0);
        }
    }
  }
  return out;
}

template <typename T>
Tensor<T> interpolate_rows_temporal(const Tensor<T>& table, GridDims grid, std::size_t t_new) {
  if (t_new < 1) throw Error("interpolate_rows_temporal: t_new must be at least 1");
  const std::size_t s = grid.spatial();
  const std::size_t c = table.cols();
  if (table.rows() != grid.tokens()) {
    throw DimensionError("table " + shape_str(table.shape) + " does not match grid of " +
                         std::to_string(grid.tokens()) + " tokens");
  }
  if (t_new == grid.t) return table;
  Tensor<T> out({t_new * s, c});
  if (t_new == 1) {
    for (std::size_t sa = 0; sa < s; ++sa)
      for (std::size_t k = 0; k < c; ++k) {
        double mean = 0.0;
        for (std::size_t ta = 0; ta < grid.t; ++ta)
          mean += (static_cast<double>(table(ta * s + sa, k)) - mean) / static_cast<double>(ta + 1);
        out(sa, k) = static_cast<T>(mean);
      }
    return out;
  }
  const auto taps = temporal_taps(grid.t, t_new);
  for (std::size_t i = 0; i < t_new; ++i)
    for (std::size_t sa = 0; sa < s; ++sa)
      for (std::size_t k = 0; k < c; ++k) {
        out(i * s + sa, k) = static_cast<T>(
            lerp(table(taps[i].lo * s + sa, k), table(taps[i].hi * s + sa, k), taps[i].frac));
      }
  return out;
}

MaskGrid heuristic_mask(HeuristicKind kind, std::size_t w, GridDims grid) {
  if (w < 1) throw Error("heuristic_mask: window must be at least 1");
  MaskGrid out(grid, 0.0);
  const std::size_t s = grid.spatial();
  const std::size_t m = grid.tokens();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t ti = i / s, si = i % s;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t tj = j / s, sj = j % s;
      bool on = false;
      if (kind == HeuristicKind::kSpatialWindow) {
        on = ti == tj && (si > sj ? si - sj : sj - si) <= w;
      } else {
        on = si == sj && (ti > tj ? ti - tj : tj - ti) <= w;
      }
      out.values[i * m + j] = on ? 1.0 : 0.0;
    }
  }
  return out;
}

SparsityStats sparsity_stats(const MaskGrid& mask, double zero_threshold) {
  SparsityStats st;
  if (mask.values.empty()) return st;
  std::size_t below_zero = 0, below_half = 0;
  double total = 0.0;
  for (const double v : mask.values) {
    total += v;
    below_zero += v < zero_threshold;
    below_half += v < 0.5;
  }
  const double n = static_cast<double>(mask.values.size());
  st.mean_activation = total / n;
  st.frac_below_zero = static_cast<double>(below_zero) / n;
  st.frac_below_half = static_cast<double>(below_half) / n;
  return st;
}

void export_mask(const MaskGrid& mask, const std::filesystem::path& path, MaskFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t m = mask.m();
  if (format == MaskFormat::kPgm) {
    out << "P5\n" << m << ' ' << m << "\n255\n";
    std::vector<unsigned char> px(mask.values.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = static_cast<unsigned char>(std::lround(std::clamp(mask.values[i], 0.0, 1.0) * 255.0));
    }
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  } else {
    out << "# grid " << mask.grid.t << ',' << mask.grid.h << ',' << mask.grid.w << '\n';
    char buf[32];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        std::snprintf(buf, sizeof buf, "%.6f", mask.at(i, j));
        if (j) out << ',';
        out << buf;
      }
      out << '\n';
    }
  }
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

MaskGrid read_mask_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  GridDims g;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "# grid %zu,%zu,%zu", &g.t, &g.h, &g.w) != 3) {
    throw FormatError(path.string() + ": missing '# grid t,h,w' header");
  }
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
      }
    }
  }
  return MaskGrid(g, std::move(values));
}

template MaskGrid mask_from_logits(const Tensor<float>&, GridDims);
template MaskGrid mask_from_logits(const Tensor<double>&, GridDims);
template Tensor<float> logits_from_mask(const MaskGrid&);
template Tensor<double> logits_from_mask(const MaskGrid&);
template Tensor<float> interpolate_rows_temporal(const Tensor<float>&, GridDims, std::size_t);
template Tensor<double> interpolate_rows_temporal(const Tensor<double>&, GridDims, std::size_t);

}  // namespace sparsecap
