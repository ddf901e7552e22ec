#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sparsecap/checkpoint.hpp"
#include "sparsecap/data.hpp"
#include "sparsecap/decode.hpp"
#include "sparsecap/errors.hpp"
#include "sparsecap/mask_tools.hpp"
#include "sparsecap/metrics.hpp"
#include "sparsecap/training.hpp"

namespace py = pybind11;
using namespace sparsecap;

namespace {

py::array_t<float> clip_array(const VideoClip& c) {
  py::array_t<float> out({c.frames, c.height, c.width, std::size_t{3}});
  std::copy(c.pixels.begin(), c.pixels.end(), out.mutable_data());
  return out;
}

VideoClip array_clip(py::array_t<float, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 4 || a.shape(3) != 3) throw DimensionError("clip array must be T x H x W x 3");
  VideoClip c(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), c.pixels.begin());
  return c;
}

py::array_t<double> mask_array(const MaskGrid& m) {
  py::array_t<double> out({m.m(), m.m()});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

MaskGrid array_mask(py::array_t<double, py::array::c_style | py::array::forcecast> a, GridDims g) {
  if (a.ndim() != 2 || a.shape(0) != static_cast<py::ssize_t>(g.tokens()) || a.shape(1) != a.shape(0)) {
    throw DimensionError("mask array must be M x M with M = t*h*w");
  }
  return MaskGrid(g, std::vector<double>(a.data(), a.data() + a.size()));
}

GridDims grid_of(py::tuple t) {
  if (t.size() != 3) throw DimensionError("grid must be (t, h, w)");
  return GridDims{t[0].cast<std::size_t>(), t[1].cast<std::size_t>(), t[2].cast<std::size_t>()};
}

py::dict bundle_dict(const MetricBundle& m) {
  py::dict d;
  d["bleu4"] = m.bleu4;
  d["rouge_l"] = m.rouge_l;
  d["cider_d"] = m.cider_d;
  return d;
}

}  // namespace

PYBIND11_MODULE(_sparsecap, mod) {
  mod.doc() = "Sparse-attention video captioning on synthetic clips";

  auto base = py::register_exception<Error>(mod, "Error");
  py::register_exception<DimensionError>(mod, "DimensionError", base.ptr());
  py::register_exception<ConfigError>(mod, "ConfigError", base.ptr());
  py::register_exception<IoError>(mod, "IoError", base.ptr());
  py::register_exception<FormatError>(mod, "FormatError", base.ptr());

  py::class_<Vocabulary>(mod, "Vocabulary")
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def("lookup", &Vocabulary::lookup)
      .def("decode", &Vocabulary::decode)
      .def("__len__", &Vocabulary::size);
  mod.def("build_vocab", &build_vocab, py::arg("corpus"), py::arg("min_freq") = 1);
  mod.def(
      "encode_caption",
      [](const std::string& text, const Vocabulary& v, std::size_t n) { return encode_caption(text, v, n).ids; },
      py::arg("text"), py::arg("vocab"), py::arg("n"));

  mod.def(
      "generate_clip",
      [](std::uint64_t seed, std::size_t frames, std::size_t height, std::size_t width, int radius) {
        GeneratorConfig g;
        g.frames = frames;
        g.height = height;
        g.width = width;
        g.radius = radius;
        auto out = generate_clip(seed, g);
        return py::make_tuple(clip_array(out.clip), out.caption);
      },
      py::arg("seed"), py::arg("frames") = 8, py::arg("height") = 64, py::arg("width") = 64,
      py::arg("radius") = 6);
  mod.def("shuffle_frames", [](py::array_t<float> a, std::uint64_t seed) {
    return clip_array(shuffle_frames(array_clip(a), seed));
  });

  mod.def(
      "score",
      [](const std::vector<std::string>& pred, const std::vector<std::vector<std::string>>& refs) {
        return bundle_dict(score_corpus(make_corpus(pred, refs)));
      },
      py::arg("predictions"), py::arg("references"));
  mod.def("evaluate_files", [](const std::filesystem::path& p, const std::filesystem::path& r) {
    return bundle_dict(run_eval(p, r));
  });

  mod.def(
      "binarize",
      [](py::array_t<double> m, py::tuple grid, double threshold) {
        return mask_array(binarize(array_mask(m, grid_of(grid)), threshold));
      },
      py::arg("mask"), py::arg("grid"), py::arg("threshold") = 0.5);
  mod.def(
      "interpolate_mask",
      [](py::array_t<double> m, py::tuple grid, std::size_t t_new) {
        return mask_array(interpolate_mask_temporal(array_mask(m, grid_of(grid)), t_new));
      },
      py::arg("mask"), py::arg("grid"), py::arg("t_new"));
  mod.def(
      "sparsity_stats",
      [](py::array_t<double> m, py::tuple grid) {
        const auto s = sparsity_stats(array_mask(m, grid_of(grid)));
        py::dict d;
        d["mean_activation"] = s.mean_activation;
        d["frac_below_0.01"] = s.frac_below_zero;
        d["frac_below_0.5"] = s.frac_below_half;
        return d;
      },
      py::arg("mask"), py::arg("grid"));

  py::class_<CaptionModel<float>>(mod, "Model")
      .def_static(
          "load",
          [](const std::filesystem::path& p) {
            return std::make_unique<CaptionModel<float>>(model_from_checkpoint<float>(load_checkpoint(p)));
          })
      .def("save", [](const CaptionModel<float>& m, const std::filesystem::path& p) {
        save_checkpoint(p, make_checkpoint(m));
      })
      .def_property_readonly("video_tokens", &CaptionModel<float>::video_tokens)
      .def_property_readonly("text_len", &CaptionModel<float>::text_len)
      .def_property_readonly("grid",
                             [](const CaptionModel<float>& m) {
                               const auto g = m.grid();
                               return py::make_tuple(g.t, g.h, g.w);
                             })
      .def("mask", [](const CaptionModel<float>& m) { return mask_array(effective_mask(m)); })
      .def(
          "caption",
          [](const CaptionModel<float>& m, py::array_t<float> clip) {
            return greedy_decode(m, array_clip(clip), DecodeConfig{});
          },
          py::arg("clip"));

  mod.def(
      "train",
      [](const std::string& config_text, const std::string& out_dir) {
        const RunConfig cfg = parse_run_config(config_text);
        const Dataset data = open_dataset(cfg);
        TrainOptions opts;
        opts.out_dir = out_dir;
        RunOutput out;
        {
          py::gil_scoped_release release;
          out = train_from_config(cfg, data, opts);
        }
        py::list rows;
        for (const auto& r : out.result.log) {
          py::dict d;
          d["step"] = r.step;
          d["l_mlm"] = r.l_mlm;
          d["l_sparse"] = r.l_sparse;
          d["mask_mean_activation"] = r.mask_mean_activation;
          d["frac_below_0.01"] = r.frac_below_001;
          if (r.val_cider) d["val_cider"] = *r.val_cider;
          rows.append(d);
        }
        return py::make_tuple(std::move(out.model), rows);
      },
      py::arg("config"), py::arg("out_dir") = "");
}
