// Python bindings: metrics, losses, data generation, augmentation and the
// command entry points, operating on numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "unetplus/augment.hpp"
#include "unetplus/checkpoint.hpp"
#include "unetplus/commands.hpp"
#include "unetplus/layers.hpp"
#include "unetplus/metrics.hpp"

namespace py = pybind11;
using namespace unetplus;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor(const Array<T>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) return Tensor<T>::scalar(*a.data());
  return Tensor<T>(std::move(shape), std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
Array<T> to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array<T> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<std::uint8_t> to_bits(const Array<std::uint8_t>& a) { return {a.data(), a.data() + a.size()}; }

Mask to_mask(const Array<std::uint8_t>& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be 2-D");
  Mask m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.labels.begin());
  return m;
}

Array<std::uint8_t> from_mask(const Mask& m) {
  Array<std::uint8_t> out({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width)});
  std::copy(m.labels.begin(), m.labels.end(), out.mutable_data());
  return out;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  py::list classes;
  for (const auto& c : r.classes) {
    py::dict row;
    row["class_id"] = c.class_id;
    row["iou"] = c.iou;
    row["dice"] = c.dice;
    classes.append(row);
  }
  d["classes"] = classes;
  d["mean_iou"] = r.mean_iou;
  d["mean_dice"] = r.mean_dice;
  d["no_foreground"] = r.no_foreground;
  d["loss"] = r.loss;
  d["epoch"] = r.epoch;
  return d;
}

RunConfig config_from(const std::string& text, const py::dict& overrides) {
  RunConfig cfg = parse_run_config(text);
  for (const auto& [k, v] : overrides) cfg.set(py::str(k), py::str(v));
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Small U-Net style segmentation toolkit";

  // Translators run newest first, so the base class goes in first.
  const auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  const auto io_error = py::register_exception<IoError>(m, "IoError", error);
  py::register_exception<CheckpointError>(m, "CheckpointError", io_error);
  py::register_exception<FormatError>(m, "FormatError", io_error);
  py::register_exception<ShapeError>(m, "ShapeError", error);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<LabelError>(m, "LabelError", error);

  m.def("iou", [](const Array<std::uint8_t>& t, const Array<std::uint8_t>& p) { return iou_hard(to_bits(t), to_bits(p)); },
        py::arg("truth"), py::arg("pred"));
  m.def("dice", [](const Array<std::uint8_t>& t, const Array<std::uint8_t>& p) { return dice(to_bits(t), to_bits(p)); },
        py::arg("truth"), py::arg("pred"));
  m.def("soft_jaccard", [](const Array<double>& z, const Array<double>& p) { return soft_jaccard(to_tensor(z), to_tensor(p)); },
        py::arg("truth"), py::arg("probs"));
  m.def("bce", [](const Array<double>& z, const Array<double>& p) { return bce(to_tensor(z), to_tensor(p)); },
        py::arg("truth"), py::arg("probs"));
  m.def("combined_loss",
        [](const Array<double>& z, const Array<double>& x) { return combined_loss(to_tensor(z), to_tensor(x)); },
        py::arg("targets"), py::arg("logits"), "targets and logits are [N, C, H, W]");
  m.def("multiclass_report",
        [](const Array<std::uint8_t>& t, const Array<std::uint8_t>& p, std::size_t labels) {
          return report_dict(multiclass_report(to_mask(t), to_mask(p), labels));
        },
        py::arg("truth"), py::arg("pred"), py::arg("label_count"));

  m.def("nn_upsample",
        [](const Array<double>& x, std::size_t theta) {
          Tape<double> t;
          return to_array(nn_upsample(t.constant(to_tensor(x)), theta).value());
        },
        py::arg("x"), py::arg("theta"));
  m.def("checkerboard_energy", [](const Array<double>& map) { return checkerboard_energy(to_tensor(map)); },
        py::arg("map"));

  m.def("parameter_count",
        [](const std::string& encoder, std::size_t base, std::size_t depth, const std::string& decoder,
           std::size_t classes) {
          ModelSpec s;
          s.encoder = parse_encoder_kind(encoder);
          s.base_channels = base;
          s.depth = depth;
          s.decoder = parse_decoder_mode(decoder);
          s.num_classes = classes;
          return build_model<float>(s, 0).parameter_count();
        },
        py::arg("encoder") = "vgg11-mini", py::arg("base_channels") = 16, py::arg("depth") = 4,
        py::arg("decoder") = "nearest", py::arg("num_classes") = 1);

  m.def("gen_synthetic",
        [](std::size_t n, std::size_t size, const std::string& mode, std::uint64_t seed) {
          DatasetConfig cfg;
          cfg.n_samples = n;
          cfg.image_size = size;
          cfg.mode = parse_label_mode(mode);
          cfg.seed = seed;
          cfg.validate();
          py::list out;
          for (const auto& s : gen_synthetic(cfg)) out.append(py::make_tuple(to_array(s.image), from_mask(s.mask)));
          return out;
        },
        py::arg("n") = 20, py::arg("image_size") = 64, py::arg("mode") = "binary", py::arg("seed") = 0);

  m.def("augment",
        [](const Array<float>& image, const Array<std::uint8_t>& mask, std::uint64_t seed, double alpha, double sigma,
           bool affine) {
          ElasticConfig e;
          e.alpha = alpha;
          e.sigma = sigma;
          const SegSample s{to_tensor(image), to_mask(mask)};
          const auto out = augment_sample(s, affine ? AffineConfig::standard() : AffineConfig{}, e, seed);
          return py::make_tuple(to_array(out.image), from_mask(out.mask));
        },
        py::arg("image"), py::arg("mask"), py::arg("seed"), py::arg("alpha") = 8.0, py::arg("sigma") = 6.0,
        py::arg("affine") = true);

  m.def("default_config", [] { return format_run_config(RunConfig{}); });

  m.def("train",
        [](const std::string& text, const py::dict& overrides) {
          const RunConfig cfg = config_from(text, overrides);
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = cmd_train(cfg);
          }
          py::dict d;
          d["epochs"] = r.epochs.size();
          d["best_epoch"] = r.best_epoch;
          d["best"] = report_dict(r.best);
          d["checkpoint"] = r.checkpoint_path;
          d["metrics"] = r.metrics_path;
          d["manifest"] = r.manifest_path;
          return d;
        },
        py::arg("config") = "", py::arg("overrides") = py::dict());

  m.def("evaluate",
        [](const std::string& text, const py::dict& overrides) {
          const RunConfig cfg = config_from(text, overrides);
          MetricsReport r;
          {
            py::gil_scoped_release release;
            r = cmd_eval(cfg);
          }
          return report_dict(r);
        },
        py::arg("config") = "", py::arg("overrides") = py::dict());

  m.def("grad_check",
        [](std::uint64_t seed) {
          py::list rows;
          for (const auto& r : run_grad_cases(standard_grad_cases(seed))) {
            py::dict d;
            d["op"] = r.op;
            d["shape"] = std::vector<std::size_t>(r.shape.begin(), r.shape.end());
            d["max_rel_error"] = r.result.max_rel_error;
            d["passed"] = r.passed;
            rows.append(d);
          }
          return rows;
        },
        py::arg("seed") = 0);

  m.def("read_checkpoint",
        [](const std::string& path) {
          py::dict d;
          for (const auto& a : checkpoint_read(path)) d[py::str(a.name)] = to_array(a.value);
          return d;
        },
        py::arg("path"));
}
