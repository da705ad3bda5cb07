// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings. Arrays cross the boundary as float64 / int32 numpy copies.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>

#include "cssm/run.hpp"

namespace py = pybind11;
using namespace cssm;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I32 = py::array_t<int, py::array::c_style | py::array::forcecast>;

Shape shape_of(const py::array& a) { return Shape(a.shape(), a.shape() + a.ndim()); }

Tensor to_tensor(const F64& a) {
  return Tensor::from(shape_of(a), std::vector<double>(a.data(), a.data() + a.size()));
}

F64 to_numpy(const Tensor& t) {
  F64 out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

template <typename T>
py::array_t<T> vector_to_numpy(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

void require_ndim(const py::array& a, py::ssize_t n, const char* what) {
  if (a.ndim() != n) throw ShapeError(std::string(what) + " must have " + std::to_string(n) + " dimensions");
}

Dataset make_dataset(const F64& cube, const I32& labels, std::vector<std::string> names) {
  require_ndim(cube, 3, "cube");
  require_ndim(labels, 2, "labels");
  if (labels.shape(0) != cube.shape(1) || labels.shape(1) != cube.shape(2))
    throw ShapeError("labels must be [H, W] matching cube [C, H, W]");
  Dataset d;
  d.cube.bands = static_cast<std::size_t>(cube.shape(0));
  d.cube.height = d.labels.height = static_cast<std::size_t>(cube.shape(1));
  d.cube.width = d.labels.width = static_cast<std::size_t>(cube.shape(2));
  d.cube.data.assign(cube.data(), cube.data() + cube.size());
  d.labels.labels.assign(labels.data(), labels.data() + labels.size());
  d.class_names = std::move(names);
  return d;
}

py::dict metrics_dict(const Metrics& m) {
  const std::size_t k = m.confusion.size();
  py::array_t<std::int64_t> conf({static_cast<py::ssize_t>(k), static_cast<py::ssize_t>(k)});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) conf.mutable_at(i, j) = m.confusion[i][j];
  py::dict d;
  d["oa"] = m.oa;
  d["aa"] = m.aa;
  d["kappa"] = m.kappa;
  d["per_class"] = m.per_class;
  d["confusion"] = conf;
  return d;
}

py::dict stats_dict(const StepStats& s) {
  py::dict d;
  d["epoch"] = s.epoch;
  d["ce"] = s.ce;
  d["cluster"] = s.cluster;
  d["total"] = s.total;
  d["val_oa"] = s.val_oa;
  return d;
}

py::dict split_dict(const SplitSpec& s) {
  py::dict d;
  d["seed"] = s.seed;
  d["train"] = s.train;
  d["val"] = s.val;
  d["test"] = s.test;
  return d;
}

RunConfig config_from(const std::string& text, std::optional<std::uint64_t> seed, std::optional<std::size_t> epochs) {
  RunConfig cfg = parse_run_config(text);
  if (seed) cfg.train.seed = *seed;
  if (epochs) cfg.train.epochs = *epochs;
  return cfg;
}

// Owns a copy of its dataset, which the trainer references.
class PyTrainer {
 public:
  PyTrainer(const Dataset& data, const std::string& config, std::optional<std::uint64_t> seed)
      : data_(std::make_shared<Dataset>(data)) {
    const RunConfig cfg = bind_to_dataset(config_from(config, seed, std::nullopt), *data_);
    trainer_ = std::make_unique<Trainer>(*data_, make_splits(data_->labels, data_->num_classes(), cfg.train.seed),
                                         cfg.model, cfg.train);
  }
  PyTrainer(std::shared_ptr<Dataset> data, std::unique_ptr<Trainer> t) : data_(std::move(data)), trainer_(std::move(t)) {}

  static PyTrainer load(const std::filesystem::path& path, const Dataset& data) {
    auto owned = std::make_shared<Dataset>(data);
    auto t = load_checkpoint(path, *owned);
    return PyTrainer(std::move(owned), std::move(t));
  }

  Trainer& get() { return *trainer_; }
  const Dataset& data() const { return *data_; }

 private:
  std::shared_ptr<Dataset> data_;
  std::unique_ptr<Trainer> trainer_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cssmamba core: cluster-guided spatial-spectral Mamba for hyperspectral classification";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IndexError>(m, "IndexRangeError", PyExc_IndexError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("cube"), py::arg("labels"), py::arg("class_names"),
           "cube [C, H, W] float, labels [H, W] int with 0 = unlabeled")
      .def_property_readonly("cube",
                             [](const Dataset& d) {
                               return vector_to_numpy(d.cube.data, {static_cast<py::ssize_t>(d.cube.bands),
                                                                    static_cast<py::ssize_t>(d.cube.height),
                                                                    static_cast<py::ssize_t>(d.cube.width)});
                             })
      .def_property_readonly("labels",
                             [](const Dataset& d) {
                               return vector_to_numpy(d.labels.labels, {static_cast<py::ssize_t>(d.labels.height),
                                                                        static_cast<py::ssize_t>(d.labels.width)});
                             })
      .def_readonly("class_names", &Dataset::class_names)
      .def_property_readonly("num_classes", &Dataset::num_classes)
      .def("__repr__", [](const Dataset& d) {
        return "<Dataset " + std::to_string(d.cube.height) + "x" + std::to_string(d.cube.width) + "x" +
               std::to_string(d.cube.bands) + ", " + std::to_string(d.num_classes()) + " classes>";
      });

  m.def(
      "generate_synthetic",
      [](std::size_t height, std::size_t width, std::size_t bands, std::size_t classes, std::size_t block, double noise,
         double gain, std::uint64_t seed) {
        return generate_synthetic({height, width, bands, classes, block, noise, gain, seed});
      },
      py::arg("height") = 24, py::arg("width") = 24, py::arg("bands") = 8, py::arg("classes") = 4,
      py::arg("block") = 6, py::arg("noise") = 0.05, py::arg("gain") = 0.6, py::arg("seed") = 0);
  m.def("save_container", &save_container, py::arg("path"), py::arg("dataset"));
  m.def(
      "load_container",
      [](const std::filesystem::path& p, bool normalize) { return normalize ? load_container(p) : read_container(p); },
      py::arg("path"), py::arg("normalize") = true);
  m.def(
      "normalize_bands",
      [](const Dataset& d) {
        Dataset out = d;
        normalize_bands(out.cube);
        return out;
      },
      py::arg("dataset"), "copy with every band min-max scaled to [0, 1]");

  m.def(
      "make_splits",
      [](const I32& labels, std::size_t num_classes, std::uint64_t seed) {
        require_ndim(labels, 2, "labels");
        LabelGrid g{static_cast<std::size_t>(labels.shape(0)), static_cast<std::size_t>(labels.shape(1)),
                    std::vector<int>(labels.data(), labels.data() + labels.size())};
        return split_dict(make_splits(g, num_classes, seed));
      },
      py::arg("labels"), py::arg("num_classes"), py::arg("seed") = 0);
  m.def(
      "metrics_from_confusion",
      [](const std::vector<std::vector<std::int64_t>>& c) { return metrics_dict(metrics_from_confusion(c)); },
      py::arg("confusion"));
  m.def(
      "nearest_mean_baseline",
      [](const Dataset& d, std::uint64_t seed) {
        return metrics_dict(nearest_mean_baseline(d, make_splits(d.labels, d.num_classes(), seed)));
      },
      py::arg("dataset"), py::arg("seed") = 0);

  m.def(
      "selective_scan",
      [](const F64& u, const F64& delta, const F64& a, const F64& b, const F64& c, const F64& d) {
        NoGradGuard ng;
        return to_numpy(selective_scan(to_tensor(u), to_tensor(delta), to_tensor(a), to_tensor(b), to_tensor(c),
                                       to_tensor(d)));
      },
      py::arg("u"), py::arg("delta"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"),
      "u, delta [B, N, Di]; a [Di, S]; b, c [B, N, S]; d [Di] -> y [B, N, Di]");
  m.def(
      "assign_nearest",
      [](const F64& features, const F64& centers) {
        require_ndim(features, 2, "features");
        require_ndim(centers, 2, "centers");
        ClusterConfig cfg;
        cfg.num_classes = static_cast<std::size_t>(centers.shape(0));
        cfg.clusters_per_class = 1;
        cfg.dim = static_cast<std::size_t>(centers.shape(1));
        ClusterState s = ClusterState::create(cfg, static_cast<std::size_t>(features.shape(0)));
        s.centers.assign(centers.data(), centers.data() + centers.size());
        std::fill(s.initialized.begin(), s.initialized.end(), 1);
        const auto idx = assign_nearest({features.data(), static_cast<std::size_t>(features.size())}, s);
        return vector_to_numpy(idx, {features.shape(0)});
      },
      py::arg("features"), py::arg("centers"), "index of the nearest center per row, lowest index on ties");
  m.def(
      "soft_assign",
      [](const F64& features, const F64& centers, double tau) {
        NoGradGuard ng;
        return to_numpy(soft_assign(to_tensor(features), to_tensor(centers), tau));
      },
      py::arg("features"), py::arg("centers"), py::arg("tau") = 1.0);
  m.def(
      "cluster_loss",
      [](const F64& features, const F64& weights) {
        NoGradGuard ng;
        return cluster_loss(to_tensor(features), to_tensor(weights)).item();
      },
      py::arg("features"), py::arg("weights"), "features [B, L, D], weights [B, L, K]");

  m.def(
      "parse_config", [](const std::string& text) { return format_run_config(parse_run_config(text)); },
      py::arg("text"), "validate key = value text and return it in canonical form");

  py::class_<PyTrainer>(m, "Trainer")
      .def(py::init<const Dataset&, const std::string&, std::optional<std::uint64_t>>(), py::arg("dataset"),
           py::arg("config") = "", py::arg("seed") = py::none(),
           "config: key = value text as accepted by the command line tool")
      .def_static("load_checkpoint", &PyTrainer::load, py::arg("path"), py::arg("dataset"))
      .def("step", [](PyTrainer& t) { return stats_dict(t.get().step()); })
      .def("predict",
           [](PyTrainer& t) {
             const auto& c = t.data().cube;
             return vector_to_numpy(t.get().predict(),
                                    {static_cast<py::ssize_t>(c.height), static_cast<py::ssize_t>(c.width)});
           })
      .def("evaluate", [](PyTrainer& t) { return metrics_dict(t.get().evaluate()); })
      .def("save_checkpoint", [](PyTrainer& t, const std::filesystem::path& p) { save_checkpoint(p, t.get()); },
           py::arg("path"))
      .def_property_readonly("epoch", [](PyTrainer& t) { return t.get().epoch(); })
      .def_property_readonly("split", [](PyTrainer& t) { return split_dict(t.get().split()); })
      .def_property_readonly("assignment",
                             [](PyTrainer& t) {
                               const auto& c = t.data().cube;
                               return vector_to_numpy(t.get().clusters().assignment,
                                                      {static_cast<py::ssize_t>(c.height),
                                                       static_cast<py::ssize_t>(c.width)});
                             })
      .def_property_readonly("num_parameters", [](PyTrainer& t) {
        std::size_t n = 0;
        for (const auto& p : t.get().model().params()) n += p.tensor.numel();
        return n;
      });

  m.def(
      "train",
      [](const Dataset& d, const std::string& config, const std::filesystem::path& out_dir,
         std::optional<std::uint64_t> seed, std::optional<std::size_t> epochs) {
        const RunResult r = train_and_write(d, config_from(config, seed, epochs), out_dir);
        py::dict out;
        out["metrics"] = metrics_dict(r.metrics);
        out["baseline"] = metrics_dict(r.baseline);
        py::list log;
        for (const auto& s : r.log) log.append(stats_dict(s));
        out["log"] = log;
        return out;
      },
      py::arg("dataset"), py::arg("config"), py::arg("out_dir"), py::arg("seed") = py::none(),
      py::arg("epochs") = py::none(), "full run writing log, report, checkpoint and maps under out_dir");
}
