// Python surface over the core operations: the masked-attention tokenization
// layer, grid positional encoding, mask generators, imputation baselines, and
// evaluation metrics. Training and experiment orchestration stay in the CLI.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "misstsm/baselines.hpp"
#include "misstsm/dataio.hpp"
#include "misstsm/layer.hpp"
#include "misstsm/masking.hpp"
#include "misstsm/metrics.hpp"

namespace py = pybind11;

namespace {

using namespace misstsm;

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
  std::vector<std::size_t> shape(static_cast<std::size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) {
    shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
  }
  Tensor t(shape);
  std::copy(a.data(), a.data() + t.size(), t.data.begin());
  return t;
}

py::array_t<double> to_array(const Tensor& t) {
  py::array_t<double> a(t.shape);
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

// values/mask pair as a TimeSeries; masked cells are forced to the 0.0
// sentinel so NaN-marked input behaves like the CSV loader's output.
TimeSeries to_series(const DoubleArray& values, const DoubleArray& mask) {
  TimeSeries ts;
  ts.values = to_tensor(values);
  ts.mask = to_tensor(mask);
  if (ts.values.rank() != 2) throw std::invalid_argument("values must be 2-D (time x variate)");
  require_same_shape(ts.values, ts.mask, "values/mask");
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    if (ts.mask.data[i] != 0.0) ts.values.data[i] = 0.0;
  }
  return ts;
}

MaskSpec periodic_spec(double p, double alpha, std::uint64_t seed) {
  MaskSpec spec;
  spec.scheme = MaskScheme::Periodic;
  spec.p = p;
  spec.alpha = alpha;
  spec.seed = seed;
  spec.validate();
  return spec;
}

// Owns its parameter store; the layer keeps a pointer into it.
class Layer {
 public:
  Layer(std::size_t n_variates, std::size_t embed_dim, std::size_t key_dim, std::size_t heads,
        std::size_t out_dim, const std::string& mode, std::uint64_t seed)
      : store_(std::make_unique<ParamStore>()) {
    MissTSMConfig cfg;
    cfg.embed_dim = embed_dim;
    cfg.key_dim = key_dim;
    cfg.heads = heads;
    cfg.out_dim = out_dim;
    if (mode == "wrapper") {
      cfg.mode = LayerMode::Wrapper;
    } else if (mode == "direct") {
      cfg.mode = LayerMode::Direct;
    } else {
      throw std::invalid_argument("mode must be 'wrapper' or 'direct'");
    }
    layer_ = std::make_unique<MissTSMLayer>(cfg, n_variates, *store_, seed);
  }

  py::array_t<double> forward(const DoubleArray& values, const DoubleArray& mask) const {
    const TimeSeries ts = to_series(values, mask);
    return to_array(layer_->forward(ts.values, ts.mask).output);
  }

  // Per-head attention rows, stacked as (heads, T, N). Missing variates carry
  // exactly 0.0; fully missing steps yield all-zero rows.
  py::array_t<double> attention_weights(const DoubleArray& values,
                                        const DoubleArray& mask) const {
    const TimeSeries ts = to_series(values, mask);
    const MissTSMLayer::Forward fw = layer_->forward(ts.values, ts.mask);
    const std::size_t T = ts.steps(), N = ts.variates(), H = fw.attn.size();
    Tensor stacked({H, T, N});
    for (std::size_t h = 0; h < H; ++h) {
      std::copy(fw.attn[h].values.data.begin(), fw.attn[h].values.data.end(),
                stacked.data.begin() + h * T * N);
    }
    return to_array(stacked);
  }

  std::size_t n_variates() const { return layer_->variates(); }
  std::size_t output_dim() const {
    return layer_->config().mode == LayerMode::Wrapper ? layer_->variates()
                                                       : layer_->config().output_dim();
  }

 private:
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<MissTSMLayer> layer_;
};

py::array_t<double> impute(const std::string& method, const DoubleArray& values,
                           const DoubleArray& mask, std::size_t order, std::size_t k) {
  const TimeSeries ts = to_series(values, mask);
  if (method == "spline") return to_array(spline_impute(ts, order).values);
  if (method == "locf") return to_array(locf_impute(ts).values);
  if (method == "knn") return to_array(knn_impute(ts, k).values);
  throw std::invalid_argument("method must be 'spline', 'locf', or 'knn'");
}

}  // namespace

PYBIND11_MODULE(misstsm_py, m) {
  m.doc() = "Imputation-free time-series modeling: core operations";

  m.def("pos_encode_2d", [](std::size_t t, std::size_t n, std::size_t d) {
          return to_array(pos_encode_2d(t, n, d));
        },
        py::arg("t"), py::arg("n"), py::arg("d"),
        "Sinusoidal grid encoding (T, N, D); first half encodes the time "
        "index, second half the variate index. D must be a multiple of 4.");

  m.def("gen_mcar", [](std::size_t t, std::size_t n, double p, std::uint64_t seed) {
          return to_array(gen_mcar(t, n, p, seed));
        },
        py::arg("t"), py::arg("n"), py::arg("p"), py::arg("seed") = 0,
        "Independent Bernoulli(p) missingness mask (1 = missing), one seed "
        "stream per variate.");

  m.def("gen_periodic", [](std::size_t t, std::size_t n, double p, double alpha,
                           std::uint64_t seed) {
          return to_array(gen_periodic(t, n, periodic_spec(p, alpha, seed)));
        },
        py::arg("t"), py::arg("n"), py::arg("p"), py::arg("alpha") = 0.5,
        py::arg("seed") = 0,
        "Sinusoidally modulated missingness with time-averaged rate p.");

  m.def("missing_fraction", [](const DoubleArray& mask) {
          return missing_fraction(to_tensor(mask));
        },
        py::arg("mask"));

  m.def("impute", &impute, py::arg("method"), py::arg("values"), py::arg("mask"),
        py::arg("order") = 2, py::arg("k") = 10,
        "Dense fill of (values, mask) via 'spline', 'locf', or 'knn'. Masked "
        "cells may hold any sentinel (NaN included); they are never read.");

  m.def("f1_macro", &f1_macro, py::arg("preds"), py::arg("labels"), py::arg("n_classes"),
        "Macro-averaged F1 over classes present in labels or predictions.");
  m.def("auroc", &auroc, py::arg("scores"), py::arg("labels"),
        "Rank-based AUROC with midrank tie handling.");
  m.def("auprc", &auprc, py::arg("scores"), py::arg("labels"),
        "Step-integrated area under the precision-recall curve.");

  py::class_<Layer>(m, "Layer",
                    "Per-(time, variate) tokenization + grid positional encoding + "
                    "masked cross-attention. Output never depends on values stored "
                    "at missing entries.")
      .def(py::init<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,
                    const std::string&, std::uint64_t>(),
           py::arg("n_variates"), py::arg("embed_dim") = 8, py::arg("key_dim") = 8,
           py::arg("heads") = 2, py::arg("out_dim") = 0, py::arg("mode") = "direct",
           py::arg("seed") = 0)
      .def("forward", &Layer::forward, py::arg("values"), py::arg("mask"),
           "(T, N) values + (T, N) mask -> (T, N) in wrapper mode or (T, D_out) "
           "in direct mode.")
      .def("attention_weights", &Layer::attention_weights, py::arg("values"), py::arg("mask"))
      .def_property_readonly("n_variates", &Layer::n_variates)
      .def_property_readonly("output_dim", &Layer::output_dim);
}
