#include "stivae/aux.hpp"
#include "stivae/dimsel.hpp"
#include "stivae/error.hpp"
#include "stivae/geostat.hpp"
#include "stivae/ivae.hpp"
#include "stivae/metrics.hpp"
#include "stivae/predict.hpp"
#include "stivae/simgen.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

namespace py = pybind11;
using namespace stivae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) {
    Tensor t(static_cast<std::size_t>(a.shape(0)), 1);
    std::copy(a.data(), a.data() + a.size(), t.data().begin());
    return t;
  }
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array");
  Tensor t(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

Array to_array(const Tensor& t) {
  Array a({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

Array to_array(const std::vector<double>& v) {
  Array a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

aux::Locations locations(const Array& coords, const Array& times) {
  aux::Locations loc;
  loc.coords = to_tensor(coords);
  const Tensor t = to_tensor(times);
  loc.times.assign(t.data().begin(), t.data().end());
  loc.validate();
  return loc;
}

ivae::IvaeConfig ivae_config(std::size_t latent_dim, int epochs, const std::vector<std::size_t>& hidden,
                             const std::vector<std::size_t>& aux_hidden, std::size_t batch, double beta,
                             std::uint64_t seed) {
  ivae::IvaeConfig cfg;
  cfg.latent_dim = latent_dim;
  cfg.epochs = epochs;
  cfg.hidden = hidden;
  cfg.aux_hidden = aux_hidden;
  cfg.batch_size = batch;
  cfg.beta = beta;
  cfg.seed = seed;
  return cfg;
}

const std::vector<std::size_t> kDefaultHidden{128, 128, 128};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "iVAE blind source separation for spatio-temporal data";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);

  m.def(
      "simulate",
      [](int setting, std::size_t n_s, std::size_t n_t, std::size_t p, std::size_t s, std::size_t layers,
         std::uint64_t seed) {
        simgen::SimRequest req{setting, n_s, n_t, p, s, layers, seed, {}};
        const auto d = simgen::simulate(req);
        py::dict out;
        out["coords"] = to_array(d.locations.coords);
        out["times"] = to_array(d.locations.times);
        out["z"] = to_array(d.z);
        out["x"] = to_array(d.x);
        return out;
      },
      py::arg("setting"), py::arg("n_s") = 50, py::arg("n_t") = 100, py::arg("p") = 3, py::arg("s") = 5,
      py::arg("layers") = 1, py::arg("seed") = 0, "Simulate latent fields and their mixed observations.");

  m.def(
      "auxiliary",
      [](const Array& coords, const Array& times, const std::string& kind) {
        aux::AuxConfig cfg;
        cfg.kind = aux::parse_aux_kind(kind);
        const auto loc = locations(coords, times);
        return to_array(aux::AuxBuilder::fit(cfg, loc).apply(loc).values);
      },
      py::arg("coords"), py::arg("times"), py::arg("kind") = "radial", "Auxiliary matrix for the given locations.");

  m.def(
      "train",
      [](const Array& x, const Array& u, std::size_t latent_dim, int epochs, const std::vector<std::size_t>& hidden,
         const std::vector<std::size_t>& aux_hidden, std::size_t batch, double beta, std::uint64_t seed) {
        const auto fit = ivae::train(to_tensor(x), to_tensor(u),
                                     ivae_config(latent_dim, epochs, hidden, aux_hidden, batch, beta, seed));
        py::dict out;
        out["sources"] = to_array(fit.latent.sources);
        out["trend"] = to_array(fit.latent.trend);
        out["sd"] = to_array(fit.latent.sd);
        out["elbo_history"] = to_array(fit.latent.elbo_history);
        out["final_elbo"] = fit.latent.final_elbo;
        return out;
      },
      py::arg("x"), py::arg("u"), py::arg("latent_dim"), py::arg("epochs") = 60, py::arg("hidden") = kDefaultHidden,
      py::arg("aux_hidden") = kDefaultHidden, py::arg("batch") = 64, py::arg("beta") = 0.02, py::arg("seed") = 0,
      "Train an iVAE and return the extracted sources.");

  m.def(
      "mcc", [](const Array& truth, const Array& estimate) { return metrics::mcc(to_tensor(truth), to_tensor(estimate)); },
      py::arg("truth"), py::arg("estimate"), "Mean absolute correlation under the best one-to-one matching.");
  m.def(
      "linear_unmixing_mcc",
      [](const Array& truth, const Array& observed) {
        return metrics::linear_unmixing_mcc(to_tensor(truth), to_tensor(observed));
      },
      py::arg("truth"), py::arg("observed"));

  m.def("uaic", &dimsel::uaic, py::arg("elbo_total"), py::arg("latent_dim"));
  m.def(
      "sweep_dims",
      [](const Array& x, const Array& u, const std::vector<std::size_t>& dims, int epochs,
         const std::vector<std::size_t>& hidden, const std::vector<std::size_t>& aux_hidden, std::size_t batch,
         std::uint64_t seed) {
        const auto rows = dimsel::sweep_dims(to_tensor(x), to_tensor(u), dims,
                                             ivae_config(dims.front(), epochs, hidden, aux_hidden, batch, 0.02, seed));
        py::list out;
        for (const auto& r : rows) out.append(py::make_tuple(r.latent_dim, r.elbo_total, r.uaic));
        return py::make_tuple(out, dimsel::select_dim(rows));
      },
      py::arg("x"), py::arg("u"), py::arg("dims"), py::arg("epochs") = 60, py::arg("hidden") = kDefaultHidden,
      py::arg("aux_hidden") = kDefaultHidden, py::arg("batch") = 64, py::arg("seed") = 0,
      "Train one model per dimension; returns ([(R, elbo_total, uaic)], selected R).");

  m.def(
      "krige",
      [](const Array& values, const Array& coords, const Array& times, const Array& target_coords,
         const Array& target_times, std::tuple<double, double, double> spatial, std::tuple<double, double, double> temporal,
         double k, std::size_t neighbors) {
        const auto [sn, ss, sr] = spatial;
        const auto [tn, ts, tr] = temporal;
        geostat::ProductSumModel model({sn, ss, sr}, {tn, ts, tr}, k);
        model.validate();
        const Tensor v = to_tensor(values);
        const auto res = geostat::krige(v.data(), locations(coords, times), model, locations(target_coords, target_times),
                                        {neighbors, false});
        return py::make_tuple(to_array(res.prediction), to_array(res.variance));
      },
      py::arg("values"), py::arg("coords"), py::arg("times"), py::arg("target_coords"), py::arg("target_times"),
      py::arg("spatial"), py::arg("temporal"), py::arg("k") = 0.0, py::arg("neighbors") = 40,
      "Ordinary kriging under a product-sum model; components are (nugget, sill, range).");

  m.def(
      "matern", [](double d, double nu, double phi) { return simgen::matern_cov(d, {nu, phi}); }, py::arg("d"),
      py::arg("nu"), py::arg("phi"));

  m.def(
      "predict",
      [](const Array& x, const Array& coords, const Array& times, const std::string& mode, std::size_t latent_dim,
         int epochs, const std::vector<std::size_t>& hidden, const std::vector<std::size_t>& aux_hidden,
         std::size_t neighbors, std::uint64_t seed) {
        predict::PredictTask task;
        task.mode = predict::parse_mode(mode);
        task.seed = seed;
        task.ivae = ivae_config(latent_dim, epochs, hidden, aux_hidden, 64, 0.02, seed);
        task.kriging.neighbors = neighbors;
        const auto rep = predict::run_prediction(to_tensor(x), locations(coords, times), task);
        py::dict out;
        for (const auto& s : rep.scores) {
          py::dict d;
          d["wmse"] = s.wmse;
          d["wmae"] = s.wmae;
          d["prediction"] = to_array(s.prediction);
          out[py::str(predict::to_string(s.strategy))] = d;
        }
        py::dict base;
        base["wmse"] = rep.mean_baseline.wmse;
        base["wmae"] = rep.mean_baseline.wmae;
        out["mean"] = base;
        std::vector<double> rows(rep.target_rows.begin(), rep.target_rows.end());
        out["target_rows"] = to_array(rows);
        return out;
      },
      py::arg("x"), py::arg("coords"), py::arg("times"), py::arg("mode") = "spatial", py::arg("latent_dim") = 3,
      py::arg("epochs") = 60, py::arg("hidden") = kDefaultHidden, py::arg("aux_hidden") = kDefaultHidden,
      py::arg("neighbors") = 40, py::arg("seed") = 0,
      "Hold out part of the data and score direct and kriging predictors.");
}
