#include "oracles.hpp"

#include "stivae/error.hpp"
#include "stivae/predict.hpp"
#include "stivae/simgen.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace stivae;
using namespace stivae::predict;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// `stations` random sites observed at times 1..nt, time-major rows.
aux::Locations station_grid(std::size_t stations, std::size_t nt, Rng& rng) {
  Tensor sites(stations, 2);
  for (double& v : sites.data()) v = rng.uniform();
  aux::Locations loc;
  loc.coords = Tensor(stations * nt, 2);
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t i = 0; i < stations; ++i) {
      loc.coords(t * stations + i, 0) = sites(i, 0);
      loc.coords(t * stations + i, 1) = sites(i, 1);
      loc.times.push_back(static_cast<double>(t + 1));
    }
  }
  return loc;
}

ivae::IvaeModel small_model(std::size_t obs, std::size_t aux_dim, std::size_t latent, std::uint64_t seed) {
  ivae::IvaeConfig c;
  c.latent_dim = latent;
  c.hidden = {8};
  c.aux_hidden = {8};
  c.seed = seed;
  return ivae::ivae_new(obs, aux_dim, c);
}

io::KeyValues exact_model() {
  return geostat::ProductSumModel({0.0, 1.0, 0.3}, {0.0, 1.0, 5.0}, 0.5).to_key_values();
}

}  // namespace

TEST_CASE("harmonic fits") {
  std::vector<double> t, y;
  for (int i = 1; i <= 53; ++i) {
    t.push_back(i);
    y.push_back(std::cos(kTwoPi * i / 53.0));
  }
  SUBCASE("pure cosine") {
    const Harmonic h = fit_harmonic(y, t, 53.0);
    CHECK(std::abs(h.cos - 1.0) < 1e-8);
    CHECK(std::abs(h.intercept) < 1e-8);
    CHECK(std::abs(h.sin) < 1e-8);
  }
  SUBCASE("constant series") {
    std::vector<double> res;
    const Harmonic h = fit_harmonic(std::vector<double>(53, 4.2), t, 53.0, &res);
    CHECK(h.intercept == doctest::Approx(4.2).epsilon(1e-12));
    for (double r : res) CHECK(std::abs(r) < 1e-12);
  }
  SUBCASE("noisy cosine over ten periods") {
    Rng rng(3);
    std::vector<double> tt, yy;
    for (int i = 1; i <= 530; ++i) {
      tt.push_back(i);
      yy.push_back(std::cos(kTwoPi * i / 53.0) + 0.1 * rng.normal());
    }
    CHECK(std::abs(fit_harmonic(yy, tt, 53.0).cos - 1.0) < 0.02);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(fit_harmonic(std::vector<double>{1, 2}, std::vector<double>{1, 40}, 53.0), DataError);
    CHECK_THROWS_AS(fit_harmonic(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}, 53.0), DataError);
    CHECK_THROWS_AS(fit_harmonic(std::vector<double>{1, 2, 3, 4}, std::vector<double>{0, 53, 106, 159}, 53.0),
                    DataError);
    CHECK_THROWS_AS(fit_harmonic(y, t, 0.0), ConfigError);
  }
}

TEST_CASE("seasonal detrending is reversible on training rows") {
  Rng rng(5);
  const aux::Locations loc = station_grid(6, 80, rng);
  Tensor x(loc.size(), 2);
  for (std::size_t i = 0; i < loc.size(); ++i) {
    x(i, 0) = 3.0 * std::sin(kTwoPi * loc.times[i] / 53.0) + loc.coords(i, 0) + rng.normal();
    x(i, 1) = rng.normal();
  }
  Tensor residual;
  const SeasonalFit fit = fit_seasonal(x, loc, 53.0, &residual);
  CHECK(fit.stations() == 6);
  const Tensor seasonal = fit.evaluate(loc);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(residual[k] + seasonal[k] - x[k]) < 1e-10);

  aux::Locations elsewhere = loc.subset(std::vector<std::size_t>{0});
  elsewhere.coords(0, 0) += 0.5;
  CHECK_THROWS_AS(fit.evaluate(elsewhere), DataError);
}

TEST_CASE("seasonal auxiliary variables") {
  Rng rng(6);
  const aux::Locations loc = station_grid(5, 106, rng);  // two years of 53 weeks
  aux::ResolutionSpec spec;
  spec.spatial_levels = {2};
  spec.temporal_levels = {9};
  const auto builder = SeasonalAuxBuilder::fit(spec, 53.0, loc, loc);
  const aux::AuxMatrix m = builder.apply(loc);
  const std::size_t radial = 4 + 9;
  CHECK(builder.years().size() == 3);  // floor(t / 53) over t = 1..106 is 0, 1, 2
  CHECK(m.dim() == radial + 3);

  SUBCASE("same week in two years") {
    const std::size_t a = 9 * 5, b = (9 + 53) * 5;  // t = 10 and t = 63, station 0
    for (std::size_t j = 0; j < radial; ++j) CHECK(m.values(a, j) == doctest::Approx(m.values(b, j)).epsilon(1e-12));
    bool differs = false;
    for (std::size_t j = radial; j < m.dim(); ++j) differs |= m.values(a, j) != m.values(b, j);
    CHECK(differs);
  }
  SUBCASE("future week of a training year stays within the training range") {
    std::vector<std::size_t> early;
    for (std::size_t i = 0; i < loc.size(); ++i) {
      if (loc.times[i] <= 80) early.push_back(i);
    }
    const aux::Locations train = loc.subset(early);
    const auto b2 = SeasonalAuxBuilder::fit(spec, 53.0, train, loc);
    const aux::AuxMatrix tm = b2.apply(train);
    aux::Locations future = loc.subset(std::vector<std::size_t>{85 * 5});  // t = 86, year 1
    std::vector<std::string> warnings;
    const aux::AuxMatrix fm = b2.apply(future, &warnings);
    CHECK(warnings.empty());
    for (std::size_t j = 0; j < fm.dim(); ++j) {
      double lo = tm.values(0, j), hi = lo;
      for (std::size_t i = 0; i < tm.rows(); ++i) {
        lo = std::min(lo, tm.values(i, j));
        hi = std::max(hi, tm.values(i, j));
      }
      CHECK(fm.values(0, j) >= lo);
      CHECK(fm.values(0, j) <= hi);
    }
  }
  SUBCASE("unknown years are flagged") {
    aux::Locations later = loc.subset(std::vector<std::size_t>{0});
    later.times[0] = 500;
    std::vector<std::string> warnings;
    const aux::AuxMatrix lm = builder.apply(later, &warnings);
    CHECK(warnings.size() == 1);
    for (std::size_t j = radial; j < lm.dim(); ++j) CHECK(lm.values(0, j) == 0.0);
  }
}

TEST_CASE("latent-space predictors") {
  Rng rng(7);
  const aux::Locations loc = station_grid(12, 10, rng);
  const Tensor x = oracle::random_tensor(loc.size(), 3, rng);
  const Tensor u = oracle::random_tensor(loc.size(), 4, rng);
  ivae::IvaeModel m = small_model(3, 4, 2, 3);

  SUBCASE("direct prediction decodes the trend") {
    const Tensor direct = predict_ivae_direct(m, u.slice_rows(5, 6));
    const auto latent = ivae::extract_sources(m, x, u);
    const Tensor expected = ivae::decode(m, latent.trend.slice_rows(5, 6));
    CHECK(direct == expected);
    Tensor twin(2, 4);
    for (std::size_t j = 0; j < 4; ++j) twin(0, j) = twin(1, j) = u(3, j);
    const Tensor p = predict_ivae_direct(m, twin);
    for (std::size_t j = 0; j < 3; ++j) CHECK(p(0, j) == p(1, j));
  }
  SUBCASE("zero residuals make kriging identical to direct prediction") {
    for (auto* net : {&m.encoder, &m.auxiliary}) {
      net->layers.back().weight.fill(0.0);
      net->layers.back().bias[0] = 0.3;
      net->layers.back().bias[1] = -0.8;
    }
    const aux::Locations targets = loc.subset(std::vector<std::size_t>{1, 2, 3});
    const Tensor ut = oracle::random_tensor(3, 4, rng);
    KrigingSpec spec;
    CHECK(predict_ivae_kriging(m, x, u, loc, ut, targets, spec) == predict_ivae_direct(m, ut));
  }
  SUBCASE("a target at a training row recovers its source") {
    const std::vector<std::size_t> rows{4, 17, 50};
    const aux::Locations targets = loc.subset(rows);
    const Tensor ut = u.gather_rows(rows);
    KrigingSpec spec;
    spec.fixed_model = exact_model();
    const KrigedLatent kl = krige_latent(m, x, u, loc, ut, targets, spec);
    const auto latent = ivae::extract_sources(m, x, u);
    for (std::size_t q = 0; q < rows.size(); ++q) {
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(kl.latent(q, j) - latent.sources(rows[q], j)) < 1e-8);
    }
    const Tensor pred = predict_ivae_kriging(m, x, u, loc, ut, targets, spec);
    const Tensor dec = ivae::decode(m, latent.sources.gather_rows(rows));
    for (std::size_t k = 0; k < pred.size(); ++k) CHECK(std::abs(pred[k] - dec[k]) < 1e-6);
  }
  SUBCASE("shape errors") {
    KrigingSpec spec;
    CHECK_THROWS_AS(krige_latent(m, x, u, loc.subset(std::vector<std::size_t>{0, 1}), u, loc, spec), DimensionError);
  }
}

TEST_CASE("seasonal components at new stations") {
  Rng rng(8);
  const std::size_t m = 30;
  Tensor coords(m, 2);
  for (double& v : coords.data()) v = rng.uniform();
  const Tensor new_coords = Tensor::from_rows({{0.4, 0.5}, {0.6, 0.45}, {0.5, 0.6}});

  SUBCASE("identical stations") {
    const std::vector<Harmonic> fits(m, Harmonic{2.0, 0.5, -1.0});
    const ExtendedSeasonal e = extend_seasonal_trend(fits, coords, new_coords, 53.0);
    for (std::size_t s = 0; s < 3; ++s) {
      for (double t : {1.0, 17.0, 40.0}) CHECK(e.at(s, t) == doctest::Approx(fits[0].at(t, 53.0)).epsilon(1e-9));
    }
  }
  SUBCASE("a new station on a training station reproduces it") {
    std::vector<Harmonic> fits;
    for (std::size_t s = 0; s < m; ++s) fits.push_back({rng.normal(), 1.0 + rng.uniform(), rng.normal()});
    const Tensor on = coords.slice_rows(7, 8);
    const io::KeyValues exact = geostat::SpatialModel({0.0, 1.0, 0.3}).to_key_values();
    const ExtendedSeasonal e = extend_seasonal_trend(fits, coords, on, 53.0, exact);
    // Reconstructing station 7 needs its own standardized shape to equal the shared one.
    std::vector<Harmonic> same_shape;
    for (std::size_t s = 0; s < m; ++s) {
      const double scale = 1.0 + rng.uniform();
      same_shape.push_back({rng.normal(), 0.8 * scale, -0.6 * scale});
    }
    const ExtendedSeasonal e2 = extend_seasonal_trend(same_shape, coords, on, 53.0, exact);
    for (double t : {1.0, 20.0, 33.0}) {
      CHECK(e2.at(0, t) == doctest::Approx(same_shape[7].at(t, 53.0)).epsilon(1e-8));
    }
    double mean7 = 0.0;
    for (int k = 1; k <= 53; ++k) mean7 += fits[7].at(k, 53.0);
    CHECK(e.mean[0] == doctest::Approx(mean7 / 53.0).epsilon(1e-8));
  }
  SUBCASE("linear mean field") {
    Tensor dense(200, 2);
    for (double& v : dense.data()) v = rng.uniform();
    std::vector<Harmonic> fits;
    for (std::size_t s = 0; s < 200; ++s) fits.push_back({dense(s, 0), std::sqrt(2.0), 0.0});
    const ExtendedSeasonal e = extend_seasonal_trend(fits, dense, new_coords, 53.0);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(e.mean[s] == doctest::Approx(new_coords(s, 0)).epsilon(0.1));
      CHECK(e.sd[s] == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("too few stations") {
    const std::vector<Harmonic> fits(4);
    CHECK_THROWS_AS(extend_seasonal_trend(fits, coords.slice_rows(0, 4), new_coords, 53.0), DataError);
  }
}

TEST_CASE("hold-out splits") {
  Rng rng(9);
  const aux::Locations loc = station_grid(20, 30, rng);
  for (Mode mode : {Mode::spatial, Mode::temporal, Mode::spatio_temporal}) {
    std::vector<std::size_t> train, target;
    split_rows(loc, mode, 0.2, 4, train, target);
    std::set<std::size_t> all(train.begin(), train.end());
    for (std::size_t r : target) CHECK(all.insert(r).second);
    CHECK(all.size() == loc.size());
    if (mode == Mode::spatial) {
      std::set<double> train_x, target_x;
      for (std::size_t r : train) train_x.insert(loc.coords(r, 0));
      for (std::size_t r : target) target_x.insert(loc.coords(r, 0));
      CHECK(target_x.size() == 4);
      for (double v : target_x) CHECK(train_x.count(v) == 0);
    }
    if (mode == Mode::temporal) {
      for (std::size_t r : target) CHECK(loc.times[r] > 24);
      CHECK(target.size() == 6 * 20);
    }
  }
  std::vector<std::size_t> a, b;
  CHECK_THROWS_AS(split_rows(loc, Mode::spatial, 1.0, 0, a, b), ConfigError);
  CHECK(parse_mode("spatio-temporal") == Mode::spatio_temporal);
  CHECK_THROWS_AS(parse_mode("global"), ConfigError);
  CHECK(parse_strategy("ivae-kriging") == Strategy::ivae_kriging);
}

TEST_CASE("prediction pipeline on Setting-6 mini data") {
  int beats_mean = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    simgen::SimRequest r;
    r.setting = 6;
    r.n_s = 40;
    r.n_t = 30;
    r.p = 3;
    r.s = 5;
    r.layers = 1;
    r.seed = seed;
    const auto d = simgen::simulate(r);
    PredictTask task;
    task.mode = Mode::spatial;
    task.strategies = {Strategy::ivae_direct};
    task.seed = seed;
    task.ivae.latent_dim = 3;
    task.ivae.epochs = 30;
    task.ivae.hidden = {32, 32, 32};
    task.ivae.aux_hidden = {32, 32, 32};
    const PredictReport rep = run_prediction(d.x, d.locations, task);
    REQUIRE(rep.scores.size() == 1);
    CHECK(rep.scores[0].prediction.rows() == rep.target_rows.size());
    CHECK(rep.target_rows.size() == 8 * 30);
    if (rep.scores[0].wmse < rep.mean_baseline.wmse) ++beats_mean;
  }
  CHECK(beats_mean >= 8);
}

TEST_CASE("prediction task errors") {
  Rng rng(10);
  const aux::Locations loc = station_grid(10, 10, rng);
  const Tensor x = oracle::random_tensor(loc.size(), 2, rng);
  PredictTask task;
  task.mode = Mode::temporal;
  CHECK_THROWS_AS(run_prediction(x, loc, task), ConfigError);
  task.mode = Mode::spatial;
  task.strategies.clear();
  CHECK_THROWS_AS(run_prediction(x, loc, task), ConfigError);
  task.strategies = {Strategy::ivae_direct};
  CHECK_THROWS_AS(run_prediction(x.slice_rows(0, 5), loc, task), DimensionError);
}
