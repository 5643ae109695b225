#include "oracles.hpp"

#include "stivae/aux.hpp"
#include "stivae/error.hpp"
#include "stivae/ivae.hpp"
#include "stivae/simgen.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace stivae;
using namespace stivae::ivae;

namespace {

IvaeConfig tiny_config(std::size_t latent, std::uint64_t seed) {
  IvaeConfig c;
  c.latent_dim = latent;
  c.hidden = {4};
  c.aux_hidden = {4};
  c.seed = seed;
  return c;
}

struct MiniData {
  Tensor x, u, z;
  aux::Locations loc;
};

MiniData setting1_mini(std::uint64_t seed) {
  simgen::SimRequest r;
  r.setting = 1;
  r.n_s = 30;
  r.n_t = 50;
  r.p = 2;
  r.s = 3;
  r.layers = 1;
  r.seed = seed;
  const auto d = simgen::simulate(r);
  aux::AuxConfig cfg;
  const auto u = aux::AuxBuilder::fit(cfg, d.locations).apply(d.locations);
  return {d.x, u.values, d.z, d.locations};
}

}  // namespace

TEST_CASE("closed-form KL") {
  const std::vector<double> mu{0.3, -1.0}, lv{0.2, -0.5};
  CHECK(gaussian_kl(mu, lv, mu, lv) == 0.0);
  const std::vector<double> zero{0.0}, one{1.0};
  CHECK(gaussian_kl(zero, zero, one, zero) == doctest::Approx(0.5));
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> a{rng.normal()}, b{rng.normal()}, c{rng.normal()}, d{rng.normal()};
    CHECK(gaussian_kl(a, b, c, d) >= 0.0);
  }
}

TEST_CASE("elbo_batch terms") {
  IvaeConfig cfg = tiny_config(1, 5);
  IvaeModel m = ivae_new(2, 3, cfg);
  Rng rng(1);
  const Tensor u = oracle::random_tensor(6, 3, rng);
  const Tensor noise = oracle::random_tensor(6, 1, rng);

  SUBCASE("reconstruction at the decoder output") {
    for (auto& layer : m.decoder.layers) layer.weight.fill(0.0);
    m.decoder.layers.back().bias[0] = 0.4;
    m.decoder.layers.back().bias[1] = -1.1;
    Tensor x(6, 2);
    for (std::size_t i = 0; i < 6; ++i) {
      x(i, 0) = 0.4;
      x(i, 1) = -1.1;
    }
    const auto t = elbo_batch(m, x, u, noise);
    CHECK(t.recon == doctest::Approx(-(2.0 / 2.0) * std::log(2 * std::numbers::pi * 0.02)));
    CHECK(t.elbo == doctest::Approx(t.recon - t.kl));
  }
  SUBCASE("KL vanishes when posterior and prior agree") {
    for (auto* net : {&m.encoder, &m.auxiliary}) {
      for (auto& layer : net->layers) layer.weight.fill(0.0);
      net->layers.back().bias[0] = 0.7;
      net->layers.back().bias[1] = -0.3;
    }
    const Tensor x = oracle::random_tensor(6, 2, rng);
    CHECK(std::abs(elbo_batch(m, x, u, noise).kl) < 1e-15);
  }
  SUBCASE("KL is non-negative on random batches") {
    for (int k = 0; k < 50; ++k) {
      const Tensor x = oracle::random_tensor(6, 2, rng, 3.0);
      CHECK(elbo_batch(m, x, oracle::random_tensor(6, 3, rng), noise).kl >= 0.0);
    }
  }
  SUBCASE("clamped log-variances stay finite with zero gradient") {
    m.encoder.layers.back().bias[1] = 60.0;
    for (auto& layer : m.encoder.layers) layer.weight.fill(0.0);
    const Tensor x = oracle::random_tensor(6, 2, rng);
    ElboGrads g;
    const auto t = elbo_batch(m, x, u, noise, &g);
    CHECK(std::isfinite(t.elbo));
    CHECK(g.encoder.bias.back()[1] == 0.0);
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(elbo_batch(m, Tensor(6, 3), u, noise), DimensionError);
    CHECK_THROWS_AS(elbo_batch(m, Tensor(6, 2), u, Tensor(5, 1)), DimensionError);
  }
}

TEST_CASE("ELBO gradient matches central differences on a tiny model") {
  Rng rng(17);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    IvaeModel m = ivae_new(2, 3, tiny_config(1, seed));
    for (auto* net : {&m.encoder, &m.decoder, &m.auxiliary}) {
      for (auto& layer : net->layers) {
        for (double& b : layer.bias.data()) b = 0.1 * rng.normal();
      }
    }
    const Tensor x = oracle::random_tensor(5, 2, rng);
    const Tensor u = oracle::random_tensor(5, 3, rng);
    const Tensor noise = oracle::random_tensor(5, 1, rng);
    const auto report = oracle::elbo_gradient_check(m, x, u, noise);
    CHECK(report.checked > 0);
    CHECK(report.max_rel < 1e-4);
  }
}

TEST_CASE("standardizer") {
  const Tensor x = Tensor::from_rows({{1, 5}, {2, 5}, {3, 5}});
  const Standardizer s = Standardizer::fit(x);
  CHECK(s.mean == std::vector<double>{2, 5});
  CHECK(s.sd[0] == doctest::Approx(1.0));
  CHECK(s.sd[1] == 1.0);
  const Tensor back = s.invert(s.apply(x));
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(back[k] == doctest::Approx(x[k]));
}

TEST_CASE("training contract") {
  const MiniData d = setting1_mini(3);
  IvaeConfig cfg;
  cfg.latent_dim = 2;
  cfg.epochs = 3;
  cfg.seed = 11;

  SUBCASE("epochs = 0 is a configuration error") {
    IvaeConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train(d.x, d.u, bad), ConfigError);
  }
  SUBCASE("identical inputs and seed give an identical model") {
    const auto a = train(d.x, d.u, cfg);
    const auto b = train(d.x, d.u, cfg);
    CHECK(a.latent.final_elbo == b.latent.final_elbo);
    CHECK(a.latent.elbo_history == b.latent.elbo_history);
    CHECK(a.model.decoder.layers[0].weight == b.model.decoder.layers[0].weight);
    CHECK(a.latent.elbo_history.size() == 3);
  }
  SUBCASE("row mismatch is a dimension error") {
    CHECK_THROWS_AS(train(d.x, d.u.slice_rows(0, 10), cfg), DimensionError);
  }
  SUBCASE("an exploding learning rate raises a divergence error") {
    IvaeConfig wild = cfg;
    wild.schedule.initial = 1e80;
    wild.schedule.final_rate = 1e80;
    CHECK_THROWS_AS(train(d.x, d.u, wild), DivergenceError);
  }
}

TEST_CASE("training improves the ELBO on Setting-1 mini data") {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const MiniData d = setting1_mini(seed);
    IvaeConfig cfg;
    cfg.latent_dim = 2;
    cfg.epochs = 15;
    cfg.seed = seed;
    const auto r = train(d.x, d.u, cfg);
    if (r.latent.final_elbo > r.latent.elbo_history.front()) ++improved;
  }
  CHECK(improved >= 9);
}

TEST_CASE("source extraction, decoding and persistence") {
  const MiniData d = setting1_mini(4);
  IvaeConfig cfg;
  cfg.latent_dim = 2;
  cfg.epochs = 5;
  cfg.seed = 2;
  const auto fit = train(d.x, d.u, cfg);
  const IvaeModel& m = fit.model;

  const LatentResult a = extract_sources(m, d.x, d.u);
  const LatentResult b = extract_sources(m, d.x, d.u);
  CHECK(a.sources == b.sources);
  CHECK(a.sources.rows() == d.x.rows());
  CHECK(a.sources.cols() == 2);
  for (double v : a.sd.data()) CHECK(v > 0.0);

  SUBCASE("trend depends on u only") {
    Tensor x2 = d.x.slice_rows(0, 2), u2 = d.u.slice_rows(0, 2);
    for (std::size_t j = 0; j < u2.cols(); ++j) u2(1, j) = u2(0, j);
    x2(1, 0) += 5.0;
    const LatentResult r = extract_sources(m, x2, u2);
    CHECK(r.trend(0, 0) == r.trend(1, 0));
    CHECK(r.trend(0, 1) == r.trend(1, 1));
    CHECK(r.sources(0, 0) != r.sources(1, 0));
  }
  SUBCASE("row permutation permutes the outputs") {
    std::vector<std::size_t> perm(d.x.rows());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 7 + 3) % perm.size();
    const LatentResult p = extract_sources(m, d.x.gather_rows(perm), d.u.gather_rows(perm));
    CHECK(p.sources == a.sources.gather_rows(perm));
    CHECK(p.trend == a.trend.gather_rows(perm));
  }
  SUBCASE("decode") {
    const Tensor same = decode(m, Tensor::from_rows({{0.3, -0.2}, {0.3, -0.2}}));
    CHECK(same.row(0)[0] == same.row(1)[0]);
    CHECK(same.row(0)[2] == same.row(1)[2]);
    CHECK_THROWS_AS(decode(m, Tensor(2, 3)), DimensionError);

    IvaeModel flat = m;
    for (auto& layer : flat.decoder.layers) layer.weight.fill(0.0);
    const Tensor c = decode(flat, Tensor(3, 2, 0.7));
    for (std::size_t j = 0; j < 3; ++j) {
      const double expected = flat.decoder.layers.back().bias[j] * m.x_scaling.sd[j] + m.x_scaling.mean[j];
      CHECK(c(2, j) == doctest::Approx(expected));
    }
  }
  SUBCASE("decoded sources reconstruct x within the level implied by the training recon term") {
    const Tensor xs = m.x_scaling.apply(d.x);
    Rng rng(derive_seed(9, "check"));
    Tensor noise(d.x.rows(), 2);
    for (double& v : noise.data()) v = rng.normal();
    const auto terms = elbo_batch(m, xs, d.u, noise);
    const double log_norm = -0.5 * 3.0 * std::log(2 * std::numbers::pi * m.config.beta);
    const double implied_sq = 2.0 * m.config.beta * (log_norm - terms.recon);
    const Tensor rec = m.x_scaling.apply(decode(m, a.sources));
    double sq = 0.0;
    for (std::size_t k = 0; k < rec.size(); ++k) sq += (rec[k] - xs[k]) * (rec[k] - xs[k]);
    CHECK(sq / static_cast<double>(d.x.rows()) < implied_sq);
  }
  SUBCASE("save and load round trip") {
    const auto dir = oracle::scratch_dir("model");
    save_model(m, (dir / "model").string());
    const IvaeModel back = load_model((dir / "model").string());
    const LatentResult r = extract_sources(back, d.x, d.u);
    CHECK(r.sources == a.sources);
    CHECK(r.trend == a.trend);
    CHECK(back.config.seed == m.config.seed);
    CHECK(mean_elbo(back, d.x, d.u, 5) == mean_elbo(m, d.x, d.u, 5));
  }
}
