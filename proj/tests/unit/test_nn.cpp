#include "oracles.hpp"

#include "stivae/error.hpp"
#include "stivae/nn.hpp"
#include "stivae/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace stivae;
using nn::Activation;

TEST_CASE("tensor shapes and slicing") {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK(t.column(1) == std::vector<double>{2, 5});
  const std::size_t idx[] = {1, 0};
  CHECK(t.gather_rows(idx) == Tensor::from_rows({{4, 5, 6}, {1, 2, 3}}));
  CHECK(t.slice_cols(1, 3) == Tensor::from_rows({{2, 3}, {5, 6}}));
  CHECK(t.slice_rows(1, 2) == Tensor::from_rows({{4, 5, 6}}));
  CHECK(hconcat(t, t.slice_cols(0, 1)) == Tensor::from_rows({{1, 2, 3, 1}, {4, 5, 6, 4}}));
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(hconcat(t, Tensor(3, 1)), DimensionError);
  t(0, 0) = std::nan("");
  CHECK_THROWS_AS(require_finite(t, "t"), NumericError);
}

TEST_CASE("mlp_new is deterministic and shaped by its sizes") {
  const std::vector<std::size_t> sizes{8, 128, 128, 128, 10};
  const std::vector<Activation> acts(4, Activation::leaky_relu);
  const nn::Mlp a = nn::mlp_new(sizes, acts, 1);
  const nn::Mlp b = nn::mlp_new(sizes, acts, 1);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weight == b.layers[l].weight);
    CHECK(a.layers[l].bias == b.layers[l].bias);
  }

  const std::vector<std::size_t> one{2};
  CHECK_THROWS_AS(nn::mlp_new(one, std::vector<Activation>{}, 1), ConfigError);

  const std::vector<std::size_t> small{3, 4, 2};
  const std::vector<Activation> small_acts{Activation::leaky_relu, Activation::linear};
  const nn::Mlp m = nn::mlp_new(small, small_acts, 5);
  CHECK(m.layers[0].weight.shape() == std::vector<std::size_t>{4, 3});
  CHECK(m.layers[1].weight.shape() == std::vector<std::size_t>{2, 4});
  CHECK_THROWS_AS(nn::mlp_new(small, std::vector<Activation>{Activation::linear}, 1), ConfigError);

  const double limit = std::sqrt(6.0 / 7.0);
  for (double w : m.layers[0].weight.data()) CHECK(std::abs(w) <= limit);
  for (double v : m.layers[0].bias.data()) CHECK(v == 0.0);
}

TEST_CASE("forward examples") {
  const std::vector<std::size_t> sizes{2, 2};
  nn::Mlp m = nn::mlp_new(sizes, std::vector<Activation>{Activation::linear}, 3);
  const Tensor x = Tensor::from_rows({{0.3, -1.2}, {2.0, 0.5}});

  m.layers[0].weight.fill(0.0);
  CHECK(nn::forward(m, x) == Tensor(2, 2, 0.0));

  m.layers[0].weight = Tensor::from_rows({{1, 0}, {0, 1}});
  CHECK(nn::forward(m, x) == x);

  m.layers[0].weight = Tensor::from_rows({{2, 0}, {0, 3}});
  m.layers[0].activation = Activation::leaky_relu;
  const Tensor out = nn::forward(m, Tensor::from_rows({{-1, 1}}));
  CHECK(out(0, 0) == doctest::Approx(-2 * nn::kLeakySlope));
  CHECK(out(0, 1) == doctest::Approx(3));

  CHECK_THROWS_AS(nn::forward(m, Tensor(1, 3)), DimensionError);
  CHECK(nn::forward(m, x) == nn::forward(m, x));
}

TEST_CASE("activations match closed forms and are continuous at zero") {
  for (int i = 0; i < 1000; ++i) {
    const double x = -5.0 + 10.0 * i / 999.0;
    CHECK(nn::activate(Activation::leaky_relu, x) == (x >= 0 ? x : 0.01 * x));
    CHECK(nn::activate(Activation::elu, x) == doctest::Approx(x >= 0 ? x : std::exp(x) - 1).epsilon(1e-15));
  }
  for (auto a : {Activation::leaky_relu, Activation::elu}) {
    CHECK(std::abs(nn::activate(a, 1e-12) - nn::activate(a, -1e-12)) < 1e-11);
  }
  CHECK(nn::parse_activation("leaky-relu") == Activation::leaky_relu);
  CHECK_THROWS_AS(nn::parse_activation("tanh"), ConfigError);
}

TEST_CASE("backward analytic examples") {
  const std::vector<std::size_t> sizes{3, 2};
  nn::Mlp m = nn::mlp_new(sizes, std::vector<Activation>{Activation::linear}, 9);
  const Tensor x = Tensor::from_rows({{1, 2, 3}, {-1, 0, 2}});

  SUBCASE("sum of outputs gives a ones bias gradient per row") {
    nn::Tape tape;
    nn::forward(m, x.slice_rows(0, 1), tape);
    const auto g = nn::backward(m, tape, Tensor(1, 2, 1.0));
    CHECK(g.bias[0][0] == 1.0);
    CHECK(g.bias[0][1] == 1.0);
  }
  SUBCASE("half squared norm of Wx gives (Wx) x^T") {
    nn::Mlp sq = nn::mlp_new(std::vector<std::size_t>{2, 2}, std::vector<Activation>{Activation::linear}, 2);
    const Tensor v = Tensor::from_rows({{0.5, -2.0}});
    nn::Tape tape;
    const Tensor wx = nn::forward(sq, v, tape);
    const auto g = nn::backward(sq, tape, wx);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) CHECK(g.weight[0](i, j) == doctest::Approx(wx(0, i) * v(0, j)));
    }
  }
  SUBCASE("backward without a tape is a state error") {
    nn::Tape empty;
    CHECK_THROWS_AS(nn::backward(m, empty, Tensor(2, 2)), StateError);
  }
}

TEST_CASE("reverse-mode gradients match central differences on random nets") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t depth = 1 + rng.below(3);
    std::vector<std::size_t> sizes{1 + rng.below(6)};
    std::vector<Activation> acts;
    for (std::size_t l = 0; l < depth; ++l) {
      sizes.push_back(1 + rng.below(16));
      acts.push_back(static_cast<Activation>(rng.below(3)));
    }
    nn::Mlp m = nn::mlp_new(sizes, acts, rng.next_u64());
    for (auto& layer : m.layers) {
      for (double& b : layer.bias.data()) b = 0.1 * rng.normal();
    }
    const std::size_t batch = 1 + rng.below(8);
    const Tensor x = oracle::random_tensor(batch, sizes.front(), rng);
    const Tensor y = oracle::nearby_targets(m, x, rng);
    const auto report = oracle::mlp_gradient_check(m, x, y);
    CHECK(report.checked > 0);
    CHECK(report.max_rel < 1e-4);
  }
}

TEST_CASE("adam examples") {
  SUBCASE("single step on a scalar") {
    std::vector<double> value{0.0};
    const std::vector<double> grad{1.0};
    const nn::ParamSlot slots[] = {{"p", value, grad}};
    nn::AdamState state;
    nn::adam_step(slots, state, 0.1);
    CHECK(state.step == 1);
    // m_hat = 1, v_hat = 1, update = 0.1 * 1 / (1 + 1e-8)
    CHECK(value[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("zero gradients are a fixed point") {
    std::vector<double> value{0.3, -0.7};
    const std::vector<double> grad{0.0, 0.0};
    const nn::ParamSlot slots[] = {{"p", value, grad}};
    nn::AdamState state;
    for (int i = 0; i < 5; ++i) nn::adam_step(slots, state, 0.1);
    CHECK(value == std::vector<double>{0.3, -0.7});
    CHECK(state.step == 5);
  }
  SUBCASE("non-finite gradient names the parameter") {
    std::vector<double> value{0.0};
    const std::vector<double> grad{std::nan("")};
    const nn::ParamSlot slots[] = {{"encoder.w0", value, grad}};
    nn::AdamState state;
    try {
      nn::adam_step(slots, state, 0.1);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("encoder.w0") != std::string::npos);
    }
  }
}

TEST_CASE("learning-rate schedule") {
  const nn::LrSchedule s;
  CHECK(nn::lr_at(s, 0) == doctest::Approx(0.001));
  CHECK(nn::lr_at(s, 10000) == doctest::Approx(0.0001));
  CHECK(nn::lr_at(s, 25000) == doctest::Approx(0.0001));
  CHECK(nn::lr_at(s, 5000) == doctest::Approx(0.0001 + 0.0009 * 0.25));
}

TEST_CASE("weight container round trip") {
  const std::vector<std::size_t> sizes{4, 6, 3};
  const std::vector<Activation> acts{Activation::elu, Activation::linear};
  const nn::Mlp m = nn::mlp_new(sizes, acts, 77);
  std::stringstream ss;
  nn::save_mlp(ss, m);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 8) == "STIVAENN");
  const nn::Mlp back = nn::load_mlp(ss);
  CHECK(back.seed == 77);
  REQUIRE(back.layers.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(back.layers[l].weight == m.layers[l].weight);
    CHECK(back.layers[l].bias == m.layers[l].bias);
    CHECK(back.layers[l].activation == m.layers[l].activation);
  }
  std::stringstream bad("NOTAMODEL");
  CHECK_THROWS_AS(nn::load_mlp(bad), DataError);
}

TEST_CASE("rng streams are reproducible and seeds are derived by tag") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_seed(1, "encoder") != derive_seed(1, "decoder"));
  CHECK(derive_seed(1, "fit", 0) != derive_seed(1, "fit", 1));
  CHECK(derive_seed(3, "x", 2) == derive_seed(3, "x", 2));
  Rng r(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}
