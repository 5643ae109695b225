#include "stivae/nn.hpp"

#include "stivae/error.hpp"
#include "stivae/rng.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace stivae::nn {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::linear:
      return x;
    case Activation::leaky_relu:
      return x >= 0.0 ? x : kLeakySlope * x;
    case Activation::elu:
      return x >= 0.0 ? x : std::expm1(x);
  }
  return x;
}

double activate_grad(Activation a, double pre) {
  switch (a) {
    case Activation::linear:
      return 1.0;
    case Activation::leaky_relu:
      return pre >= 0.0 ? 1.0 : kLeakySlope;
    case Activation::elu:
      return pre >= 0.0 ? 1.0 : std::exp(pre);
  }
  return 1.0;
}

Activation parse_activation(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "leaky-relu" || name == "leaky_relu") return Activation::leaky_relu;
  if (name == "elu") return Activation::elu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear:
      return "linear";
    case Activation::leaky_relu:
      return "leaky-relu";
    case Activation::elu:
      return "elu";
  }
  return "?";
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Mlp mlp_new(std::span<const std::size_t> sizes, std::span<const Activation> activations,
            std::uint64_t seed) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least two layer sizes");
  if (activations.size() != sizes.size() - 1) {
    throw ConfigError("expected " + std::to_string(sizes.size() - 1) + " activations, got " +
                      std::to_string(activations.size()));
  }
  for (std::size_t s : sizes) {
    if (s == 0) throw ConfigError("layer sizes must be positive");
  }
  Rng rng(seed);
  Mlp mlp;
  mlp.seed = seed;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::size_t in = sizes[i], out = sizes[i + 1];
    Layer layer{Tensor(out, in), Tensor(std::vector<std::size_t>{out}, 0.0), activations[i]};
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

Mlp mlp_new(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
            Activation hidden_activation, std::uint64_t seed) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  std::vector<Activation> acts(hidden.size(), hidden_activation);
  acts.push_back(Activation::linear);
  return mlp_new(sizes, acts, seed);
}

namespace {

void check_input(const Mlp& mlp, const Tensor& input) {
  if (mlp.layers.empty()) throw StateError("forward on an empty MLP");
  if (input.rank() != 2 || input.cols() != mlp.input_size()) {
    throw DimensionError("MLP expects batch x " + std::to_string(mlp.input_size()) + " input, got " +
                         shape_string(input));
  }
}

// pre = input * W^T + b
Tensor affine(const Layer& layer, const Tensor& input) {
  Tensor pre(input.rows(), layer.out());
  auto out = pre.map();
  out.noalias() = input.map() * layer.weight.map().transpose();
  out.rowwise() += layer.bias.map().row(0);
  return pre;
}

Tensor apply_activation(Activation a, const Tensor& pre) {
  Tensor post = pre;
  if (a != Activation::linear) {
    for (double& v : post.data()) v = activate(a, v);
  }
  return post;
}

}  // namespace

Tensor forward(const Mlp& mlp, const Tensor& input) {
  check_input(mlp, input);
  Tensor h = input;
  for (const auto& layer : mlp.layers) h = apply_activation(layer.activation, affine(layer, h));
  return h;
}

Tensor forward(const Mlp& mlp, const Tensor& input, Tape& tape) {
  check_input(mlp, input);
  tape.inputs.clear();
  tape.pre.clear();
  Tensor h = input;
  for (const auto& layer : mlp.layers) {
    Tensor pre = affine(layer, h);
    tape.inputs.push_back(std::move(h));
    h = apply_activation(layer.activation, pre);
    tape.pre.push_back(std::move(pre));
  }
  tape.recorded = true;
  return h;
}

MlpGrads backward(const Mlp& mlp, const Tape& tape, const Tensor& grad_output) {
  if (!tape.recorded || tape.pre.size() != mlp.layers.size()) {
    throw StateError("backward called without a recorded forward tape");
  }
  const std::size_t batch = tape.pre.back().rows();
  if (grad_output.rows() != batch || grad_output.cols() != mlp.output_size()) {
    throw DimensionError("output gradient has shape " + shape_string(grad_output));
  }
  MlpGrads g;
  g.weight.resize(mlp.layers.size());
  g.bias.resize(mlp.layers.size());
  Tensor delta = grad_output;
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const Layer& layer = mlp.layers[li];
    if (layer.activation != Activation::linear) {
      const auto pre = tape.pre[li].data();
      auto d = delta.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] *= activate_grad(layer.activation, pre[k]);
    }
    g.weight[li] = Tensor(layer.out(), layer.in());
    g.weight[li].map().noalias() = delta.map().transpose() * tape.inputs[li].map();
    g.bias[li] = Tensor({layer.out()});
    g.bias[li].map().row(0) = delta.map().colwise().sum();
    Tensor next(batch, layer.in());
    next.map().noalias() = delta.map() * layer.weight.map();
    delta = std::move(next);
  }
  g.input = std::move(delta);
  return g;
}

std::vector<ParamSlot> param_slots(Mlp& mlp, const MlpGrads& grads, const std::string& prefix) {
  std::vector<ParamSlot> slots;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i);
    slots.push_back({base + ".weight", mlp.layers[i].weight.data(), grads.weight[i].data()});
    slots.push_back({base + ".bias", mlp.layers[i].bias.data(), grads.bias[i].data()});
  }
  return slots;
}

void adam_step(std::span<const ParamSlot> params, AdamState& state, double lr) {
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size()) {
      throw DimensionError("parameter/gradient size mismatch at " + p.name);
    }
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient at " + p.name);
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("Adam state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].value.size()) {
      throw DimensionError("Adam state shape mismatch at " + params[i].name);
    }
  }

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto value = params[i].value;
    const auto grad = params[i].grad;
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      value[k] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double lr_at(const LrSchedule& s, std::int64_t step) {
  if (step < 0) step = 0;
  const double frac =
      1.0 - static_cast<double>(std::min(step, s.horizon)) / static_cast<double>(s.horizon);
  return s.final_rate + (s.initial - s.final_rate) * std::pow(frac, s.power);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic{'S', 'T', 'I', 'V', 'A', 'E', 'N', 'N'};

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    os.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <class T>
T get_le(std::istream& is) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = is.get();
    if (c == EOF) throw DataError("truncated weight container");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

void put_f64(std::ostream& os, double d) { put_le(os, std::bit_cast<std::uint64_t>(d)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

}  // namespace

void save_mlp(std::ostream& os, const Mlp& mlp) {
  os.write(kMagic.data(), kMagic.size());
  os.put(static_cast<char>(kWeightFormatVersion));
  put_le(os, static_cast<std::uint32_t>(mlp.layers.size()));
  put_le(os, mlp.seed);
  for (const auto& l : mlp.layers) {
    put_le(os, static_cast<std::uint32_t>(l.in()));
    put_le(os, static_cast<std::uint32_t>(l.out()));
    put_le(os, static_cast<std::uint8_t>(l.activation));
  }
  for (const auto& l : mlp.layers) {
    for (double w : l.weight.data()) put_f64(os, w);
    for (double b : l.bias.data()) put_f64(os, b);
  }
  if (!os) throw DataError("failed to write weight container");
}

Mlp load_mlp(std::istream& is) {
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw DataError("not a weight container (bad magic)");
  const int version = is.get();
  if (version != kWeightFormatVersion) {
    throw DataError("unsupported weight container version " + std::to_string(version));
  }
  const auto n_layers = get_le<std::uint32_t>(is);
  Mlp mlp;
  mlp.seed = get_le<std::uint64_t>(is);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto in = get_le<std::uint32_t>(is);
    const auto out = get_le<std::uint32_t>(is);
    const auto act = get_le<std::uint8_t>(is);
    if (act > 2) throw DataError("unknown activation tag in weight container");
    if (i > 0 && mlp.layers.back().out() != in) throw DataError("inconsistent layer dims in weight container");
    mlp.layers.push_back({Tensor(out, in), Tensor({out}), static_cast<Activation>(act)});
  }
  for (auto& l : mlp.layers) {
    for (double& w : l.weight.data()) w = get_f64(is);
    for (double& b : l.bias.data()) b = get_f64(is);
  }
  return mlp;
}

void save_mlp(const std::string& path, const Mlp& mlp) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  save_mlp(os, mlp);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return load_mlp(is);
}

}  // namespace stivae::nn
