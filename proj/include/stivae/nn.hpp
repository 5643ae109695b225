#pragma once

// Feed-forward networks with a recorded tape for reverse-mode gradients,
// Adam updates and the polynomial learning-rate schedule.

#include "stivae/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace stivae::nn {

enum class Activation : std::uint8_t { linear = 0, leaky_relu = 1, elu = 2 };

inline constexpr double kLeakySlope = 0.01;

double activate(Activation a, double x);
/// Derivative of the activation evaluated at the pre-activation value.
double activate_grad(Activation a, double pre);
Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct Layer {
  Tensor weight;  // out x in
  Tensor bias;    // {out}
  Activation activation = Activation::linear;

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }
};

struct Mlp {
  std::vector<Layer> layers;
  std::uint64_t seed = 0;

  std::size_t input_size() const { return layers.front().in(); }
  std::size_t output_size() const { return layers.back().out(); }
  std::size_t parameter_count() const;
};

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases, drawn
/// layer by layer from Rng(seed).
Mlp mlp_new(std::span<const std::size_t> sizes, std::span<const Activation> activations,
            std::uint64_t seed);
/// Convenience: `hidden` layers of the given width/activation and a linear head.
Mlp mlp_new(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
            Activation hidden_activation, std::uint64_t seed);

/// Activations cached by a recording forward pass.
struct Tape {
  bool recorded = false;
  std::vector<Tensor> inputs;  // input to each layer
  std::vector<Tensor> pre;     // pre-activation of each layer
};

struct MlpGrads {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;
  Tensor input;  // d loss / d input
};

Tensor forward(const Mlp& mlp, const Tensor& input);
Tensor forward(const Mlp& mlp, const Tensor& input, Tape& tape);
/// Pulls `grad_output` (d loss / d output, batch x d_out) back through the tape.
MlpGrads backward(const Mlp& mlp, const Tape& tape, const Tensor& grad_output);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// A named view of one parameter array and its gradient.
struct ParamSlot {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

std::vector<ParamSlot> param_slots(Mlp& mlp, const MlpGrads& grads, const std::string& prefix);

/// One bias-corrected Adam update over all slots. Accumulators are created on
/// the first call; later calls must present the same slot sizes.
void adam_step(std::span<const ParamSlot> params, AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Learning rate

struct LrSchedule {
  double initial = 1e-3;
  double final_rate = 1e-4;
  std::int64_t horizon = 10000;
  double power = 2.0;
};

/// final + (initial - final) * (1 - min(step, horizon)/horizon)^power
double lr_at(const LrSchedule& schedule, std::int64_t step);

// ---------------------------------------------------------------------------
// Weight container: "STIVAENN", version byte, u32 layer count, u64 seed,
// per layer (u32 in, u32 out, u8 activation), then per layer the row-major
// weights followed by the bias, all as little-endian float64.

inline constexpr std::uint8_t kWeightFormatVersion = 1;

void save_mlp(std::ostream& os, const Mlp& mlp);
Mlp load_mlp(std::istream& is);
void save_mlp(const std::string& path, const Mlp& mlp);
Mlp load_mlp(const std::string& path);

}  // namespace stivae::nn
