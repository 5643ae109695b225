#include "commands.hpp"

#include "stivae/error.hpp"
#include "stivae/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace stivae;
using namespace stivae::cli;

struct State {
  CommonOptions common;
  SimulateOptions simulate;
  TrainOptions train;
  DimsweepOptions dimsweep;
  PredictOptions predict;
  ReproOptions repro;
};

void add_common(CLI::App* sub, CommonOptions& c) {
  sub->add_option("--out", c.out, "output directory")->envname("STIVAE_OUT_DIR");
  sub->add_option("--jobs", c.jobs, "worker threads")->envname("STIVAE_JOBS")->check(CLI::PositiveNumber);
}

void add_aux(CLI::App* sub, AuxOptions& a) {
  sub->add_option("--aux", a.kind, "auxiliary builder: coords, s1, s2, s3, radial");
  sub->add_option("--H", a.spatial_levels, "spatial resolution levels");
  sub->add_option("--G", a.temporal_levels, "temporal resolution levels");
  sub->add_option("--kernel", a.kernel, "radial kernel: gaussian, wendland");
  sub->add_option("--segments", a.segments, "spatial segments per axis");
  sub->add_option("--segment-length", a.segment_length, "temporal segment length");
}

void add_ivae(CLI::App* sub, IvaeOptions& v) {
  sub->add_option("--latent", v.latent, "latent dimension (0: number of z columns)");
  sub->add_option("--epochs", v.epochs, "training epochs")->check(CLI::PositiveNumber);
  sub->add_option("--batch", v.batch, "minibatch size")->check(CLI::PositiveNumber);
  sub->add_option("--beta", v.beta, "weight of the auxiliary prior mean in the ELBO");
  sub->add_option("--hidden", v.hidden, "encoder/decoder hidden widths");
  sub->add_option("--aux-hidden", v.aux_hidden, "auxiliary network hidden widths");
  sub->add_option("--activation", v.activation, "hidden activation: leaky-relu, elu, linear");
  sub->add_option("--lr", v.lr, "initial learning rate");
  sub->add_option("--lr-final", v.lr_final, "final learning rate");
  sub->add_option("--lr-horizon", v.lr_horizon, "decay steps");
}

void build(CLI::App& app, State& s) {
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--setting", s.simulate.setting, "simulation setting 1-6")->check(CLI::Range(1, 6));
  sim->add_option("--ns", s.simulate.ns, "spatial locations")->check(CLI::PositiveNumber);
  sim->add_option("--nt", s.simulate.nt, "time points")->check(CLI::PositiveNumber);
  sim->add_option("--p", s.simulate.p, "latent components")->check(CLI::PositiveNumber);
  sim->add_option("--sdim", s.simulate.sdim, "observed dimension")->check(CLI::PositiveNumber);
  sim->add_option("--layers", s.simulate.layers, "mixing layers")->check(CLI::PositiveNumber);
  sim->add_option("--seed", s.simulate.seed, "random seed");
  sim->add_option("--time-form", s.simulate.time_form, "time variance form: frequency, additive");
  sim->add_option("--burn-in", s.simulate.burn_in, "VAR burn-in steps")->check(CLI::NonNegativeNumber);
  sim->add_option("--replicates", s.simulate.replicates, "independent datasets")->check(CLI::PositiveNumber);
  add_common(sim, s.common);

  auto* train = app.add_subcommand("train", "fit an iVAE and extract latent components");
  train->add_option("--data", s.train.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  add_aux(train, s.train.aux);
  add_ivae(train, s.train.ivae);
  train->add_option("--seed", s.train.seed, "random seed");
  train->add_flag("--save-aux", s.train.save_aux, "write the auxiliary matrix");
  add_common(train, s.common);

  auto* sweep = app.add_subcommand("dimsweep", "select the latent dimension by uAIC");
  sweep->add_option("--data", s.dimsweep.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--dims", s.dimsweep.dims, "candidate dimensions (default 2..S)");
  add_aux(sweep, s.dimsweep.aux);
  add_ivae(sweep, s.dimsweep.ivae);
  sweep->add_option("--seed", s.dimsweep.seed, "random seed");
  add_common(sweep, s.common);

  auto* pred = app.add_subcommand("predict", "hold out part of the data and predict it");
  pred->add_option("--data", s.predict.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  pred->add_option("--mode", s.predict.mode, "holdout: spatial, temporal, spatio-temporal");
  pred->add_option("--strategies", s.predict.strategies, "ivae-direct, ivae-kriging");
  pred->add_option("--holdout", s.predict.holdout, "held-out fraction")->check(CLI::Range(0.0, 1.0));
  pred->add_option("--period", s.predict.period, "seasonal period (0: none)")->check(CLI::NonNegativeNumber);
  pred->add_flag("--deseasonalize", s.predict.deseasonalize, "remove station harmonics before training");
  add_aux(pred, s.predict.aux);
  add_ivae(pred, s.predict.ivae);
  pred->add_option("--neighbors", s.predict.neighbors, "kriging neighbours")->check(CLI::PositiveNumber);
  pred->add_option("--variogram", s.predict.variogram, "variogram model: product-sum, spatial");
  pred->add_option("--seed", s.predict.seed, "random seed");
  add_common(pred, s.common);

  auto* repro = app.add_subcommand("repro", "run a desk-scale reproduction");
  repro->add_option("id", s.repro.id, "reproduction id")->required();
  repro->add_option("--replicates", s.repro.replicates, "replicates (0: default)");
  repro->add_option("--ns", s.repro.ns, "spatial locations (0: default)");
  repro->add_option("--nt", s.repro.nt, "time points (0: default)");
  repro->add_option("--epochs", s.repro.epochs, "training epochs (0: default)");
  repro->add_option("--methods", s.repro.methods, "methods (default: all)");
  repro->add_option("--seed", s.repro.seed, "random seed");
  add_common(repro, s.common);
}

/// Flat key-value record of every option of the selected subcommand.
void write_sidecar(const CLI::App* sub, const std::string& out) {
  io::KeyValues kv;
  kv.set("command", sub->get_name());
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name().empty() || opt == sub->get_help_ptr()) continue;
    std::string key = opt->get_single_name();
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      value = res.empty() ? "" : res.back();
    } else {
      value = opt->get_default_str();
    }
    if (opt->get_expected_min() == 0) {
      const bool on = opt->count() > 0 ? opt->as<bool>() : false;
      value = on ? "true" : "false";
    }
    kv.set(key, value);
  }
  io::write_key_values((std::filesystem::path(out) / (sub->get_name() + ".run.txt")).string(), kv);
}

/// Rebuilds a command line from a sidecar; `extra` arguments follow and win.
std::vector<std::string> expand_sidecar(const std::string& path, const std::vector<std::string>& extra) {
  const io::KeyValues kv = io::read_key_values(path);
  std::vector<std::string> args{kv.get("command")};
  for (const auto& [key, value] : kv.entries()) {
    if (key == "command" || value.empty()) continue;
    if (key == "id") {
      args.push_back(value);
    } else {
      args.push_back("--" + key + "=" + value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

int run(std::vector<std::string> args) {
  CLI::App app{"Identifiable VAE blind source separation for spatio-temporal data", "stivae"};
  State s;
  build(app, s);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (name == "simulate") {
    cmd_simulate(s.simulate, s.common);
  } else if (name == "train") {
    cmd_train(s.train, s.common);
  } else if (name == "dimsweep") {
    cmd_dimsweep(s.dimsweep, s.common);
  } else if (name == "predict") {
    cmd_predict(s.predict, s.common);
  } else if (name == "repro") {
    cmd_repro(s.repro, s.common);
  }
  write_sidecar(sub, s.common.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty() && (args[0] == "replay" || args[0] == "--task")) {
      if (args.size() < 2) {
        std::cerr << "usage: stivae " << args[0] << " <run file> [overrides...]\n";
        return 1;
      }
      args = expand_sidecar(args[1], {args.begin() + 2, args.end()});
    }
    return run(std::move(args));
  } catch (const stivae::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return stivae::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
