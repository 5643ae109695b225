// Acceptance runner: one PASS/FAIL line per criterion. A criterion fails when
// its check fails or when it overruns its time budget.

#include "commands.hpp"
#include "moments.hpp"
#include "oracles.hpp"

#include "stivae/geostat.hpp"
#include "stivae/metrics.hpp"
#include "stivae/predict.hpp"
#include "stivae/simgen.hpp"

#include <CLI11.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#ifndef STIVAE_CLI_PATH
#error "STIVAE_CLI_PATH must name the stivae executable"
#endif

namespace fs = std::filesystem;
using namespace stivae;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  Rng rng(derive_seed(2718, "acceptance-gradients"));
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t depth = 1 + rng.below(3);
    std::vector<std::size_t> sizes{1 + rng.below(6)};
    std::vector<nn::Activation> acts;
    for (std::size_t l = 0; l < depth; ++l) {
      sizes.push_back(1 + rng.below(16));
      acts.push_back(static_cast<nn::Activation>(rng.below(3)));
    }
    nn::Mlp m = nn::mlp_new(sizes, acts, rng.next_u64());
    for (auto& layer : m.layers) {
      for (double& b : layer.bias.data()) b = 0.1 * rng.normal();
    }
    const std::size_t batch = 1 + rng.below(8);
    const Tensor x = oracle::random_tensor(batch, sizes.front(), rng);
    const Tensor y = oracle::nearby_targets(m, x, rng);
    const auto r = oracle::mlp_gradient_check(m, x, y);
    worst = std::max(worst, r.max_rel);
    checked += r.checked;
    kinks += r.skipped_kinks;
  }
  ivae::IvaeConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = {5, 5};
  cfg.aux_hidden = {5};
  cfg.seed = 99;
  ivae::IvaeModel model = ivae::ivae_new(3, 4, cfg);
  for (auto* net : {&model.encoder, &model.decoder, &model.auxiliary}) {
    for (auto& layer : net->layers) {
      for (double& b : layer.bias.data()) b = 0.1 * rng.normal();
    }
  }
  const auto elbo = oracle::elbo_gradient_check(model, oracle::random_tensor(6, 3, rng),
                                                oracle::random_tensor(6, 4, rng), oracle::random_tensor(6, 2, rng));
  const bool pass = worst < 1e-4 && elbo.max_rel < 1e-4 && checked > 0 && elbo.checked > 0;
  std::ostringstream d;
  d << "50 nets: max rel " << fmt("%.2e", worst) << " over " << checked << " entries (" << kinks
    << " kink crossings skipped); iVAE ELBO: max rel " << fmt("%.2e", elbo.max_rel) << " over " << elbo.checked
    << " entries (" << elbo.skipped_kinks << " skipped)";
  return {pass, d.str()};
}

Outcome hungarian() {
  Rng rng(derive_seed(2718, "acceptance-hungarian"));
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t p = 1 + rng.below(6);
    Tensor omega(p, p);
    for (double& v : omega.data()) v = rng.uniform(-1, 1);
    worst = std::max(worst, std::abs(metrics::mcc(omega) - oracle::brute_force_mcc(omega)));
  }
  return {worst <= 1e-12, "1000 random matrices, P <= 6: max |hungarian - brute force| = " + fmt("%.2e", worst)};
}

// Shared by criteria 3 and 4.
cli::MccStudy setting1_study(std::size_t layers) {
  cli::MccStudy st;
  st.setting = 1;
  st.ns = 50;
  st.nt = 100;
  st.p = 3;
  st.s = 5;
  st.layers = layers;
  st.replicates = 10;
  st.seed = 2024;
  return st;
}

std::map<std::string, std::vector<double>> by_method(const std::vector<cli::MccRecord>& recs) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& r : recs) out[r.method].push_back(r.mcc);
  return out;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.3f", x);
  return s;
}

Outcome setting1_linear_mixing() {
  cli::MccStudy st = setting1_study(1);
  st.methods = {"ivae-r"};
  const auto scores = by_method(cli::run_mcc_study(st, 1))["ivae-r"];
  const double med = oracle::median(scores);
  return {med >= 0.90, "iVAEr median MCC " + fmt("%.4f", med) + " (>= 0.90) over 10 seeds [" + list(scores) + "]"};
}

Outcome nonlinearity_separation() {
  cli::MccStudy st = setting1_study(3);
  st.methods = {"ivae-r", "linear"};
  auto scores = by_method(cli::run_mcc_study(st, 1));
  const double ivae = oracle::median(scores["ivae-r"]), linear = oracle::median(scores["linear"]);
  return {ivae - linear >= 0.10, "L = 3: iVAEr median " + fmt("%.4f", ivae) + " [" + list(scores["ivae-r"]) +
                                     "], linear median " + fmt("%.4f", linear) + " [" + list(scores["linear"]) +
                                     "], gap " + fmt("%.4f", ivae - linear) + " (>= 0.10)"};
}

Outcome dimension_selection() {
  cli::DimStudy st;
  st.setting = 6;
  st.ns = 40;
  st.nt = 100;
  st.p = 3;
  st.s = 6;
  st.layers = 3;
  st.replicates = 20;
  st.dims = {2, 3, 4, 5, 6};
  st.seed = 2024;
  const auto recs = cli::run_dim_study(st, 1);
  std::map<std::size_t, std::size_t> picks;
  for (const auto& r : recs) ++picks[r.selected];
  const double share = static_cast<double>(picks[3]) / static_cast<double>(recs.size());
  std::string dist;
  for (auto [r, n] : picks) dist += " R=" + std::to_string(r) + ":" + std::to_string(n);
  return {share >= 0.80, "uAIC selects R = 3 in " + fmt("%.2f", share) + " of 20 replicates (>= 0.80);" + dist};
}

Outcome kriging_exactness() {
  Rng rng(derive_seed(2718, "acceptance-kriging"));
  double worst_sum = 0.0, worst_exact = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20 + rng.below(150);
    aux::Locations loc;
    loc.coords = Tensor(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      loc.coords(i, 0) = rng.uniform();
      loc.coords(i, 1) = rng.uniform();
      loc.times.push_back(std::floor(rng.uniform(1, 31)));
    }
    std::vector<double> values(n);
    for (double& v : values) v = rng.normal();
    geostat::ExpComponent s{0.0, rng.uniform(0.5, 2), rng.uniform(0.05, 0.5)};
    geostat::ExpComponent t{0.0, rng.uniform(0.5, 2), rng.uniform(1, 10)};
    geostat::ProductSumModel m(s, t, 0.0);
    m.k = rng.uniform(0, m.max_k());
    // Targets: half on observed rows, half at random locations.
    aux::Locations targets;
    targets.coords = Tensor(10, 2);
    std::vector<std::size_t> on_row;
    for (std::size_t q = 0; q < 10; ++q) {
      if (q < 5) {
        const std::size_t r = rng.below(n);
        on_row.push_back(r);
        targets.coords(q, 0) = loc.coords(r, 0);
        targets.coords(q, 1) = loc.coords(r, 1);
        targets.times.push_back(loc.times[r]);
      } else {
        targets.coords(q, 0) = rng.uniform();
        targets.coords(q, 1) = rng.uniform();
        targets.times.push_back(std::floor(rng.uniform(1, 31)));
      }
    }
    geostat::KrigeOptions opt;
    opt.neighbors = std::min<std::size_t>(40, n);
    opt.keep_weights = true;
    const auto out = geostat::krige(values, loc, m, targets, opt);
    for (std::size_t q = 0; q < 10; ++q) {
      double sum = 0.0;
      for (double w : out.weights[q]) sum += w;
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      if (q < 5) worst_exact = std::max(worst_exact, std::abs(out.prediction[q] - values[on_row[q]]));
    }
  }
  return {worst_sum < 1e-10 && worst_exact < 1e-8, "100 configurations: max |sum w - 1| = " + fmt("%.2e", worst_sum) +
                                                       ", max interpolation error " + fmt("%.2e", worst_exact)};
}

Outcome prediction_ordering() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    simgen::SimRequest req;
    req.setting = 6;
    req.n_s = 50;
    req.n_t = 60;
    req.p = 3;
    req.s = 5;
    req.layers = 1;
    req.seed = derive_seed(2024, "prediction", seed);
    const auto d = simgen::simulate(req);
    predict::PredictTask task;
    task.mode = predict::Mode::spatial;
    task.seed = seed;
    task.ivae.latent_dim = 3;
    task.ivae.aux_hidden = {16};
    const auto rep = predict::run_prediction(d.x, d.locations, task);
    const double direct = rep.scores.at(0).wmse, kriging = rep.scores.at(1).wmse;
    if (kriging <= direct) ++wins;
    detail += " " + fmt("%.3f", kriging) + "/" + fmt("%.3f", direct);
  }
  return {wins >= 7, "ivae-kriging wMSE <= ivae-direct wMSE on " + std::to_string(wins) +
                         "/10 seeds (>= 7); kriging/direct:" + detail};
}

// ---------------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(STIVAE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Byte comparison of every CSV in `a` against the same file in `b`.
bool same_csvs(const fs::path& a, const fs::path& b, std::size_t& compared, std::string& first_diff) {
  bool same = true;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    const fs::path other = b / fs::relative(e.path(), a);
    ++compared;
    if (!fs::exists(other) || oracle::read_file(e.path().string()) != oracle::read_file(other.string())) {
      if (same) first_diff = fs::relative(e.path(), a).string();
      same = false;
    }
  }
  return same;
}

Outcome replay_determinism() {
  const fs::path root = oracle::scratch_dir("acceptance_replay");
  const fs::path log = root / "log.txt";
  const std::string small = " --epochs 3 --hidden 16 --aux-hidden 16";
  if (run_cli("simulate --setting 6 --ns 30 --nt 40 --p 3 --sdim 5 --layers 2 --seed 11 --out " +
                  (root / "data").string(),
              log) != 0) {
    return {false, "could not simulate the input data"};
  }
  const std::string data = (root / "data" / "dataset.csv").string();
  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "simulate --setting 3 --ns 20 --nt 30 --p 2 --sdim 4 --layers 2 --seed 5 --replicates 2"},
      {"train", "train --data " + data + small + " --seed 4 --save-aux"},
      {"dimsweep", "dimsweep --data " + data + small + " --dims 2,3,4 --seed 6"},
      {"predict", "predict --data " + data + small + " --seed 8 --neighbors 20"},
      {"predict-temporal", "predict --data " + data + small +
                               " --mode temporal --period 20 --deseasonalize --H 2 --G 5 --seed 9 --neighbors 20"},
      {"repro-table2", "repro table2-mini --replicates 2 --ns 20 --nt 30 --epochs 2 --seed 3"},
      {"repro-fig2", "repro fig2-setting1-mini --replicates 2 --ns 20 --nt 30 --epochs 2 --seed 3"},
  };
  std::size_t compared = 0;
  std::string failures;
  for (const auto& [name, args] : commands) {
    const fs::path first = root / (name + "_1"), second = root / (name + "_2"), replay = root / (name + "_replay");
    const int a = run_cli(args + " --out " + first.string(), log);
    const int b = run_cli(args + " --out " + second.string(), log);
    const std::string sidecar = (first / (args.substr(0, args.find(' ')) + ".run.txt")).string();
    const int c = run_cli("replay " + sidecar + " --out " + replay.string(), log);
    if (a != 0 || b != 0 || c != 0) {
      failures += " " + name + "(exit " + std::to_string(a) + "/" + std::to_string(b) + "/" + std::to_string(c) + ")";
      continue;
    }
    std::string diff;
    if (!same_csvs(first, second, compared, diff)) failures += " " + name + ":rerun:" + diff;
    if (!same_csvs(first, replay, compared, diff)) failures += " " + name + ":replay:" + diff;
  }
  return {failures.empty() && compared > 0,
          std::to_string(commands.size()) + " command lines, " + std::to_string(compared) +
              " CSV comparisons (rerun and sidecar replay)" + (failures.empty() ? "" : "; mismatches:" + failures)};
}

Outcome simulation_moments() {
  std::ostringstream d;
  bool pass = true;
  d << "setting 1 variance ratios:";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = moments::setting1_variance_ratio(300, 100, seed);
    pass = pass && c.pass() && c.min_count >= 1000;
    d << " " << fmt("%.3f", c.observed) << "/" << fmt("%.3f", c.expected) << "(n>=" << c.min_count << ")";
  }
  d << "; setting 3 lag-1 autocorrelation max |error|:";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = moments::setting3_autocorrelation(30, 400, seed);
    double worst = 0.0;
    for (std::size_t k = 0; k < c.observed.size(); ++k) worst = std::max(worst, std::abs(c.observed[k] - c.expected[k]));
    pass = pass && c.pass();
    d << " " << fmt("%.3f", worst);
  }
  double worst_closed = 0.0, worst_general = 0.0;
  for (double phi : {0.1, 0.4, 1.3}) {
    for (int i = 1; i <= 200; ++i) {
      const double h = 0.01 * i, r = h / phi;
      const double e05 = std::exp(-r);
      const double e15 = (1 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r);
      const double e25 = (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
      const double ref[] = {e05, e15, e25};
      const double nus[] = {0.5, 1.5, 2.5};
      for (int k = 0; k < 3; ++k) {
        worst_closed = std::max(worst_closed, std::abs(simgen::matern_cov(h, {nus[k], phi}) - ref[k]));
        worst_general = std::max(worst_general, std::abs(simgen::matern_cov(h, {nus[k] + 1e-10, phi}) - ref[k]));
      }
    }
  }
  pass = pass && worst_closed < 1e-12 && worst_general < 1e-6;
  d << "; Matern closed forms max error " << fmt("%.1e", worst_closed) << ", Bessel path near half-integers "
    << fmt("%.1e", worst_general);
  return {pass, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stivae acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion numbers to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 60, gradients},
      {2, "MCC assignment equals brute force", 10, hungarian},
      {3, "Setting 1, L = 1: iVAEr median MCC", 15 * 60, setting1_linear_mixing},
      {4, "Setting 1, L = 3: iVAEr beats linear unmixing", 20 * 60, nonlinearity_separation},
      {5, "uAIC dimension selection", 45 * 60, dimension_selection},
      {6, "kriging exactness and unbiasedness", 60, kriging_exactness},
      {7, "spatial prediction: kriging vs direct", 30 * 60, prediction_ordering},
      {8, "CLI replay determinism", 20 * 60, replay_determinism},
      {9, "simulation moments", 5 * 60, simulation_moments},
  };
  bool all = true;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    all = all && pass;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " (" << fmt("%.1f", secs)
              << " s of " << fmt("%.0f", c.budget_seconds) << " s" << (in_time ? "" : ", over budget") << ")"
              << std::endl;
  }
  return all ? 0 : 1;
}
