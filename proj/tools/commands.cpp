#include "commands.hpp"

#include "stivae/error.hpp"
#include "stivae/io.hpp"
#include "stivae/metrics.hpp"
#include "stivae/parallel.hpp"
#include "stivae/rng.hpp"
#include "stivae/simgen.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

namespace stivae::cli {

namespace {

std::string path_in(const CommonOptions& c, const std::string& name) {
  std::filesystem::create_directories(c.out);
  return (std::filesystem::path(c.out) / name).string();
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  return out;
}

std::string fmt(double v) { return io::format_double(v); }

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

}  // namespace

aux::AuxConfig AuxOptions::to_config() const {
  aux::AuxConfig cfg;
  cfg.kind = aux::parse_aux_kind(kind);
  cfg.resolution.spatial_levels = io::parse_int_list(spatial_levels);
  cfg.resolution.temporal_levels = io::parse_int_list(temporal_levels);
  cfg.resolution.kernel = aux::parse_kernel(kernel);
  cfg.spatial_segments = segments;
  cfg.time_segment_length = segment_length;
  cfg.resolution.validate();
  return cfg;
}

ivae::IvaeConfig IvaeOptions::to_config(std::size_t latent_dim, std::uint64_t seed) const {
  ivae::IvaeConfig cfg;
  cfg.latent_dim = latent_dim;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.beta = beta;
  cfg.hidden = io::parse_size_list(hidden);
  cfg.aux_hidden = io::parse_size_list(aux_hidden);
  cfg.activation = nn::parse_activation(activation);
  cfg.schedule.initial = lr;
  cfg.schedule.final_rate = lr_final;
  cfg.schedule.horizon = lr_horizon;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

Dataset read_dataset(const std::string& path) {
  const io::Table t = io::read_csv(path);
  Dataset d;
  const auto coords = t.numbered("s");
  if (coords.empty()) throw DataError(path + ": no coordinate columns s1, s2, ...");
  if (!t.has("t")) throw DataError(path + ": no time column t");
  const auto xs = t.numbered("x");
  if (xs.empty()) throw DataError(path + ": no observation columns x1, x2, ...");
  d.locations.coords = t.select(coords);
  d.locations.times = t.column("t");
  d.locations.validate();
  d.x = t.select(xs);
  require_finite(d.x, path + " observations");
  const auto zs = t.numbered("z");
  if (!zs.empty()) d.z = t.select(zs);
  return d;
}

namespace {

io::Table location_table(const aux::Locations& loc) {
  io::Table t;
  for (std::size_t a = 0; a < loc.dims(); ++a) t.columns.push_back("s" + std::to_string(a + 1));
  t.columns.push_back("t");
  t.values = Tensor(loc.size(), t.columns.size());
  for (std::size_t i = 0; i < loc.size(); ++i) {
    for (std::size_t a = 0; a < loc.dims(); ++a) t.values(i, a) = loc.coords(i, a);
    t.values(i, loc.dims()) = loc.times[i];
  }
  return t;
}

io::Table append_columns(io::Table t, const std::string& prefix, const Tensor& m) {
  Tensor v(t.values.rows(), t.columns.size() + m.cols());
  for (std::size_t i = 0; i < v.rows(); ++i) {
    for (std::size_t j = 0; j < t.columns.size(); ++j) v(i, j) = t.values(i, j);
    for (std::size_t j = 0; j < m.cols(); ++j) v(i, t.columns.size() + j) = m(i, j);
  }
  for (std::size_t j = 0; j < m.cols(); ++j) t.columns.push_back(prefix + std::to_string(j + 1));
  t.values = std::move(v);
  return t;
}

std::size_t resolve_latent(const IvaeOptions& o, const Dataset& d) {
  if (o.latent > 0) return o.latent;
  if (d.z) return d.z->cols();
  throw ConfigError("--latent is required when the data has no z columns");
}

}  // namespace

void cmd_simulate(const SimulateOptions& o, const CommonOptions& c) {
  if (o.replicates < 1) throw ConfigError("--replicates must be >= 1");
  simgen::SimOptions sim;
  if (o.time_form == "frequency") {
    sim.time_form = simgen::TimeVarianceForm::frequency;
  } else if (o.time_form == "additive") {
    sim.time_form = simgen::TimeVarianceForm::additive;
  } else {
    throw ConfigError("--time-form must be frequency or additive");
  }
  sim.burn_in = o.burn_in;
  std::vector<std::vector<std::string>> warnings(o.replicates);
  parallel_for(o.replicates, c.jobs, [&](std::size_t r) {
    simgen::SimRequest req{o.setting, o.ns, o.nt, o.p, o.sdim, o.layers,
                           o.replicates == 1 ? o.seed : derive_seed(o.seed, "replicate", r), sim};
    const auto d = simgen::simulate(req);
    const std::string stem = o.replicates == 1 ? "dataset" : "dataset_r" + std::to_string(r + 1);
    simgen::write_dataset(path_in(c, stem + ".csv"), d);
    io::write_key_values(path_in(c, stem + ".params.txt"), d.params);
    warnings[r] = d.warnings;
  });
  for (const auto& w : warnings) {
    for (const auto& m : w) warn(m);
  }
}

void cmd_train(const TrainOptions& o, const CommonOptions& c) {
  const Dataset d = read_dataset(o.data);
  const auto builder = aux::AuxBuilder::fit(o.aux.to_config(), d.locations);
  const auto u = builder.apply(d.locations);
  const auto cfg = o.ivae.to_config(resolve_latent(o.ivae, d), o.seed);
  const auto fit = ivae::train(d.x, u.values, cfg);

  ivae::save_model(fit.model, path_in(c, "model"));
  if (o.save_aux) io::write_aux_csv(path_in(c, "aux.csv"), u);
  io::Table latent = location_table(d.locations);
  latent = append_columns(std::move(latent), "ic", fit.latent.sources);
  latent = append_columns(std::move(latent), "trend", fit.latent.trend);
  latent = append_columns(std::move(latent), "sd", fit.latent.sd);
  io::write_csv(path_in(c, "latent.csv"), latent);

  std::vector<std::vector<std::string>> metrics{{"final_elbo", fmt(fit.latent.final_elbo)},
                                                {"elbo_total", fmt(fit.latent.final_elbo * double(d.x.rows()))}};
  if (d.z) {
    if (d.z->cols() != cfg.latent_dim) {
      warn("truth has " + std::to_string(d.z->cols()) + " components but the model has " +
           std::to_string(cfg.latent_dim) + "; MCC skipped");
    } else {
      std::size_t degenerate = 0;
      const Tensor omega = metrics::correlation_matrix(*d.z, fit.latent.sources, &degenerate);
      if (degenerate) warn(std::to_string(degenerate) + " component(s) with zero variance scored as correlation 0");
      metrics.push_back({"mcc", fmt(metrics::mcc(omega))});
    }
  }
  io::write_text_csv(path_in(c, "metrics.csv"), {"metric", "value"}, metrics);
  std::vector<std::vector<std::string>> history;
  for (std::size_t e = 0; e < fit.latent.elbo_history.size(); ++e) {
    history.push_back({std::to_string(e + 1), fmt(fit.latent.elbo_history[e])});
  }
  io::write_text_csv(path_in(c, "elbo_history.csv"), {"epoch", "elbo"}, history);
}

std::size_t cmd_dimsweep(const DimsweepOptions& o, const CommonOptions& c) {
  const Dataset d = read_dataset(o.data);
  std::vector<std::size_t> dims = o.dims.empty() ? std::vector<std::size_t>{} : io::parse_size_list(o.dims);
  if (dims.empty()) {
    for (std::size_t r = 2; r <= d.x.cols(); ++r) dims.push_back(r);
  }
  const auto builder = aux::AuxBuilder::fit(o.aux.to_config(), d.locations);
  const auto u = builder.apply(d.locations);
  const auto rows = dimsel::sweep_dims(d.x, u.values, dims, o.ivae.to_config(1, o.seed), c.jobs);
  dimsel::write_knee_csv(path_in(c, "knee.csv"), rows);
  const std::size_t chosen = dimsel::select_dim(rows);
  std::cout << "selected latent dimension: " << chosen << '\n';
  return chosen;
}

void cmd_predict(const PredictOptions& o, const CommonOptions& c) {
  const Dataset d = read_dataset(o.data);
  predict::PredictTask task;
  task.mode = predict::parse_mode(o.mode);
  task.strategies.clear();
  for (const auto& s : split_names(o.strategies)) task.strategies.push_back(predict::parse_strategy(s));
  task.holdout_fraction = o.holdout;
  task.seed = o.seed;
  if (o.period > 0) task.period = o.period;
  task.deseasonalize = o.deseasonalize;
  const auto aux_cfg = o.aux.to_config();
  if (aux_cfg.kind != aux::AuxKind::radial) throw ConfigError("prediction needs radial auxiliary variables");
  task.resolution = aux_cfg.resolution;
  task.ivae = o.ivae.to_config(resolve_latent(o.ivae, d), o.seed);
  task.kriging.neighbors = o.neighbors;
  if (o.variogram == "product-sum") {
    task.kriging.kind = predict::VariogramKind::product_sum;
  } else if (o.variogram == "spatial") {
    task.kriging.kind = predict::VariogramKind::spatial;
  } else {
    throw ConfigError("--variogram must be product-sum or spatial");
  }
  task.kriging.variogram.seed = o.seed;

  const auto report = predict::run_prediction(d.x, d.locations, task);
  for (const auto& w : report.warnings) warn(w);

  const aux::Locations target_loc = d.locations.subset(report.target_rows);
  std::vector<std::vector<std::string>> errors, summary;
  auto record = [&](const std::string& name, const predict::StrategyScore& s) {
    for (std::size_t v = 0; v < s.mse.size(); ++v) {
      errors.push_back({name, "x" + std::to_string(v + 1), fmt(s.mse[v]), fmt(s.mae[v])});
    }
    summary.push_back({name, fmt(s.wmse), fmt(s.wmae)});
  };
  for (const auto& s : report.scores) {
    const std::string name = predict::to_string(s.strategy);
    record(name, s);
    io::Table t = location_table(target_loc);
    t = append_columns(std::move(t), "xhat", s.prediction);
    io::write_csv(path_in(c, "predictions_" + name + ".csv"), t);
  }
  record("training-mean", report.mean_baseline);
  io::write_text_csv(path_in(c, "errors.csv"), {"method", "variable", "mse", "mae"}, errors);
  io::write_text_csv(path_in(c, "summary.csv"), {"method", "wmse", "wmae"}, summary);
  for (const auto& row : summary) std::cout << row[0] << ": wMSE " << row[1] << ", wMAE " << row[2] << '\n';
}

std::vector<std::string> repro_ids() { return {"table2-mini", "fig2-setting1-mini"}; }

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void cmd_repro(const ReproOptions& o, const CommonOptions& c) {
  if (o.id == "table2-mini") {
    DimStudy st;
    st.seed = o.seed;
    if (o.replicates) st.replicates = o.replicates;
    if (o.ns) st.ns = o.ns;
    if (o.nt) st.nt = o.nt;
    if (o.epochs) st.ivae.epochs = o.epochs;
    const auto recs = run_dim_study(st, c.jobs);
    std::vector<std::vector<std::string>> rows;
    std::map<std::size_t, std::size_t> picks;
    for (const auto& r : recs) {
      ++picks[r.selected];
      for (const auto& row : r.rows) {
        rows.push_back({std::to_string(r.replicate + 1), std::to_string(row.latent_dim), fmt(row.elbo_total),
                        fmt(row.uaic), row.latent_dim == r.selected ? "1" : "0"});
      }
    }
    io::write_text_csv(path_in(c, "table2_mini.csv"), {"replicate", "R", "elbo", "uaic", "selected"}, rows);
    std::vector<std::vector<std::string>> props;
    std::cout << "Selected latent dimension proportions (setting " << st.setting << ", true P = " << st.p
              << ", " << recs.size() << " replicates)\n";
    for (std::size_t r : st.dims) {
      const double prop = static_cast<double>(picks[r]) / static_cast<double>(recs.size());
      props.push_back({std::to_string(r), fmt(prop)});
      char line[64];
      std::snprintf(line, sizeof line, "  R = %zu: %.2f\n", r, prop);
      std::cout << line;
    }
    io::write_text_csv(path_in(c, "table2_mini_proportions.csv"), {"R", "proportion"}, props);
    return;
  }
  if (o.id == "fig2-setting1-mini") {
    MccStudy st;
    st.seed = o.seed;
    st.methods = o.methods.empty()
                     ? std::vector<std::string>{"ivae-r", "ivae-s1", "ivae-s2", "ivae-s3", "ivae-c", "linear"}
                     : split_names(o.methods);
    if (o.replicates) st.replicates = o.replicates;
    if (o.ns) st.ns = o.ns;
    if (o.nt) st.nt = o.nt;
    if (o.epochs) st.ivae.epochs = o.epochs;
    const auto recs = run_mcc_study(st, c.jobs);
    std::vector<std::vector<std::string>> rows;
    std::map<std::string, std::vector<double>> by_method;
    for (const auto& r : recs) {
      rows.push_back({std::to_string(r.setting), r.method, std::to_string(r.replicate + 1), std::to_string(r.layers),
                      fmt(r.mcc)});
      by_method[r.method].push_back(r.mcc);
    }
    io::write_text_csv(path_in(c, "fig2_setting1_mini.csv"), {"setting", "method", "replicate", "L", "mcc"}, rows);
    std::cout << "Median MCC per method (setting 1, L = " << st.layers << ", " << st.replicates << " replicates)\n";
    for (const auto& m : st.methods) {
      char line[96];
      std::snprintf(line, sizeof line, "  %-10s %.4f\n", m.c_str(), median(by_method[m]));
      std::cout << line;
    }
    return;
  }
  std::string list;
  for (const auto& id : repro_ids()) list += "\n  " + id;
  throw ConfigError("unknown reproduction '" + o.id + "'; available:" + list);
}

namespace {

aux::AuxKind method_aux(const std::string& m) {
  if (m == "ivae-r") return aux::AuxKind::radial;
  if (m == "ivae-s1") return aux::AuxKind::s1;
  if (m == "ivae-s2") return aux::AuxKind::s2;
  if (m == "ivae-s3") return aux::AuxKind::s3;
  if (m == "ivae-c") return aux::AuxKind::coords;
  throw ConfigError("unknown method '" + m + "' (ivae-r, ivae-s1, ivae-s2, ivae-s3, ivae-c, linear)");
}

}  // namespace

std::vector<MccRecord> run_mcc_study(const MccStudy& st, std::size_t jobs) {
  for (const auto& m : st.methods) {
    if (m != "linear") method_aux(m);
  }
  const std::size_t per = st.methods.size();
  std::vector<MccRecord> out(st.replicates * per);
  parallel_for(out.size(), jobs, [&](std::size_t k) {
    const std::size_t r = k / per;
    const std::string& method = st.methods[k % per];
    const std::uint64_t data_seed = derive_seed(st.seed, "replicate", r);
    const auto d = simgen::simulate({st.setting, st.ns, st.nt, st.p, st.s, st.layers, data_seed, {}});
    double score = 0.0;
    if (method == "linear") {
      score = metrics::linear_unmixing_mcc(d.z, d.x);
    } else {
      aux::AuxConfig cfg = st.aux.to_config();
      cfg.kind = method_aux(method);
      const auto u = aux::AuxBuilder::fit(cfg, d.locations).apply(d.locations);
      const auto fit = ivae::train(d.x, u.values, st.ivae.to_config(st.p, derive_seed(data_seed, "fit", k % per)));
      score = metrics::mcc(d.z, fit.latent.sources);
    }
    out[k] = {st.setting, method, r, st.layers, score};
  });
  return out;
}

std::vector<DimRecord> run_dim_study(const DimStudy& st, std::size_t jobs) {
  std::vector<DimRecord> out(st.replicates);
  parallel_for(st.replicates, jobs, [&](std::size_t r) {
    const std::uint64_t data_seed = derive_seed(st.seed, "replicate", r);
    const auto d = simgen::simulate({st.setting, st.ns, st.nt, st.p, st.s, st.layers, data_seed, {}});
    const auto u = aux::AuxBuilder::fit(st.aux.to_config(), d.locations).apply(d.locations);
    const auto rows = dimsel::sweep_dims(d.x, u.values, st.dims, st.ivae.to_config(1, data_seed), 1);
    out[r] = {r, rows, dimsel::select_dim(rows)};
  });
  return out;
}

}  // namespace stivae::cli
