// clustmix: differentially private synthetic data from cluster mixing.
//
// Subcommands: calibrate, toy, synthesize, evaluate, pipeline.
// Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 infeasible
// privacy configuration, 5 internal failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clustmix/dataset.hpp"
#include "clustmix/errors.hpp"
#include "clustmix/eval.hpp"
#include "clustmix/gdp.hpp"
#include "clustmix/json_io.hpp"
#include "clustmix/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInfeasible = 4;
constexpr int kExitInternal = 5;

using nlohmann::json;

std::int64_t file_mtime_seconds(const std::string& path) {
  const auto sys = std::chrono::file_clock::to_sys(
      std::filesystem::last_write_time(path));
  return std::chrono::duration_cast<std::chrono::seconds>(sys.time_since_epoch())
      .count();
}

json input_manifest_entry(const std::string& path) {
  return json{{"path", path},
              {"fnv1a64", clustmix::file_digest_fnv1a64(path)},
              {"mtime", file_mtime_seconds(path)}};
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw clustmix::DataError("cannot write report: " + path);
  out << j.dump(2) << '\n';
}

struct CalibrateArgs {
  double epsilon = 1.0;
  double delta = 1e-5;
  std::optional<long long> l;
  std::optional<double> sigma_max;
  int classes = 1;
  int features = 1;
  bool as_json = false;
};

int run_calibrate(const CalibrateArgs& args) {
  if (args.l.has_value() == args.sigma_max.has_value()) {
    throw clustmix::ConfigError("calibrate: give exactly one of --l or --sigma-max");
  }
  json out{{"epsilon", args.epsilon},
           {"delta", args.delta},
           {"C", args.classes},
           {"D", args.features}};
  if (args.l) {
    const double sigma = clustmix::calibrate_sigma(args.epsilon, args.delta, *args.l,
                                                   args.classes, args.features);
    out["l"] = *args.l;
    out["sigma_min"] = sigma;
    if (args.as_json) {
      std::cout << out.dump(2) << '\n';
    } else {
      std::cout << "sigma_min = " << clustmix::csv::format_double(sigma) << '\n';
    }
  } else {
    const long long l = clustmix::min_mixture_size(args.epsilon, args.delta,
                                                   *args.sigma_max, args.classes,
                                                   args.features);
    out["sigma_max"] = *args.sigma_max;
    out["l_min"] = l;
    if (args.as_json) {
      std::cout << out.dump(2) << '\n';
    } else {
      std::cout << "l_min = " << l << '\n';
    }
  }
  return kExitOk;
}

struct ToyArgs {
  std::string kind = "blobs";
  int n = 400;
  std::uint64_t seed = 0;
  std::string output;
  clustmix::ToyParams params;
};

int run_toy(const ToyArgs& args) {
  const auto d = clustmix::make_toy(clustmix::toy_kind_from_string(args.kind),
                                    args.n, args.seed, args.params);
  clustmix::write_csv(args.output, d, clustmix::toy_column_meta(d));
  std::cout << "wrote " << d.row_count() << " rows to " << args.output << '\n';
  return kExitOk;
}

struct SynthesizeArgs {
  std::string input;
  std::string label_column = "label";
  std::string config_path;
  std::string output;
  std::string report_path;
  std::optional<std::uint64_t> seed;
  bool stamp = false;
};

clustmix::SynthesisConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return clustmix::SynthesisConfig{};
  return clustmix::load_synthesis_config(path);
}

int run_synthesize(const SynthesizeArgs& args) {
  clustmix::SynthesisConfig cfg = load_config_or_default(args.config_path);
  if (args.seed) cfg.seed = *args.seed;

  const auto [raw, meta] = clustmix::load_csv(args.input, args.label_column);
  const auto scaler = clustmix::fit_scaler(raw);
  const auto scaled = clustmix::apply_scaler(raw, scaler);
  const auto report = clustmix::synthesize(scaled, cfg);

  const auto restored = clustmix::invert_scaler(report.synthetic, scaler);
  clustmix::write_csv(args.output, restored, meta);

  json manifest{{"config", clustmix::synthesis_config_to_json(cfg)},
                {"inputs", json::array({input_manifest_entry(args.input)})},
                {"seed", cfg.seed},
                {"artifacts", {{"output", args.output}, {"report", args.report_path}}}};
  if (args.stamp) {
    manifest["timestamp"] =
        static_cast<std::int64_t>(std::chrono::duration_cast<std::chrono::seconds>(
                                      std::chrono::system_clock::now().time_since_epoch())
                                      .count());
  }
  json scaling{{"min", std::vector<double>(scaler.min.data(), scaler.min.data() + scaler.min.size())},
               {"max", std::vector<double>(scaler.max.data(), scaler.max.data() + scaler.max.size())}};
  json j{{"manifest", manifest},
         {"scaling", scaling},
         {"synthesis", clustmix::synthesis_report_to_json(report)}};
  if (!args.report_path.empty()) write_json(args.report_path, j);

  std::cout << "synthesized " << report.synthetic.row_count() << " records at (epsilon="
            << report.epsilon << ", delta=" << report.delta_target
            << "), sigma_max=" << report.selected_sigma_max << '\n';
  return kExitOk;
}

struct EvaluateArgs {
  std::string train_path, test_path, synthetic_path;
  std::string label_column = "label";
  std::string metric = "accuracy";
  std::uint64_t seed = 0;
  std::string report_path;
};

void require_same_schema(const clustmix::ColumnMeta& a, const clustmix::ColumnMeta& b,
                         const std::string& b_path) {
  if (a.column_names.size() != b.column_names.size()) {
    throw clustmix::DataError(b_path + ": expected " +
                              std::to_string(a.column_names.size()) + " columns, got " +
                              std::to_string(b.column_names.size()));
  }
  for (std::size_t i = 0; i < a.column_names.size(); ++i) {
    if (a.column_names[i] != b.column_names[i]) {
      throw clustmix::DataError(b_path + ": column \"" + b.column_names[i] +
                                "\" does not match \"" + a.column_names[i] + "\"");
    }
  }
}

int run_evaluate(const EvaluateArgs& args) {
  const auto [train_raw, train_meta] = clustmix::load_csv(args.train_path, args.label_column);
  const auto [test_raw, test_meta] = clustmix::load_csv(args.test_path, args.label_column);
  const auto [synth_raw, synth_meta] = clustmix::load_csv(args.synthetic_path, args.label_column);
  require_same_schema(train_meta, test_meta, args.test_path);
  require_same_schema(train_meta, synth_meta, args.synthetic_path);

  // Class codes must agree across files; re-encode synthetic/test labels
  // against the training class table.
  const auto realign = [&](clustmix::Dataset d, const clustmix::ColumnMeta& meta,
                           const std::string& path) {
    std::vector<int> mapping(meta.class_names.size(), -1);
    for (std::size_t c = 0; c < meta.class_names.size(); ++c) {
      for (std::size_t tc = 0; tc < train_meta.class_names.size(); ++tc) {
        if (meta.class_names[c] == train_meta.class_names[tc]) {
          mapping[c] = static_cast<int>(tc);
        }
      }
      if (mapping[c] < 0) {
        throw clustmix::DataError(path + ": class \"" + meta.class_names[c] +
                                  "\" not present in training data");
      }
    }
    for (int& y : d.labels) y = mapping[y];
    d.class_count = static_cast<int>(train_meta.class_names.size());
    return d;
  };
  const auto test = realign(test_raw, test_meta, args.test_path);
  const auto synth = realign(synth_raw, synth_meta, args.synthetic_path);

  // Scale each training set independently; score in train-set units.
  const auto train_scaler = clustmix::fit_scaler(train_raw);
  const auto report = clustmix::evaluate_utility(
      clustmix::apply_scaler(train_raw, train_scaler),
      clustmix::apply_scaler(synth, train_scaler),
      clustmix::apply_scaler(test, train_scaler),
      clustmix::metric_from_string(args.metric), args.seed);

  std::cout << "metric=" << args.metric << " real=" << report.real_score
            << " synthetic=" << report.synthetic_score << " gap=" << report.gap << '\n';
  if (!report.diagnostics.empty()) std::cout << "note: " << report.diagnostics << '\n';
  if (!args.report_path.empty()) {
    write_json(args.report_path, json{{"utility", clustmix::utility_report_to_json(report)}});
  }
  return kExitOk;
}

struct PipelineArgs {
  std::string input;
  std::string label_column = "label";
  std::string config_path;
  std::vector<std::uint64_t> seeds{0};
  double test_fraction = 0.25;
  std::string metric = "accuracy";
  bool baseline = false;
  std::string report_path;
  bool stamp = false;
};

int run_pipeline(const PipelineArgs& args) {
  const clustmix::SynthesisConfig base_cfg = load_config_or_default(args.config_path);
  const auto [raw, meta] = clustmix::load_csv(args.input, args.label_column);
  const auto metric = clustmix::metric_from_string(args.metric);

  json per_seed = json::array();
  double clustmix_sum = 0.0, baseline_sum = 0.0, real_sum = 0.0;
  int baseline_runs = 0;
  for (const std::uint64_t seed : args.seeds) {
    clustmix::SynthesisConfig cfg = base_cfg;
    cfg.seed = seed;

    const auto [train_raw, test_raw] =
        clustmix::split(raw, clustmix::SplitSpec{args.test_fraction, seed});
    const auto scaler = clustmix::fit_scaler(train_raw);
    const auto train = clustmix::apply_scaler(train_raw, scaler);
    const auto test = clustmix::apply_scaler(test_raw, scaler);

    const auto synthesis = clustmix::synthesize(train, cfg);
    const auto utility =
        clustmix::evaluate_utility(train, synthesis.synthetic, test, metric, seed);
    real_sum += utility.real_score;
    clustmix_sum += utility.synthetic_score;

    json entry{{"seed", seed},
               {"train_rows", train.row_count()},
               {"test_rows", test.row_count()},
               {"clustmix",
                {{"epsilon", synthesis.epsilon},
                 {"delta", synthesis.delta_target},
                 {"synthesis", clustmix::synthesis_report_to_json(synthesis)},
                 {"utility", clustmix::utility_report_to_json(utility)}}}};

    if (args.baseline) {
      const auto base = clustmix::baseline_synthesize(train, cfg);
      const auto base_utility =
          clustmix::evaluate_utility(train, base.synthetic, test, metric, seed);
      baseline_sum += base_utility.synthetic_score;
      ++baseline_runs;
      entry["baseline"] = {{"epsilon", base.epsilon},
                           {"delta", base.delta_target},
                           {"synthesis", clustmix::synthesis_report_to_json(base)},
                           {"utility", clustmix::utility_report_to_json(base_utility)}};
    }
    per_seed.push_back(std::move(entry));
  }

  const double n = static_cast<double>(args.seeds.size());
  json summary{{"metric", args.metric},
               {"seeds", args.seeds},
               {"mean_real_score", real_sum / n},
               {"mean_clustmix_score", clustmix_sum / n}};
  if (baseline_runs > 0) {
    summary["mean_baseline_score"] = baseline_sum / baseline_runs;
  }

  json manifest{{"config", clustmix::synthesis_config_to_json(base_cfg)},
                {"inputs", json::array({input_manifest_entry(args.input)})},
                {"seeds", args.seeds},
                {"artifacts", {{"report", args.report_path}}}};
  if (args.stamp) {
    manifest["timestamp"] =
        static_cast<std::int64_t>(std::chrono::duration_cast<std::chrono::seconds>(
                                      std::chrono::system_clock::now().time_since_epoch())
                                      .count());
  }
  const json j{{"manifest", manifest}, {"summary", summary}, {"runs", per_seed}};
  if (!args.report_path.empty()) write_json(args.report_path, j);

  std::cout << "mean " << args.metric << ": real=" << summary["mean_real_score"]
            << " clustmix=" << summary["mean_clustmix_score"];
  if (baseline_runs > 0) std::cout << " baseline=" << summary["mean_baseline_score"];
  std::cout << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "clustmix: differentially private synthetic data via size-constrained "
      "cluster mixing.\n"
      "Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 infeasible "
      "configuration, 5 internal failure."};
  app.require_subcommand(1);

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand(
      "calibrate", "Solve for minimal noise (given --l) or minimal mixture size "
                   "(given --sigma-max) at an (epsilon, delta) target");
  calibrate->add_option("--epsilon", cal.epsilon, "privacy epsilon (>= 0)")->required();
  calibrate->add_option("--delta", cal.delta, "privacy delta in (0,1)")->required();
  calibrate->add_option("--l", cal.l, "mixture size; solves for sigma_min");
  calibrate->add_option("--sigma-max", cal.sigma_max, "noise ceiling; solves for l_min");
  calibrate->add_option("--classes,-C", cal.classes, "class count C")->default_val(1);
  calibrate->add_option("--features,-D", cal.features, "feature count D")->default_val(1);
  calibrate->add_flag("--json", cal.as_json, "machine-readable output");

  ToyArgs toy;
  auto* toy_cmd = app.add_subcommand("toy", "Generate a seeded 2-D toy dataset CSV");
  toy_cmd->add_option("--kind", toy.kind, "blobs | moons | skewed-multimodal");
  toy_cmd->add_option("--n", toy.n, "row count (>= 4)");
  toy_cmd->add_option("--seed", toy.seed, "generator seed");
  toy_cmd->add_option("--output", toy.output, "output CSV path")->required();
  toy_cmd->add_option("--blob-std", toy.params.blob_std, "blob standard deviation");
  toy_cmd->add_option("--moons-noise", toy.params.moons_noise, "moons noise std");
  toy_cmd->add_option("--modes", toy.params.modes, "skewed-multimodal mode count");
  toy_cmd->add_option("--skew-rate", toy.params.skew_rate, "skewed tail scale");
  toy_cmd->add_option("--mode-spread", toy.params.mode_spread, "mode center radius");

  SynthesizeArgs syn;
  auto* synthesize = app.add_subcommand(
      "synthesize", "Produce a DP synthetic CSV (and report JSON) from an input CSV");
  synthesize->add_option("--input", syn.input, "input CSV")->required();
  synthesize->add_option("--label-column", syn.label_column, "label column name");
  synthesize->add_option("--config", syn.config_path, "synthesis config JSON");
  synthesize->add_option("--output", syn.output, "synthetic CSV path")->required();
  synthesize->add_option("--report", syn.report_path, "report JSON path");
  synthesize->add_option("--seed", syn.seed, "seed override");
  synthesize->add_flag("--stamp", syn.stamp, "include a wall-clock timestamp in the report");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand(
      "evaluate", "Train-on-synthetic / test-on-real comparison of two training sets");
  evaluate->add_option("--train", ev.train_path, "real training CSV")->required();
  evaluate->add_option("--test", ev.test_path, "real held-out test CSV")->required();
  evaluate->add_option("--synthetic", ev.synthetic_path, "synthetic training CSV")->required();
  evaluate->add_option("--label-column", ev.label_column, "label column name");
  evaluate->add_option("--metric", ev.metric, "auc | ovo-auc | accuracy");
  evaluate->add_option("--seed", ev.seed, "classifier seed");
  evaluate->add_option("--report", ev.report_path, "report JSON path");

  PipelineArgs pipe;
  auto* pipeline = app.add_subcommand(
      "pipeline", "split -> synthesize -> evaluate (optionally with the "
                  "random-mixing baseline at matched privacy)");
  pipeline->add_option("--input", pipe.input, "input CSV")->required();
  pipeline->add_option("--label-column", pipe.label_column, "label column name");
  pipeline->add_option("--config", pipe.config_path, "synthesis config JSON");
  pipeline->add_option("--seed", pipe.seeds, "seed(s); repeat for multiple runs");
  pipeline->add_option("--test-fraction", pipe.test_fraction, "held-out fraction");
  pipeline->add_option("--metric", pipe.metric, "auc | ovo-auc | accuracy");
  pipeline->add_flag("--baseline", pipe.baseline, "also run the random-mixing baseline");
  pipeline->add_option("--report", pipe.report_path, "combined report JSON path");
  pipeline->add_flag("--stamp", pipe.stamp, "include a wall-clock timestamp in the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*calibrate) return run_calibrate(cal);
    if (*toy_cmd) return run_toy(toy);
    if (*synthesize) return run_synthesize(syn);
    if (*evaluate) return run_evaluate(ev);
    if (*pipeline) return run_pipeline(pipe);
  } catch (const clustmix::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const clustmix::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const clustmix::InfeasibleError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
