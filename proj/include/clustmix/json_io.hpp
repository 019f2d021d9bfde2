#pragma once

// JSON surfaces: SynthesisConfig parsing (keys mirror the struct fields,
// unknown keys are an error) and report serialization. nlohmann::json keeps
// object keys sorted, so identical runs serialize byte-identically.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "clustmix/errors.hpp"
#include "clustmix/eval.hpp"
#include "clustmix/pipeline.hpp"

namespace clustmix {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                const std::set<std::string>& allowed,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
  }
}

}  // namespace detail

inline SynthesisConfig parse_synthesis_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown_keys(
      j,
      {"privacy", "n_slices", "k_per_slice", "sigma_max_grid", "alpha",
       "kernel", "adapt", "seed"},
      "top level");
  SynthesisConfig cfg;
  try {
    if (j.contains("privacy")) {
      const auto& p = j.at("privacy");
      detail::reject_unknown_keys(p, {"epsilon", "delta"}, "privacy");
      cfg.privacy.epsilon = p.value("epsilon", cfg.privacy.epsilon);
      cfg.privacy.delta = p.value("delta", cfg.privacy.delta);
    }
    cfg.n_slices = j.value("n_slices", cfg.n_slices);
    cfg.k_per_slice = j.value("k_per_slice", cfg.k_per_slice);
    if (j.contains("sigma_max_grid")) {
      cfg.sigma_max_grid = j.at("sigma_max_grid").get<std::vector<double>>();
    }
    cfg.alpha = j.value("alpha", cfg.alpha);
    if (j.contains("kernel")) {
      const auto& k = j.at("kernel");
      detail::reject_unknown_keys(k, {"kind", "bandwidth", "ridge_lambda"}, "kernel");
      cfg.kernel.kind = k.value("kind", cfg.kernel.kind);
      cfg.kernel.bandwidth = k.value("bandwidth", cfg.kernel.bandwidth);
      cfg.kernel.ridge_lambda = k.value("ridge_lambda", cfg.kernel.ridge_lambda);
    }
    if (j.contains("adapt")) {
      const auto& a = j.at("adapt");
      detail::reject_unknown_keys(
          a, {"learning_rate", "max_steps", "grad_tolerance"}, "adapt");
      cfg.adapt.learning_rate = a.value("learning_rate", cfg.adapt.learning_rate);
      cfg.adapt.max_steps = a.value("max_steps", cfg.adapt.max_steps);
      cfg.adapt.grad_tolerance = a.value("grad_tolerance", cfg.adapt.grad_tolerance);
    }
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.n_slices < 1) throw ConfigError("config: n_slices must be >= 1");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw ConfigError("config: alpha must be in [0, 1]");
  }
  cfg.adapt.alpha = cfg.alpha;
  return cfg;
}

inline SynthesisConfig load_synthesis_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_synthesis_config(j);
}

inline nlohmann::json synthesis_config_to_json(const SynthesisConfig& cfg) {
  return nlohmann::json{
      {"privacy", {{"epsilon", cfg.privacy.epsilon}, {"delta", cfg.privacy.delta}}},
      {"n_slices", cfg.n_slices},
      {"k_per_slice", cfg.k_per_slice},
      {"sigma_max_grid", cfg.sigma_max_grid},
      {"alpha", cfg.alpha},
      {"kernel",
       {{"kind", cfg.kernel.kind},
        {"bandwidth", cfg.kernel.bandwidth},
        {"ridge_lambda", cfg.kernel.ridge_lambda}}},
      {"adapt",
       {{"learning_rate", cfg.adapt.learning_rate},
        {"max_steps", cfg.adapt.max_steps},
        {"grad_tolerance", cfg.adapt.grad_tolerance}}},
      {"seed", cfg.seed}};
}

inline nlohmann::json synthesis_report_to_json(const SynthesisReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rp : r.realized) {
    records.push_back({{"l", rp.l},
                       {"sigma", rp.sigma},
                       {"mu", rp.mu},
                       {"delta_at_epsilon", rp.delta_at_epsilon}});
  }
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : r.diagnostics.skipped_groups) {
    skipped.push_back({{"slice", s.slice_index},
                       {"label", s.label},
                       {"rows", s.row_count}});
  }
  nlohmann::json adapt = nlohmann::json::array();
  for (const auto& a : r.diagnostics.adapt) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [step, loss] : a.loss_trace) {
      trace.push_back({{"step", step}, {"loss", loss}});
    }
    adapt.push_back({{"slice", a.slice_index},
                     {"steps", a.steps},
                     {"initial_loss", a.initial_loss},
                     {"final_loss", a.final_loss},
                     {"loss_trace", trace}});
  }
  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    candidates.push_back({{"sigma_max", c.sigma_max},
                          {"l_min", c.l_min},
                          {"records", c.records},
                          {"score", c.score},
                          {"feasible", c.feasible},
                          {"note", c.note}});
  }
  return nlohmann::json{
      {"realized_privacy",
       {{"epsilon", r.epsilon},
        {"delta_target", r.delta_target},
        {"max_record_delta", r.max_record_delta},
        {"records", records}}},
      {"sigma_max", r.sigma_max},
      {"l_min", r.l_min},
      {"synthetic_records", r.synthetic.row_count()},
      {"stage_diagnostics",
       {{"skipped_groups", skipped},
        {"infeasible_clusters", r.diagnostics.infeasible_clusters},
        {"fallback_fits", r.diagnostics.fallback_fits},
        {"em_iterations", r.diagnostics.em_iterations},
        {"adapt", adapt}}},
      {"selection",
       {{"sigma_max", r.selected_sigma_max},
        {"training_utility", r.selection_score},
        {"candidates", candidates},
        {"note",
         "sigma_max selection scores candidates against the real training set; "
         "that comparison is not covered by the (epsilon, delta) accounting"}}}};
}

inline nlohmann::json utility_report_to_json(const UtilityReport& u) {
  return nlohmann::json{{"metric", metric_to_string(u.metric)},
                        {"real_score", u.real_score},
                        {"synthetic_score", u.synthetic_score},
                        {"gap", u.gap},
                        {"diagnostics", u.diagnostics}};
}

// FNV-1a over the file bytes; recorded in run manifests so a report names
// exactly which inputs produced it.
inline std::string file_digest_fnv1a64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for digest: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace clustmix
