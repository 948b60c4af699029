// SPDX-License-Identifier: Apache-2.0
#include "fedgame/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace fedgame {

using nlohmann::json;

ConfigValidationError::ConfigValidationError(std::vector<std::string> problems)
    : ConfigError([&] {
        std::string msg = "invalid configuration (" + std::to_string(problems.size()) + " problem" +
                          (problems.size() == 1 ? "" : "s") + "):";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

namespace {

const char* to_string(DataSource s) { return s == DataSource::csv ? "csv" : "synth"; }

// Reads typed fields from one JSON object, recording problems under `prefix`.
class Section {
 public:
  Section(const json& doc, std::string prefix, std::vector<std::string>& errors)
      : prefix_(std::move(prefix)), errors_(errors) {
    if (doc.is_object()) {
      obj_ = &doc;
    } else if (!doc.is_null()) {
      errors_.push_back(name("") + "must be an object");
    }
  }

  ~Section() {
    if (!obj_) return;
    for (const auto& [key, _] : obj_->items()) {
      if (!seen_.count(key)) errors_.push_back(name(key) + ": unknown key");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    if (!obj_) return nullptr;
    auto it = obj_->find(key);
    return it == obj_->end() ? nullptr : &*it;
  }

  std::string name(const std::string& key) const {
    if (prefix_.empty()) return key;
    return key.empty() ? prefix_ + ": " : prefix_ + "." + key;
  }

  static bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  void get(const std::string& key, double& out) {
    if (const json* v = child(key)) {
      if (v->is_number()) out = v->get<double>();
      else bad(key, "a number");
    }
  }
  void get(const std::string& key, std::size_t& out) {
    if (const json* v = child(key)) {
      if (non_negative_integer(*v)) out = v->get<std::size_t>();
      else bad(key, "a non-negative integer");
    }
  }
  void get(const std::string& key, std::uint64_t& out, int) {
    if (const json* v = child(key)) {
      if (non_negative_integer(*v)) out = v->get<std::uint64_t>();
      else bad(key, "a non-negative integer");
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = child(key)) {
      if (v->is_number_integer()) out = v->get<int>();
      else bad(key, "an integer");
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = child(key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else bad(key, "a boolean");
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = child(key)) {
      if (v->is_string()) out = v->get<std::string>();
      else bad(key, "a string");
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = child(key)) {
      if (!v->is_array()) return bad(key, "an array of numbers");
      std::vector<double> tmp;
      for (const auto& x : *v) {
        if (!x.is_number()) return bad(key, "an array of numbers");
        tmp.push_back(x.get<double>());
      }
      out = tmp;
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = child(key)) {
      if (!v->is_array()) return bad(key, "an array of non-negative integers");
      std::vector<std::size_t> tmp;
      for (const auto& x : *v) {
        if (!non_negative_integer(x)) return bad(key, "an array of non-negative integers");
        tmp.push_back(x.get<std::size_t>());
      }
      out = tmp;
    }
  }
  template <class Parse, class T>
  void get_enum(const std::string& key, T& out, Parse parse) {
    std::string text;
    if (!child(key)) return;
    get(key, text);
    if (text.empty()) return;
    try {
      out = parse(text);
    } catch (const std::exception& e) {
      errors_.push_back(name(key) + ": " + e.what());
    }
  }

  void bad(const std::string& key, const char* expected) { errors_.push_back(name(key) + ": expected " + expected); }

 private:
  const json* obj_ = nullptr;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void prefixed(std::vector<std::string>& out, const std::string& prefix, const std::vector<std::string>& problems) {
  for (const auto& p : problems) out.push_back(prefix + "." + p);
}

}  // namespace

std::vector<std::string> config_problems(const ExperimentConfig& c) {
  std::vector<std::string> out;
  if (c.threads < 0) out.push_back("threads: must be >= 0");
  if (c.output_dir.empty()) out.push_back("output_dir: must not be empty");

  const auto& d = c.data;
  if (d.source == DataSource::synth) {
    if (d.n_clients < 1) out.push_back("data.n_clients: must be >= 1");
    if (d.n_clusters < 1 || d.n_clusters > d.n_clients) out.push_back("data.n_clusters: must satisfy 1 <= n_clusters <= n_clients");
    if (!(d.noise_sd >= 0.0) || !std::isfinite(d.noise_sd)) out.push_back("data.noise_sd: must be >= 0");
    const std::size_t need = c.forecaster.history_len + c.forecaster.horizon + 1;
    if (d.length < need) out.push_back("data.length: must be >= history_len + horizon + 1 (" + std::to_string(need) + ")");
  } else {
    if (d.csv_path.empty()) out.push_back("data.csv_path: required when data.source is csv");
    else if (!std::filesystem::exists(d.csv_path)) out.push_back("data.csv_path: file not found: " + d.csv_path);
  }
  const auto& s = d.splits;
  if (!(s.train > 0.0) || !(s.val >= 0.0) || !(s.test > 0.0)) {
    out.push_back("data.splits: train and test must be > 0, val >= 0");
  } else if (std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
    out.push_back("data.splits: fractions must sum to 1");
  }

  prefixed(out, "forecaster", c.forecaster.problems());
  if (c.forecaster.input_features != 1) out.push_back("forecaster.input_features: only univariate series (1) are supported");
  prefixed(out, "aggregator", c.aggregator.problems());

  HyperParams hp = c.protocol;
  hp.clients = 1;  // filled from data later
  prefixed(out, "protocol", hp.problems());
  if (c.participation != 1.0) out.push_back("protocol.participation: only full participation (1.0) is supported");
  if (c.baselines.empty()) out.push_back("baselines: must list at least one aggregator kind");
  return out;
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  std::vector<std::string> errors;
  {
    Section root(doc, "", errors);
    root.get("seed", c.seed, 0);
    root.get("output_dir", c.output_dir);
    root.get("threads", c.threads);

    if (const json* dj = root.child("data")) {
      Section data(*dj, "data", errors);
      data.get_enum("source", c.data.source, [](const std::string& s) {
        if (s == "synth") return DataSource::synth;
        if (s == "csv") return DataSource::csv;
        throw ConfigError("expected synth or csv, got '" + s + "'");
      });
      data.get("csv_path", c.data.csv_path);
      data.get("n_clients", c.data.n_clients);
      data.get("n_clusters", c.data.n_clusters);
      data.get("length", c.data.length);
      data.get("noise_sd", c.data.noise_sd);
      if (const json* sj = data.child("splits")) {
        Section splits(*sj, "data.splits", errors);
        splits.get("train", c.data.splits.train);
        splits.get("val", c.data.splits.val);
        splits.get("test", c.data.splits.test);
      }
    }
    if (const json* fj = root.child("forecaster")) {
      Section f(*fj, "forecaster", errors);
      auto& fc = c.forecaster;
      f.get_enum("arch", fc.arch, parse_architecture);
      f.get("history_len", fc.history_len);
      f.get("horizon", fc.horizon);
      f.get("input_features", fc.input_features);
      f.get("quantiles", fc.quantiles);
      f.get("hidden_sizes", fc.hidden_sizes);
      f.get("local_lr", fc.local_lr);
      f.get("local_epochs", fc.local_epochs);
      f.get("prox_mu", fc.prox_mu);
      f.get("batch_size", fc.batch_size);
    }
    if (const json* aj = root.child("aggregator")) {
      Section a(*aj, "aggregator", errors);
      auto& ac = c.aggregator;
      a.get("embed_dim", ac.embed_dim);
      a.get("num_experts", ac.num_experts);
      a.get("top_k", ac.top_k);
      a.get("temperature", ac.temperature);
      a.get("w_self", ac.w_self);
      a.get("alpha", ac.alpha);
      a.get("beta", ac.beta);
      a.get("server_lr", ac.server_lr);
      a.get("noise_enabled", ac.noise_enabled);
      a.get("steps_per_round", ac.steps_per_round);
    }
    if (const json* pj = root.child("protocol")) {
      Section p(*pj, "protocol", errors);
      p.get_enum("kind", c.protocol.kind, parse_aggregator_kind);
      p.get("eta", c.protocol.eta);
      p.get("gamma", c.protocol.gamma);
      p.get("rounds", c.protocol.rounds);
      p.get("participation", c.participation);
    }
    if (const json* bj = root.child("baselines")) {
      if (!bj->is_array()) {
        errors.push_back("baselines: expected an array of aggregator kinds");
      } else {
        c.baselines.clear();
        for (const auto& b : *bj) {
          try {
            if (!b.is_string()) throw ConfigError("expected a string");
            c.baselines.push_back(parse_aggregator_kind(b.get<std::string>()));
          } catch (const std::exception& e) {
            errors.push_back(std::string("baselines: ") + e.what());
          }
        }
      }
    }
  }
  for (auto& p : config_problems(c)) {
    // a field that failed to parse already has its own message
    bool dup = false;
    for (const auto& e : errors) {
      if (e.substr(0, e.find(':')) == p.substr(0, p.find(':'))) dup = true;
    }
    if (!dup) errors.push_back(std::move(p));
  }
  if (!errors.empty()) throw ConfigValidationError(std::move(errors));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigValidationError({"cannot read config file " + path.string()});
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigValidationError({path.string() + ": not valid JSON: " + e.what()});
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json baselines = json::array();
  for (auto k : c.baselines) baselines.push_back(to_string(k));
  const auto& fc = c.forecaster;
  const auto& ac = c.aggregator;
  return json{
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
      {"data",
       {{"source", to_string(c.data.source)},
        {"csv_path", c.data.csv_path},
        {"n_clients", c.data.n_clients},
        {"n_clusters", c.data.n_clusters},
        {"length", c.data.length},
        {"noise_sd", c.data.noise_sd},
        {"splits", {{"train", c.data.splits.train}, {"val", c.data.splits.val}, {"test", c.data.splits.test}}}}},
      {"forecaster",
       {{"arch", to_string(fc.arch)},
        {"history_len", fc.history_len},
        {"horizon", fc.horizon},
        {"input_features", fc.input_features},
        {"quantiles", fc.quantiles},
        {"hidden_sizes", fc.hidden_sizes},
        {"local_lr", fc.local_lr},
        {"local_epochs", fc.local_epochs},
        {"prox_mu", fc.prox_mu},
        {"batch_size", fc.batch_size}}},
      {"aggregator",
       {{"embed_dim", ac.embed_dim},
        {"num_experts", ac.num_experts},
        {"top_k", ac.top_k},
        {"temperature", ac.temperature},
        {"w_self", ac.w_self},
        {"alpha", ac.alpha},
        {"beta", ac.beta},
        {"server_lr", ac.server_lr},
        {"noise_enabled", ac.noise_enabled},
        {"steps_per_round", ac.steps_per_round}}},
      {"protocol",
       {{"kind", to_string(c.protocol.kind)},
        {"eta", c.protocol.eta},
        {"gamma", c.protocol.gamma},
        {"rounds", c.protocol.rounds},
        {"participation", c.participation}}},
      {"baselines", baselines},
  };
}

}  // namespace fedgame
