// Copyright 2026 The URM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command implementations for the `urm` tool. Kept in a header so the test
// suite can drive the commands in-process.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "urm/io.hpp"
#include "urm/urm.hpp"

namespace urm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

template <typename T>
struct is_optional : std::false_type {};
template <typename T>
struct is_optional<std::optional<T>> : std::true_type {};

template <typename T>
void assign_from_json(T& target, const json& value) {
  if constexpr (is_optional<T>::value) {
    if (value.is_null()) {
      target.reset();
    } else {
      target = value.get<typename T::value_type>();
    }
  } else {
    target = value.get<T>();
  }
}

template <typename T>
json echo_json(const T& value) {
  if constexpr (is_optional<T>::value) {
    return value ? json(*value) : json(nullptr);
  } else {
    return json(value);
  }
}

/// Binds CLI options to variables and applies config-file values to every
/// option that was not given on the command line. Precedence: flag, then
/// config key, then built-in default.
class Settings {
 public:
  template <typename T>
  CLI::Option* add(CLI::App& app, const std::string& flag, T& target, const std::string& key, const std::string& help) {
    CLI::Option* opt = app.add_option(flag, target, help);
    bindings_[key] = Binding{opt, [&target, key](const json& value) {
                               try {
                                 assign_from_json(target, value);
                               } catch (const json::exception&) {
                                 throw ConfigError("config key '" + key + "' has the wrong type");
                               }
                             },
                             [&target]() { return echo_json(target); }};
    return opt;
  }

  CLI::Option* add_flag(CLI::App& app, const std::string& flag, bool& target, const std::string& key,
                        const std::string& help) {
    CLI::Option* opt = app.add_flag(flag, target, help);
    bindings_[key] = Binding{opt, [&target, key](const json& value) {
                               if (!value.is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
                               target = value.get<bool>();
                             },
                             [&target]() { return json(target); }};
    return opt;
  }

  // Keys that are only meaningful in config files (no flag).
  void add_config_only(const std::string& key, std::function<void(const json&)> apply, std::function<json()> echo) {
    bindings_[key] = Binding{nullptr, std::move(apply), std::move(echo)};
  }

  void apply(const json& config) const {
    for (const auto& [key, value] : config.items()) {
      auto it = bindings_.find(key);
      if (it == bindings_.end()) throw ConfigError("unknown config key '" + key + "'");
      if (it->second.option != nullptr && it->second.option->count() > 0) continue;
      it->second.apply(value);
    }
  }

  void merge(const Settings& other) {
    for (const auto& [key, b] : other.bindings_) bindings_.emplace(key, b);
  }

  json effective() const {
    json out = json::object();
    for (const auto& [key, b] : bindings_) out[key] = b.echo();
    return out;
  }

 private:
  struct Binding {
    CLI::Option* option = nullptr;
    std::function<void(const json&)> apply;
    std::function<json()> echo;
  };
  std::map<std::string, Binding> bindings_;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir = ".";
  std::size_t threads = 1;
};

inline json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = io::parse_json(io::read_file(path), path);
  if (!j.is_object()) throw ConfigError(path + ": config file must hold a JSON object");
  return j;
}

// Reads a numeric list such as "1,2,3" or "0.5, inf".
inline std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (item == "inf" || item == "+inf") {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse '" + item + "' in " + what);
    }
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_number_list(text, "--seeds")) {
    if (v < 0 || v != std::floor(v) || !std::isfinite(v)) throw ConfigError("seeds must be nonnegative integers");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

/// A loaded checkpoint of any kind: single model, ensemble, or oracle.
struct LoadedScorer {
  std::optional<UrmModel> model;
  std::optional<Urme> ensemble;
  std::optional<OracleScorer> oracle;
  Schema schema;

  template <typename Fn>
  auto visit(Fn&& fn) const {
    if (ensemble) return fn(*ensemble);
    if (model) return fn(*model);
    return fn(*oracle);
  }

  std::string kind() const { return ensemble ? "ensemble" : model ? "urm" : "oracle"; }
};

inline LoadedScorer load_scorer(const std::string& path) {
  const json j = io::parse_json(io::read_file(path), path);
  LoadedScorer out;
  const std::string format = j.value("format", "");
  if (format == "urm-ensemble") {
    out.ensemble = io::ensemble_from_manifest(j, path);
    out.schema = out.ensemble->schema();
  } else if (format == "urm-checkpoint" && j.value("kind", "") == "oracle") {
    out.schema = io::schema_from_json(j.at("schema"), path);
    out.oracle = OracleScorer(j.at("weights").get<std::vector<double>>());
  } else {
    out.model = io::model_from_json(j, path);
    out.schema = out.model->schema();
  }
  return out;
}

inline void require_same_schema(const Schema& a, const Schema& b, const std::string& what) {
  if (!(a == b)) throw ConfigError(what + ": schema does not match the model (d/n/attribute names)");
}

inline std::string write_history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,val_loss,mean_log_std,val_accuracy\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + "," + io::format_number(h.train_loss) + "," + io::format_number(h.val_loss) + "," +
           io::format_number(h.mean_log_std) + "," + io::format_number(h.val_accuracy) + "\n";
  }
  return out;
}

inline json curve_to_json(const ThresholdCurve& curve) {
  json thresholds = json::array();
  json accuracy = json::array();
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    thresholds.push_back(io::report_number(curve.thresholds[i]));
    accuracy.push_back(io::report_number(curve.accuracy[i]));
  }
  return {{"uncertainty", to_string(curve.kind)},
          {"thresholds", thresholds},
          {"accuracy", accuracy},
          {"retained_fraction", io::report_array(curve.retained_fraction)}};
}

inline std::string curve_to_csv(const ThresholdCurve& curve) {
  std::string out = "threshold,accuracy,retained_fraction\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    out += io::format_number(curve.thresholds[i]) + "," +
           (curve.accuracy[i] ? io::format_number(*curve.accuracy[i]) : std::string()) + "," +
           io::format_number(curve.retained_fraction[i]) + "\n";
  }
  return out;
}

inline json ood_report_to_json(const OodReport& report) {
  json kinds = json::object();
  for (const auto& k : report.kinds) {
    auto summary = [](const SetSummary& s) {
      return json{{"mean", io::report_number(s.mean)},
                  {"median", io::report_number(s.median)},
                  {"histogram", {{"edges", io::report_array(s.histogram.edges)}, {"counts", s.histogram.counts}}}};
    };
    kinds[to_string(k.kind)] = {{"auroc", io::report_number(k.auroc)}, {"id", summary(k.id)}, {"ood", summary(k.ood)}};
  }
  return {{"id_count", report.id_count}, {"ood_count", report.ood_count}, {"uncertainty", kinds}};
}

// ---------------------------------------------------------------------------

struct GenDataOptions {
  std::size_t count = 1000;
  double ood_fraction = 0.2;
  std::size_t d = 16;
  std::size_t n = 5;
  double delta = 6.0;
  double flip_rate = 0.0;
  double tau = 1.0;
  double pairs_per_record = 0.5;
  std::size_t group_size = 4;
  std::size_t bon_prompts = 0;
  std::size_t bon_candidates = 32;
  std::uint64_t world_seed = 1;
};

/// Writes train/val/eval (ID) and ood record files, pair files for each, the
/// ground-truth oracle checkpoint and optionally a best-of-n candidate pool.
inline int cmd_gen_data(const GlobalOptions& g, const GenDataOptions& o, const json& effective, std::ostream& out) {
  if (o.count == 0) throw InputError("--count must be positive");
  if (!(o.ood_fraction >= 0.0 && o.ood_fraction <= 1.0)) throw ConfigError("--ood-fraction must lie in [0, 1]");
  if (!(o.pairs_per_record > 0.0)) throw ConfigError("--pairs-per-record must be positive");
  WorldConfig wc;
  wc.feature_dim = o.d;
  wc.attribute_count = o.n;
  wc.ood_shift = o.delta;
  wc.flip_temperature = o.tau;
  const auto world = gen_world(wc, o.world_seed);
  if (!(o.flip_rate >= 0.0 && o.flip_rate < 0.5)) throw ConfigError("--flip-rate must lie in [0, 0.5)");

  const auto ood_count = static_cast<std::size_t>(std::floor(static_cast<double>(o.count) * o.ood_fraction));
  const std::size_t id_count = o.count - ood_count;
  const std::size_t train_count = id_count * 7 / 10;
  const std::size_t val_count = id_count / 10;
  const std::size_t eval_count = id_count - train_count - val_count;

  const fs::path dir(g.out_dir);
  const auto schema = world.schema();
  std::map<std::string, std::size_t> counts;
  std::uint64_t next_id = 0;
  std::uint64_t next_group = 0;
  std::vector<std::pair<std::string, io::Dataset>> outputs;

  auto split = [&](const std::string& name, std::size_t n, double fraction, std::uint64_t stream) {
    if (n == 0) {
      counts[name] = 0;
      return;
    }
    auto records = sample_records(world, n, fraction, derive_seed(g.seed, stream), {o.group_size, next_id, next_group});
    next_id += n;
    next_group = records.back().prompt_group + 1;
    io::Dataset ds{schema, world.weights(), records, {}};
    counts[name] = records.size();
    outputs.emplace_back(name + ".jsonl", ds);
    if (n >= 2) {
      const auto pair_count =
          std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(o.pairs_per_record * static_cast<double>(n))));
      auto pairs = make_pairs(records, world, pair_count, derive_seed(g.seed, stream + 100));
      pairs = label_noise(pairs, o.flip_rate, o.tau, derive_seed(g.seed, stream + 200));
      counts[name + "_pairs"] = pairs.size();
      outputs.emplace_back(name + "_pairs.jsonl", io::Dataset{schema, world.weights(), {}, std::move(pairs)});
    }
  };
  split("train", train_count, 0.0, 1);
  split("val", val_count, 0.0, 2);
  split("eval", eval_count, 0.0, 3);
  split("ood", ood_count, 1.0, 4);

  if (o.bon_prompts > 0) {
    if (o.bon_candidates < 1) throw ConfigError("--bon-candidates must be positive");
    Rng rng(derive_seed(g.seed, 5));
    std::vector<Record> pool;
    for (std::size_t p = 0; p < o.bon_prompts; ++p) {
      const auto prompt = world.sample_prompt(false, rng);
      for (std::size_t c = 0; c < o.bon_candidates; ++c) {
        pool.push_back(world.make_record(next_id++, world.sample_response(prompt, rng), false, next_group, rng));
      }
      ++next_group;
    }
    counts["bon"] = pool.size();
    outputs.emplace_back("bon.jsonl", io::Dataset{schema, world.weights(), std::move(pool), {}});
  }

  for (const auto& [name, ds] : outputs) io::save_dataset(dir / name, ds);
  io::write_file_atomic(dir / "oracle.json", io::oracle_to_json(schema, world.weights()).dump(2) + "\n");
  io::write_file_atomic(dir / "gen_data.json",
                        io::dump_report({{"config", effective}, {"counts", counts}, {"id", id_count}, {"ood", ood_count}}));
  out << "id " << id_count << " ood " << ood_count << "\n";
  for (const auto& [name, c] : counts) out << name << " " << c << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string loss = "mle";
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double val_fraction = 0.1;
  std::size_t ensemble = 1;
  std::string seeds;
  std::optional<std::uint64_t> init_seed;
  std::string out = "model.json";
  std::string history = "history.csv";
  std::string val_pairs;
  std::string gating_pairs;
  std::size_t gating_steps = 400;
  std::string activation = "tanh";
  std::map<std::string, double> fixed_weights;
};

inline std::vector<double> resolve_fixed_weights(const TrainOptions& o, const io::Dataset& ds) {
  const auto& names = ds.schema.attribute_names;
  if (!o.fixed_weights.empty()) {
    std::vector<double> w(names.size(), 0.0);
    for (const auto& [name, value] : o.fixed_weights) {
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) throw ConfigError("fixed_weights names unknown attribute '" + name + "'");
      w[static_cast<std::size_t>(it - names.begin())] = value;
    }
    return w;
  }
  if (ds.true_weights) return *ds.true_weights;
  return std::vector<double>(names.size(), 1.0 / static_cast<double>(names.size()));
}

inline int cmd_train(const GlobalOptions& g, const TrainOptions& o, const json& effective, std::ostream& out) {
  if (o.data.empty()) throw ConfigError("train needs --data");
  const auto ds = io::load_dataset(o.data);
  std::vector<Record> records = ds.records;
  if (records.empty()) throw InputError(o.data + ": no unpaired records to train on");

  TrainConfig tc;
  tc.loss = loss_kind_from_string(o.loss);
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.optimizer.learning_rate = o.lr;
  tc.optimizer.weight_decay = o.weight_decay;
  tc.validation_fraction = o.val_fraction;
  tc.seed = g.seed;
  tc.init_seed = o.init_seed;
  tc.architecture.hidden_activation = activation_from_string(o.activation);
  tc.fixed_weights = resolve_fixed_weights(o, ds);

  std::vector<PreferencePair> val_pairs;
  if (!o.val_pairs.empty()) {
    const auto vp = io::load_dataset(o.val_pairs);
    require_same_schema(vp.schema, ds.schema, o.val_pairs);
    val_pairs = vp.pairs;
  }
  std::optional<io::Dataset> gating_data;
  if (!o.gating_pairs.empty()) {
    gating_data = io::load_dataset(o.gating_pairs);
    require_same_schema(gating_data->schema, ds.schema, o.gating_pairs);
    if (gating_data->pairs.empty()) throw InputError(o.gating_pairs + ": no pairs for gating");
  }
  auto attach_gate = [&](UrmModel m, std::uint64_t seed) {
    if (!gating_data) return m;
    GatingTrainConfig gc;
    gc.steps = o.gating_steps;
    gc.seed = seed;
    return train_gating(m, gating_data->pairs, val_pairs, gc).first;
  };

  const fs::path dir(g.out_dir);
  if (o.ensemble <= 1) {
    auto result = train_urm(records, ds.schema, tc, val_pairs);
    auto model = attach_gate(std::move(result.model), g.seed);
    io::write_file_atomic(dir / o.history, write_history_csv(result.history));
    io::save_model(dir / o.out, model, effective);
    out << "trained " << to_string(tc.loss) << " model: best epoch " << result.best_epoch << ", val loss "
        << io::format_number(model.metadata().final_val_loss) << "\n";
    return 0;
  }
  std::vector<std::uint64_t> seeds = o.seeds.empty() ? std::vector<std::uint64_t>{} : parse_seed_list(o.seeds);
  if (seeds.empty()) {
    for (std::size_t i = 0; i < o.ensemble; ++i) seeds.push_back(g.seed + i);
  }
  if (seeds.size() != o.ensemble) throw ConfigError("--seeds lists " + std::to_string(seeds.size()) +
                                                    " seeds for an ensemble of " + std::to_string(o.ensemble));
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("ensemble seeds must be distinct");
  }
  std::vector<UrmModel> members(seeds.size());
  std::vector<std::vector<EpochStats>> histories(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    TrainConfig member = tc;
    member.seed = seeds[i];
    member.init_seed.reset();
    auto result = train_urm(records, ds.schema, member, val_pairs);
    members[i] = attach_gate(std::move(result.model), seeds[i]);
    histories[i] = std::move(result.history);
  });
  const Urme ensemble(std::move(members));
  const std::string stem = fs::path(o.history).stem().string();
  for (std::size_t i = 0; i < histories.size(); ++i) {
    io::write_file_atomic(dir / (stem + "_member_" + std::to_string(i + 1) + ".csv"), write_history_csv(histories[i]));
  }
  io::save_ensemble(dir / o.out, ensemble, effective);
  out << "trained ensemble of " << ensemble.size() << " " << to_string(tc.loss) << " models\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string model;
  std::string pairs;
  std::string thresholds = "inf";
  std::string uncertainty;
  std::string id_set;
  std::string ood_set;
  std::string out = "metrics.json";
  std::string curve_csv;
};

inline std::optional<UncertaintyKind> optional_kind(const std::string& name) {
  if (name.empty()) return std::nullopt;
  return uncertainty_kind_from_string(name);
}

inline int cmd_eval(const GlobalOptions& g, const EvalOptions& o, const json& effective, std::ostream& out) {
  if (o.model.empty()) throw ConfigError("eval needs --model");
  if (o.pairs.empty() && (o.id_set.empty() || o.ood_set.empty())) {
    throw ConfigError("eval needs --pairs and/or both --id and --ood");
  }
  const auto scorer = load_scorer(o.model);
  json report;
  report["config"] = effective;
  report["model_kind"] = scorer.kind();
  if (!o.pairs.empty()) {
    const auto ds = io::load_dataset(o.pairs);
    require_same_schema(ds.schema, scorer.schema, o.pairs);
    if (ds.pairs.empty()) throw InputError(o.pairs + ": no pairs");
    auto thresholds = parse_number_list(o.thresholds, "--thresholds");
    const auto kind = optional_kind(o.uncertainty);
    const auto curve = scorer.visit([&](const auto& s) { return accuracy_vs_threshold(s, ds.pairs, thresholds, kind); });
    const double accuracy = scorer.visit([&](const auto& s) { return eval_pairwise_accuracy(s, ds.pairs); });
    report["pair_count"] = ds.pairs.size();
    report["accuracy"] = io::report_number(accuracy);
    report["curve"] = curve_to_json(curve);
    if (!o.curve_csv.empty()) io::write_file_atomic(fs::path(g.out_dir) / o.curve_csv, curve_to_csv(curve));
    out << "accuracy " << io::format_number(accuracy) << " over " << ds.pairs.size() << " pairs\n";
  }
  if (!o.id_set.empty() && !o.ood_set.empty()) {
    const auto id_ds = io::load_dataset(o.id_set);
    const auto ood_ds = io::load_dataset(o.ood_set);
    require_same_schema(id_ds.schema, scorer.schema, o.id_set);
    require_same_schema(ood_ds.schema, scorer.schema, o.ood_set);
    const auto rep = scorer.visit([&](const auto& s) { return ood_report(s, id_ds.records, ood_ds.records); });
    report["ood"] = ood_report_to_json(rep);
    for (const auto& k : rep.kinds) out << to_string(k.kind) << " auroc " << io::format_number(k.auroc) << "\n";
  }
  io::write_file_atomic(fs::path(g.out_dir) / o.out, io::dump_report(report));
  return 0;
}

// ---------------------------------------------------------------------------

struct OodReportOptions {
  std::string model;
  std::string id_set;
  std::string ood_set;
  std::size_t bins = 20;
  std::string out = "ood_report.json";
};

inline int cmd_ood_report(const GlobalOptions& g, const OodReportOptions& o, const json& effective, std::ostream& out) {
  if (o.model.empty() || o.id_set.empty() || o.ood_set.empty()) {
    throw ConfigError("ood-report needs --model, --id and --ood");
  }
  const auto scorer = load_scorer(o.model);
  const auto id_ds = io::load_dataset(o.id_set);
  const auto ood_ds = io::load_dataset(o.ood_set);
  require_same_schema(id_ds.schema, scorer.schema, o.id_set);
  require_same_schema(ood_ds.schema, scorer.schema, o.ood_set);
  const auto rep = scorer.visit([&](const auto& s) { return ood_report(s, id_ds.records, ood_ds.records, o.bins); });
  json report = ood_report_to_json(rep);
  report["config"] = effective;
  report["model_kind"] = scorer.kind();
  io::write_file_atomic(fs::path(g.out_dir) / o.out, io::dump_report(report));
  for (const auto& k : rep.kinds) {
    out << to_string(k.kind) << " auroc " << io::format_number(k.auroc) << " mean id " << io::format_number(k.id.mean)
        << " ood " << io::format_number(k.ood.mean) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct BonOptions {
  std::string model;
  std::string data;
  std::string n_values = "1,2,4,8,16,32";
  std::string out = "bon.csv";
};

/// Per prompt group, selects best-of-n for every requested n and averages
/// the ground-truth utility of the selections.
inline int cmd_bon(const GlobalOptions& g, const BonOptions& o, const json& effective, std::ostream& out) {
  if (o.model.empty() || o.data.empty()) throw ConfigError("bon needs --model and --data");
  const auto scorer = load_scorer(o.model);
  const auto ds = io::load_dataset(o.data);
  require_same_schema(ds.schema, scorer.schema, o.data);
  if (!ds.true_weights) throw InputError(o.data + ": header lacks true_weights needed for utility");
  std::vector<std::size_t> ns;
  for (double v : parse_number_list(o.n_values, "--n")) {
    if (!(v >= 1.0) || v != std::floor(v) || !std::isfinite(v)) throw ConfigError("--n values must be positive integers");
    ns.push_back(static_cast<std::size_t>(v));
  }
  std::map<std::uint64_t, std::vector<Record>> groups;
  for (const auto& r : ds.records) {
    if (!r.has_truth()) throw InputError(o.data + ": record " + std::to_string(r.id) + " lacks true_mean");
    groups[r.prompt_group].push_back(r);
  }
  if (groups.empty()) throw InputError(o.data + ": no candidates");
  std::vector<double> utility(ns.size(), 0.0);
  std::vector<double> reward(ns.size(), 0.0);
  for (const auto& [group, records] : groups) {
    const auto scored = scorer.visit([&](const auto& s) { return score_candidates(s, records); });
    for (std::size_t k = 0; k < ns.size(); ++k) {
      const auto pick = bon_select(scored, ns[k], derive_seed(g.seed, group));
      utility[k] += dot(*ds.true_weights, pick.record.true_mean);
      reward[k] += pick.reward;
    }
  }
  std::string csv = "n,mean_true_utility,mean_reward,prompts\n";
  const auto prompts = static_cast<double>(groups.size());
  for (std::size_t k = 0; k < ns.size(); ++k) {
    csv += std::to_string(ns[k]) + "," + io::format_number(utility[k] / prompts) + "," +
           io::format_number(reward[k] / prompts) + "," + std::to_string(groups.size()) + "\n";
    out << "n=" << ns[k] << " mean true utility " << io::format_number(utility[k] / prompts) << "\n";
  }
  io::write_file_atomic(fs::path(g.out_dir) / o.out, csv);
  (void)effective;
  return 0;
}

// ---------------------------------------------------------------------------

struct FilterOptions {
  std::string model;
  std::string pairs;
  std::optional<double> keep_fraction;
  std::optional<double> threshold;
  std::string uncertainty;
  std::string out = "filtered_pairs.jsonl";
};

inline int cmd_filter(const GlobalOptions& g, const FilterOptions& o, const json& effective, std::ostream& out) {
  if (o.model.empty() || o.pairs.empty()) throw ConfigError("filter needs --model and --pairs");
  if (o.keep_fraction.has_value() == o.threshold.has_value()) {
    throw ConfigError("filter needs exactly one of --keep-fraction or --threshold");
  }
  const auto mode = o.keep_fraction ? FilterMode::keep_fraction(*o.keep_fraction) : FilterMode::threshold(*o.threshold);
  if (mode.kind == FilterMode::Kind::keep_fraction && !(mode.value > 0.0 && mode.value <= 1.0)) {
    throw ConfigError("--keep-fraction must lie in (0, 1]");
  }
  if (mode.kind == FilterMode::Kind::threshold && !(mode.value >= 0.0)) throw ConfigError("--threshold must be >= 0");
  const auto scorer = load_scorer(o.model);
  const auto ds = io::load_dataset(o.pairs);
  require_same_schema(ds.schema, scorer.schema, o.pairs);
  const auto kind = optional_kind(o.uncertainty);
  const auto scored = scorer.visit([&](const auto& s) {
    return score_pairs(s, ds.pairs, kind.value_or(s.default_uncertainty()));
  });
  const auto kept = filter_by_uncertainty(scored, mode);
  io::Dataset result{ds.schema, ds.true_weights, {}, {}};
  for (const auto& p : kept) result.pairs.push_back(p.pair);
  io::save_dataset(fs::path(g.out_dir) / o.out, result);
  out << "kept " << kept.size() << " of " << ds.pairs.size() << " pairs\n";
  (void)effective;
  return 0;
}

// ---------------------------------------------------------------------------

struct MergeOptions {
  std::vector<std::string> inputs;
  double lambda = 0.5;
  std::string out = "merged.json";
};

inline int cmd_merge(const GlobalOptions& g, const MergeOptions& o, const json& effective, std::ostream& out) {
  if (o.inputs.size() != 2) throw ConfigError("merge needs exactly two checkpoints");
  const auto m1 = io::load_model(o.inputs[0]);
  const auto m2 = io::load_model(o.inputs[1]);
  auto merged = merge_models(m1, m2, o.lambda);
  merged.metadata().provenance += " from " + o.inputs[0] + " + " + o.inputs[1];
  io::save_model(fs::path(g.out_dir) / o.out, merged, effective);
  out << "merged with lambda " << io::format_number(o.lambda) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

/// Parses arguments and runs one command. Returns the process exit status:
/// 0 success, 2 configuration/input error, 3 I/O error, 4 training diverged.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Uncertainty-aware reward models: synthetic data, training, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON config file; flags override its keys");

  // One settings table per command so config keys cannot collide across
  // commands. Global flags are bound into each table.
  std::map<CLI::App*, Settings> settings;
  Settings globals;
  globals.add(app, "--seed", g.seed, "seed", "Random seed");
  globals.add(app, "--out-dir", g.out_dir, "out_dir", "Directory for outputs");
  globals.add(app, "--threads", g.threads, "threads", "Worker threads (0 = all cores)");
  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic world and its dataset splits");
  settings[gen_cmd].add(*gen_cmd, "--count", gen.count, "count", "Total records (ID + OOD)");
  settings[gen_cmd].add(*gen_cmd, "--ood-fraction", gen.ood_fraction, "ood_fraction", "Fraction of records drawn OOD");
  settings[gen_cmd].add(*gen_cmd, "--d", gen.d, "d", "Feature dimension");
  settings[gen_cmd].add(*gen_cmd, "--n", gen.n, "n", "Attribute count");
  settings[gen_cmd].add(*gen_cmd, "--delta", gen.delta, "delta", "OOD shift distance");
  settings[gen_cmd].add(*gen_cmd, "--flip-rate", gen.flip_rate, "flip_rate", "Preference flip rate for pair files");
  settings[gen_cmd].add(*gen_cmd, "--tau", gen.tau, "tau", "Flip temperature");
  settings[gen_cmd].add(*gen_cmd, "--pairs-per-record", gen.pairs_per_record, "pairs_per_record", "Pairs per record per split");
  settings[gen_cmd].add(*gen_cmd, "--group-size", gen.group_size, "group_size", "Responses per prompt");
  settings[gen_cmd].add(*gen_cmd, "--bon-prompts", gen.bon_prompts, "bon_prompts", "Prompts in the best-of-n pool");
  settings[gen_cmd].add(*gen_cmd, "--bon-candidates", gen.bon_candidates, "bon_candidates", "Candidates per best-of-n prompt");
  settings[gen_cmd].add(*gen_cmd, "--world-seed", gen.world_seed, "world_seed", "Seed of the ground-truth world");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a URM or an ensemble");
  settings[train_cmd].add(*train_cmd, "--data", train.data, "data", "Training dataset (.jsonl)");
  settings[train_cmd].add(*train_cmd, "--loss", train.loss, "loss", "mle | regression | deterministic");
  settings[train_cmd].add(*train_cmd, "--epochs", train.epochs, "epochs", "Training epochs");
  settings[train_cmd].add(*train_cmd, "--batch-size", train.batch_size, "batch_size", "Mini-batch size");
  settings[train_cmd].add(*train_cmd, "--lr", train.lr, "lr", "Adam learning rate");
  settings[train_cmd].add(*train_cmd, "--weight-decay", train.weight_decay, "weight_decay", "Decoupled weight decay");
  settings[train_cmd].add(*train_cmd, "--val-fraction", train.val_fraction, "val_fraction", "Held-out fraction for selection");
  settings[train_cmd].add(*train_cmd, "--ensemble", train.ensemble, "ensemble", "Ensemble size (1 = single model)");
  settings[train_cmd].add(*train_cmd, "--seeds", train.seeds, "seeds", "Comma-separated member seeds");
  settings[train_cmd].add(*train_cmd, "--init-seed", train.init_seed, "init_seed", "Initialization seed (defaults to --seed)");
  settings[train_cmd].add(*train_cmd, "--out", train.out, "out", "Checkpoint (or manifest) file name");
  settings[train_cmd].add(*train_cmd, "--history", train.history, "history", "History CSV file name");
  settings[train_cmd].add(*train_cmd, "--val-pairs", train.val_pairs, "val_pairs", "Validation pairs for accuracy tracking");
  settings[train_cmd].add(*train_cmd, "--gating-pairs", train.gating_pairs, "gating_pairs", "Train a gating layer on these pairs");
  settings[train_cmd].add(*train_cmd, "--gating-steps", train.gating_steps, "gating_steps", "Gating optimization steps");
  settings[train_cmd].add(*train_cmd, "--activation", train.activation, "activation", "Hidden activation of trunk and head (tanh | selu)");
  settings[train_cmd].add_config_only(
      "fixed_weights",
      [&train](const json& v) {
        if (!v.is_object()) throw ConfigError("config key 'fixed_weights' must map attribute names to numbers");
        for (const auto& [name, w] : v.items()) {
          if (!w.is_number()) throw ConfigError("fixed_weights['" + name + "'] must be a number");
          train.fixed_weights[name] = w.get<double>();
        }
      },
      [&train]() { return json(train.fixed_weights); });

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Pairwise accuracy, threshold curves and OOD AUROC");
  settings[eval_cmd].add(*eval_cmd, "--model", ev.model, "model", "Checkpoint or ensemble manifest");
  settings[eval_cmd].add(*eval_cmd, "--pairs", ev.pairs, "pairs", "Preference pairs (.jsonl)");
  settings[eval_cmd].add(*eval_cmd, "--thresholds", ev.thresholds, "thresholds", "Ascending thresholds, e.g. 1,2,inf");
  settings[eval_cmd].add(*eval_cmd, "--uncertainty", ev.uncertainty, "uncertainty", "aleatoric | u1 | u2");
  settings[eval_cmd].add(*eval_cmd, "--id", ev.id_set, "id", "ID records for AUROC");
  settings[eval_cmd].add(*eval_cmd, "--ood", ev.ood_set, "ood", "OOD records for AUROC");
  settings[eval_cmd].add(*eval_cmd, "--out", ev.out, "out", "Metrics JSON file name");
  settings[eval_cmd].add(*eval_cmd, "--curve-csv", ev.curve_csv, "curve_csv", "Also write the threshold curve as CSV");

  OodReportOptions ood;
  auto* ood_cmd = app.add_subcommand("ood-report", "Uncertainty histograms and AUROC on ID vs OOD records");
  settings[ood_cmd].add(*ood_cmd, "--model", ood.model, "model", "Checkpoint or ensemble manifest");
  settings[ood_cmd].add(*ood_cmd, "--id", ood.id_set, "id", "ID records");
  settings[ood_cmd].add(*ood_cmd, "--ood", ood.ood_set, "ood", "OOD records");
  settings[ood_cmd].add(*ood_cmd, "--bins", ood.bins, "bins", "Histogram bins");
  settings[ood_cmd].add(*ood_cmd, "--out", ood.out, "out", "Report JSON file name");

  BonOptions bon;
  auto* bon_cmd = app.add_subcommand("bon", "Best-of-n selection over a candidate pool");
  settings[bon_cmd].add(*bon_cmd, "--model", bon.model, "model", "Checkpoint or ensemble manifest");
  settings[bon_cmd].add(*bon_cmd, "--data", bon.data, "data", "Candidate pool grouped by prompt");
  settings[bon_cmd].add(*bon_cmd, "--n", bon.n_values, "n", "Comma-separated n values");
  settings[bon_cmd].add(*bon_cmd, "--out", bon.out, "out", "CSV file name");

  FilterOptions filt;
  auto* filter_cmd = app.add_subcommand("filter", "Keep the least uncertain preference pairs");
  settings[filter_cmd].add(*filter_cmd, "--model", filt.model, "model", "Checkpoint or ensemble manifest");
  settings[filter_cmd].add(*filter_cmd, "--pairs", filt.pairs, "pairs", "Preference pairs (.jsonl)");
  settings[filter_cmd].add(*filter_cmd, "--keep-fraction", filt.keep_fraction, "keep_fraction", "Fraction of pairs to keep");
  settings[filter_cmd].add(*filter_cmd, "--threshold", filt.threshold, "threshold", "Keep pairs with uncertainty <= threshold");
  settings[filter_cmd].add(*filter_cmd, "--uncertainty", filt.uncertainty, "uncertainty", "aleatoric | u1 | u2");
  settings[filter_cmd].add(*filter_cmd, "--out", filt.out, "out", "Output pairs file name");

  MergeOptions merge;
  auto* merge_cmd = app.add_subcommand("merge", "Interpolate two checkpoints parameter-wise");
  merge_cmd->add_option("checkpoints", merge.inputs, "Two model checkpoints")->expected(2);
  settings[merge_cmd].add(*merge_cmd, "--lambda", merge.lambda, "lambda", "Weight of the first checkpoint");
  settings[merge_cmd].add(*merge_cmd, "--out", merge.out, "out", "Merged checkpoint file name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    Settings& local = settings[active];
    local.merge(globals);
    local.apply(load_config(g.config_path));
    set_threads(g.threads);
    json effective = local.effective();
    effective["command"] = active->get_name();
    if (*gen_cmd) return cmd_gen_data(g, gen, effective, out);
    if (*train_cmd) return cmd_train(g, train, effective, out);
    if (*eval_cmd) return cmd_eval(g, ev, effective, out);
    if (*ood_cmd) return cmd_ood_report(g, ood, effective, out);
    if (*bon_cmd) return cmd_bon(g, bon, effective, out);
    if (*filter_cmd) return cmd_filter(g, filt, effective, out);
    if (*merge_cmd) return cmd_merge(g, merge, effective, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace urm::cli
