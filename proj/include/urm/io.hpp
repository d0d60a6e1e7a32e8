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

// Dataset, checkpoint and report persistence.
//
// Datasets are line-delimited JSON: a header object carrying the schema,
// then one object per record. Checkpoints are single JSON documents whose
// numbers are written in shortest round-trip form, so loading a saved model
// reproduces every parameter bit for bit. Reports round numbers to 9
// significant digits.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "urm/dense.hpp"
#include "urm/ensemble.hpp"
#include "urm/error.hpp"
#include "urm/gating.hpp"
#include "urm/model.hpp"
#include "urm/record.hpp"
#include "urm/reward_head.hpp"

namespace urm::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Files

/// Writes `contents` to `path` via a temporary sibling and a rename, so a
/// failed command never leaves a partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string(), "cannot create directory: " + ec.message());
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out << contents;
    out.flush();
    if (!out) throw IoError(path.string(), "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError(path.string(), "cannot move temporary file into place");
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(where + ": malformed JSON (" + e.what() + ")");
  }
}

// ---------------------------------------------------------------------------
// Numbers

// Exact number, or null for NaN.
inline json exact_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

/// Number rounded to 9 significant digits; NaN becomes null and infinities
/// become the strings "inf" / "-inf".
inline json report_number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline json report_number(const std::optional<double>& v) { return v ? report_number(*v) : json(nullptr); }

inline json report_array(const std::vector<double>& values) {
  json out = json::array();
  for (double v : values) out.push_back(report_number(v));
  return out;
}

/// %.9g, with "nan" / "inf" spelled out, for CSV cells.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Deterministic report text: sorted keys, two-space indent, trailing newline.
inline std::string dump_report(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Schema

inline json schema_to_json(const Schema& s) {
  return {{"d", s.feature_dim}, {"n", s.attribute_count}, {"attributes", s.attribute_names}};
}

inline Schema schema_from_json(const json& j, const std::string& where) {
  try {
    Schema s{j.at("d").get<std::size_t>(), j.at("n").get<std::size_t>(),
             j.at("attributes").get<std::vector<std::string>>()};
    if (s.attribute_names.size() != s.attribute_count) {
      throw InputError(where + ": schema lists " + std::to_string(s.attribute_names.size()) + " names for " +
                       std::to_string(s.attribute_count) + " attributes");
    }
    return s;
  } catch (const json::exception& e) {
    throw InputError(where + ": invalid schema (" + e.what() + ")");
  }
}

/// FNV-1a over the canonical schema text, as 16 hex digits.
inline std::string schema_hash(const Schema& s) {
  const std::string text = schema_to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Datasets

enum class PairRole { none, chosen, rejected };

struct Dataset {
  Schema schema;
  std::optional<std::vector<double>> true_weights;
  std::vector<Record> records;            // unpaired records
  std::vector<PreferencePair> pairs;      // reassembled from chosen/rejected lines
};

inline json record_to_json(const Record& r, PairRole role, std::optional<std::uint64_t> pair_id,
                           std::optional<double> true_margin) {
  json j;
  j["id"] = r.id;
  j["features"] = r.features;
  if (r.has_labels()) j["labels"] = r.labels;
  if (r.has_truth()) {
    j["true_mean"] = r.true_mean;
    j["true_std"] = r.true_std;
  }
  j["is_ood"] = r.is_ood;
  j["prompt_group"] = r.prompt_group;
  j["pair_role"] = role == PairRole::none ? "none" : role == PairRole::chosen ? "chosen" : "rejected";
  if (pair_id) j["pair_id"] = *pair_id;
  if (true_margin) j["true_margin"] = *true_margin;
  return j;
}

inline std::string dataset_to_string(const Dataset& ds) {
  json header;
  header["format"] = "urm-dataset";
  header["version"] = kFormatVersion;
  header["schema"] = schema_to_json(ds.schema);
  if (ds.true_weights) header["true_weights"] = *ds.true_weights;
  header["record_count"] = ds.records.size();
  header["pair_count"] = ds.pairs.size();
  std::string out = header.dump() + "\n";
  for (const auto& r : ds.records) out += record_to_json(r, PairRole::none, std::nullopt, std::nullopt).dump() + "\n";
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto& p = ds.pairs[i];
    out += record_to_json(p.chosen, PairRole::chosen, i, p.true_margin).dump() + "\n";
    out += record_to_json(p.rejected, PairRole::rejected, i, p.true_margin).dump() + "\n";
  }
  return out;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  write_file_atomic(path, dataset_to_string(ds));
}

inline Dataset parse_dataset(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError(where + ": empty dataset file");
  const json header = parse_json(line, where + ":1");
  if (header.value("format", "") != "urm-dataset") throw InputError(where + ": not a urm dataset file");
  if (header.value("version", 0) != kFormatVersion) {
    throw InputError(where + ": unsupported dataset version " + std::to_string(header.value("version", 0)));
  }
  Dataset ds;
  ds.schema = schema_from_json(header.at("schema"), where);
  if (header.contains("true_weights")) ds.true_weights = header["true_weights"].get<std::vector<double>>();

  std::map<std::uint64_t, std::pair<std::optional<Record>, std::optional<Record>>> pending;
  std::map<std::uint64_t, std::optional<double>> margins;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string at = where + ":" + std::to_string(line_no);
    const json j = parse_json(line, at);
    Record r;
    try {
      r.id = j.at("id").get<std::uint64_t>();
      r.features = j.at("features").get<std::vector<double>>();
      if (j.contains("labels")) r.labels = j["labels"].get<std::vector<double>>();
      if (j.contains("true_mean")) r.true_mean = j["true_mean"].get<std::vector<double>>();
      if (j.contains("true_std")) r.true_std = j["true_std"].get<std::vector<double>>();
      r.is_ood = j.value("is_ood", false);
      r.prompt_group = j.value("prompt_group", std::uint64_t{0});
    } catch (const json::exception& e) {
      throw InputError(at + ": invalid record (" + e.what() + ")");
    }
    if (r.features.size() != ds.schema.feature_dim) {
      throw InputError(at + ": record has " + std::to_string(r.features.size()) + " features, header says " +
                       std::to_string(ds.schema.feature_dim));
    }
    for (const auto* v : {&r.labels, &r.true_mean, &r.true_std}) {
      if (!v->empty() && v->size() != ds.schema.attribute_count) {
        throw InputError(at + ": attribute array length does not match the header");
      }
    }
    const std::string role = j.value("pair_role", "none");
    if (role == "none") {
      ds.records.push_back(std::move(r));
      continue;
    }
    if (!j.contains("pair_id")) throw InputError(at + ": paired record lacks pair_id");
    const auto pid = j["pair_id"].get<std::uint64_t>();
    auto& slot = pending[pid];
    if (j.contains("true_margin")) margins[pid] = j["true_margin"].get<double>();
    if (role == "chosen") {
      if (slot.first) throw InputError(at + ": duplicate chosen record for pair " + std::to_string(pid));
      slot.first = std::move(r);
    } else if (role == "rejected") {
      if (slot.second) throw InputError(at + ": duplicate rejected record for pair " + std::to_string(pid));
      slot.second = std::move(r);
    } else {
      throw InputError(at + ": unknown pair_role '" + role + "'");
    }
  }
  for (auto& [pid, slot] : pending) {
    if (!slot.first || !slot.second) throw InputError(where + ": pair " + std::to_string(pid) + " is incomplete");
    ds.pairs.push_back({std::move(*slot.first), std::move(*slot.second), margins[pid]});
  }
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Networks and models

inline json net_to_json(const DenseNet& net) {
  json layers = json::array();
  std::size_t offset = 0;
  const auto params = net.params();
  for (const auto& shape : net.shapes()) {
    const std::size_t nw = shape.out * shape.in;
    layers.push_back({{"in", shape.in},
                      {"out", shape.out},
                      {"activation", to_string(shape.activation)},
                      {"weight", std::vector<double>(params.begin() + static_cast<std::ptrdiff_t>(offset),
                                                     params.begin() + static_cast<std::ptrdiff_t>(offset + nw))},
                      {"bias", std::vector<double>(params.begin() + static_cast<std::ptrdiff_t>(offset + nw),
                                                   params.begin() +
                                                       static_cast<std::ptrdiff_t>(offset + nw + shape.out))}});
    offset += shape.parameter_count();
  }
  return {{"input_dim", net.input_dim()}, {"layers", layers}};
}

inline DenseNet net_from_json(const json& j, const std::string& where) {
  try {
    std::vector<LayerShape> shapes;
    std::vector<double> params;
    for (const auto& layer : j.at("layers")) {
      LayerShape shape{layer.at("in").get<std::size_t>(), layer.at("out").get<std::size_t>(),
                       activation_from_string(layer.at("activation").get<std::string>())};
      auto w = layer.at("weight").get<std::vector<double>>();
      auto b = layer.at("bias").get<std::vector<double>>();
      if (w.size() != shape.in * shape.out || b.size() != shape.out) {
        throw InputError(where + ": layer parameter arrays do not match the declared shape");
      }
      params.insert(params.end(), w.begin(), w.end());
      params.insert(params.end(), b.begin(), b.end());
      shapes.push_back(shape);
    }
    const auto input_dim = j.at("input_dim").get<std::size_t>();
    if (shapes.empty()) return DenseNet::identity(input_dim);
    return DenseNet(input_dim, std::move(shapes), std::move(params));
  } catch (const json::exception& e) {
    throw InputError(where + ": invalid network (" + e.what() + ")");
  }
}

inline json model_to_json(const UrmModel& m, const json& config = json::object()) {
  const auto& meta = m.metadata();
  json j;
  j["format"] = "urm-checkpoint";
  j["version"] = kFormatVersion;
  j["kind"] = "urm";
  j["schema"] = schema_to_json(m.schema());
  j["head_kind"] = to_string(m.head_kind());
  j["loss"] = to_string(meta.loss);
  j["trunk"] = net_to_json(m.trunk());
  j["head"] = net_to_json(m.head());
  j["fixed_weights"] = m.fixed_weights();
  j["gating"] = m.gating() ? net_to_json(m.gating()->net()) : json(nullptr);
  j["metadata"] = {{"seed", meta.seed},
                   {"init_seed", meta.init_seed},
                   {"epochs", meta.epochs},
                   {"steps", meta.steps},
                   {"final_train_loss", exact_number(meta.final_train_loss)},
                   {"final_val_loss", exact_number(meta.final_val_loss)},
                   {"provenance", meta.provenance}};
  j["config"] = config;
  return j;
}

inline UrmModel model_from_json(const json& j, const std::string& where) {
  if (j.value("format", "") != "urm-checkpoint" || j.value("kind", "") != "urm") {
    throw InputError(where + ": not a urm model checkpoint");
  }
  if (j.value("version", 0) != kFormatVersion) throw InputError(where + ": unsupported checkpoint version");
  try {
    UrmModel m(schema_from_json(j.at("schema"), where), net_from_json(j.at("trunk"), where),
               net_from_json(j.at("head"), where), head_kind_from_string(j.at("head_kind").get<std::string>()),
               j.at("fixed_weights").get<std::vector<double>>());
    if (!j.at("gating").is_null()) m.set_gating(GatingNet(net_from_json(j["gating"], where)));
    const auto& meta = j.at("metadata");
    auto& out = m.metadata();
    out.seed = meta.at("seed").get<std::uint64_t>();
    out.init_seed = meta.at("init_seed").get<std::uint64_t>();
    out.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    out.epochs = meta.at("epochs").get<std::size_t>();
    out.steps = meta.at("steps").get<std::size_t>();
    out.final_train_loss = number_or_nan(meta.at("final_train_loss"));
    out.final_val_loss = number_or_nan(meta.at("final_val_loss"));
    out.provenance = meta.at("provenance").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw InputError(where + ": invalid checkpoint (" + e.what() + ")");
  }
}

inline void save_model(const std::filesystem::path& path, const UrmModel& m, const json& config = json::object()) {
  write_file_atomic(path, model_to_json(m, config).dump() + "\n");
}

inline UrmModel load_model(const std::filesystem::path& path) {
  return model_from_json(parse_json(read_file(path), path.string()), path.string());
}

inline json oracle_to_json(const Schema& schema, const std::vector<double>& weights) {
  return {{"format", "urm-checkpoint"},
          {"version", kFormatVersion},
          {"kind", "oracle"},
          {"schema", schema_to_json(schema)},
          {"weights", weights}};
}

/// Member files are written next to the manifest as <stem>_member_<i>.json.
inline void save_ensemble(const std::filesystem::path& manifest_path, const Urme& e,
                          const json& config = json::object()) {
  json manifest;
  manifest["format"] = "urm-ensemble";
  manifest["version"] = kFormatVersion;
  manifest["k"] = e.size();
  manifest["seeds"] = e.seeds();
  manifest["schema_hash"] = schema_hash(e.schema());
  manifest["config"] = config;
  json members = json::array();
  const auto dir = manifest_path.parent_path();
  const std::string stem = manifest_path.stem().string();
  for (std::size_t i = 0; i < e.size(); ++i) {
    const std::string name = stem + "_member_" + std::to_string(i + 1) + ".json";
    save_model(dir / name, e.members()[i], config);
    members.push_back(name);
  }
  manifest["members"] = members;
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

inline Urme ensemble_from_manifest(const json& manifest, const std::filesystem::path& manifest_path) {
  const std::string where = manifest_path.string();
  std::vector<UrmModel> members;
  try {
    const auto dir = manifest_path.parent_path();
    for (const auto& name : manifest.at("members")) members.push_back(load_model(dir / name.get<std::string>()));
    Urme e(std::move(members));
    if (manifest.at("schema_hash").get<std::string>() != schema_hash(e.schema())) {
      throw InputError(where + ": schema hash does not match member checkpoints");
    }
    if (manifest.at("seeds").get<std::vector<std::uint64_t>>() != e.seeds()) {
      throw InputError(where + ": manifest seeds do not match member checkpoints");
    }
    return e;
  } catch (const json::exception& ex) {
    throw InputError(where + ": invalid ensemble manifest (" + ex.what() + ")");
  }
}

inline Urme load_ensemble(const std::filesystem::path& manifest_path) {
  const json manifest = parse_json(read_file(manifest_path), manifest_path.string());
  if (manifest.value("format", "") != "urm-ensemble") {
    throw InputError(manifest_path.string() + ": not an ensemble manifest");
  }
  return ensemble_from_manifest(manifest, manifest_path);
}

}  // namespace urm::io
