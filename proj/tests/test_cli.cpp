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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "test_support.hpp"

namespace urm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("urm_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunResult run(std::vector<std::string> args) {
    args.insert(args.begin(), "urm");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string read(const std::string& name) const { return io::read_file(dir_ / name); }

  // Small dataset used by most commands.
  void gen(const std::string& sub = "data", std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"--seed", "3", "--out-dir", path(sub), "gen-data", "--count", "600"};
    args.insert(args.end(), extra.begin(), extra.end());
    ASSERT_EQ(run(args).code, 0);
  }

  void train(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"--seed", "1", "--out-dir", path("data"), "train", "--data", path("data/train.jsonl"),
                                  "--out", out};
    if (std::find(extra.begin(), extra.end(), "--epochs") == extra.end()) extra.insert(extra.end(), {"--epochs", "2"});
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

TEST_F(Cli, GenDataCounts) {
  const auto r = run({"--out-dir", path("d"), "gen-data", "--count", "1000", "--ood-fraction", "0.2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("id 800 ood 200"), std::string::npos);
  const auto id = io::load_dataset(dir_ / "d/train.jsonl").records.size() + io::load_dataset(dir_ / "d/val.jsonl").records.size() +
                  io::load_dataset(dir_ / "d/eval.jsonl").records.size();
  EXPECT_EQ(id, 800u);
  EXPECT_EQ(io::load_dataset(dir_ / "d/ood.jsonl").records.size(), 200u);
}

TEST_F(Cli, GenDataIsByteStable) {
  gen("a");
  gen("b");
  for (const char* f : {"train.jsonl", "val.jsonl", "eval.jsonl", "ood.jsonl", "eval_pairs.jsonl", "oracle.json"}) {
    EXPECT_EQ(read(std::string("a/") + f), read(std::string("b/") + f)) << f;
  }
}

TEST_F(Cli, ConfigurationErrors) {
  auto r = run({"--out-dir", path("x"), "gen-data", "--ood-fraction", "1.5"});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "x" / "train.jsonl"));
  io::write_file_atomic(dir_ / "cfg.json", R"({"count": 100, "colour": 1})");
  r = run({"--config", path("cfg.json"), "--out-dir", path("y"), "gen-data"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("colour"), std::string::npos);
  EXPECT_EQ(run({"gen-data", "--no-such-flag"}).code, 2);
}

TEST_F(Cli, ConfigPrecedence) {
  io::write_file_atomic(dir_ / "cfg.json", R"({"count": 100, "ood_fraction": 0.5})");
  const auto r = run({"--config", path("cfg.json"), "--out-dir", path("p"), "gen-data", "--count", "200"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("id 100 ood 100"), std::string::npos);
  const auto meta = json::parse(read("p/gen_data.json"));
  EXPECT_EQ(meta["config"]["count"], 200);
  EXPECT_EQ(meta["config"]["ood_fraction"], 0.5);
}

TEST_F(Cli, UnwritableOutputIsIoError) {
  io::write_file_atomic(dir_ / "blocker", "x");
  EXPECT_EQ(run({"--out-dir", path("blocker/sub"), "gen-data", "--count", "50"}).code, 3);
}

TEST_F(Cli, MissingInputIsIoError) {
  EXPECT_EQ(run({"eval", "--model", path("none.json"), "--pairs", path("none.jsonl")}).code, 3);
}

TEST_F(Cli, ZeroEpochCheckpointIsValid) {
  gen();
  train("m0.json", {"--epochs", "0"});
  const auto m = io::load_model(dir_ / "data/m0.json");
  EXPECT_EQ(m.metadata().steps, 0u);
  const auto r = run({"--out-dir", path("data"), "eval", "--model", path("data/m0.json"), "--pairs", path("data/eval_pairs.jsonl")});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, EnsembleManifest) {
  gen();
  train("ens.json", {"--ensemble", "3", "--seeds", "1,2,3"});
  const auto manifest = json::parse(read("data/ens.json"));
  EXPECT_EQ(manifest["k"], 3);
  EXPECT_EQ(manifest["seeds"], (std::vector<int>{1, 2, 3}));
  for (const auto& m : manifest["members"]) EXPECT_TRUE(fs::exists(dir_ / "data" / m.get<std::string>()));
  EXPECT_EQ(io::load_ensemble(dir_ / "data/ens.json").size(), 3u);
  EXPECT_EQ(run({"--out-dir", path("data"), "train", "--data", path("data/train.jsonl"), "--ensemble", "2", "--seeds", "7,7"}).code, 2);
}

TEST_F(Cli, SchemaMismatchIsConfigError) {
  gen();
  gen("other", {"--d", "8"});
  const auto r = run({"--out-dir", path("data"), "train", "--data", path("data/train.jsonl"), "--val-pairs",
                      path("other/val_pairs.jsonl")});
  EXPECT_EQ(r.code, 2);
  io::write_file_atomic(dir_ / "cfg.json", R"({"fixed_weights": {"kindness": 1.0}})");
  EXPECT_EQ(run({"--config", path("cfg.json"), "--out-dir", path("data"), "train", "--data", path("data/train.jsonl")}).code, 2);
}

TEST_F(Cli, TrainingIsReproducible) {
  gen();
  train("a.json");
  train("b.json", {});
  auto a = json::parse(read("data/a.json"));
  auto b = json::parse(read("data/b.json"));
  a.erase("config");
  b.erase("config");
  EXPECT_EQ(a.dump(), b.dump());
}

TEST_F(Cli, OracleAccuracyAndStableReports) {
  gen("data", {"--flip-rate", "0"});
  const auto ds = io::load_dataset(dir_ / "data/eval_pairs.jsonl");
  const OracleScorer oracle(*ds.true_weights);
  std::size_t ties = 0;
  for (const auto& p : ds.pairs) ties += oracle.assess(p.chosen).reward == oracle.assess(p.rejected).reward ? 1 : 0;
  const auto before = read("data/oracle.json");
  auto args = std::vector<std::string>{"--out-dir", path("data"), "eval", "--model", path("data/oracle.json"),
                                       "--pairs", path("data/eval_pairs.jsonl"), "--thresholds", "inf"};
  ASSERT_EQ(run(args).code, 0);
  const auto first = read("data/metrics.json");
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(read("data/metrics.json"), first);
  EXPECT_EQ(read("data/oracle.json"), before);
  const auto metrics = json::parse(first);
  EXPECT_DOUBLE_EQ(metrics["accuracy"].get<double>(), 1.0 - static_cast<double>(ties) / static_cast<double>(ds.pairs.size()));
  ASSERT_EQ(metrics["curve"]["accuracy"].size(), 1u);
  EXPECT_EQ(metrics["curve"]["accuracy"][0], metrics["accuracy"]);
  EXPECT_EQ(metrics["curve"]["thresholds"][0], "inf");
}

TEST_F(Cli, MergeEndpoint) {
  gen();
  train("m1.json");
  train("m2.json", {"--loss", "regression"});
  ASSERT_EQ(run({"--out-dir", path("data"), "merge", "--lambda", "1.0", path("data/m1.json"), path("data/m2.json")}).code, 0);
  const auto merged = io::load_model(dir_ / "data/merged.json");
  EXPECT_EQ(merged.flat_parameters(), io::load_model(dir_ / "data/m1.json").flat_parameters());
  EXPECT_NE(merged.metadata().provenance.find("merge(lambda=1"), std::string::npos);
  train("m3.json", {"--loss", "deterministic"});
  EXPECT_EQ(run({"--out-dir", path("data"), "merge", path("data/m1.json"), path("data/m3.json")}).code, 2);
}

TEST_F(Cli, FilterHalvesFourPairs) {
  gen();
  train("m.json");
  auto ds = io::load_dataset(dir_ / "data/eval_pairs.jsonl");
  ds.pairs.resize(4);
  io::save_dataset(dir_ / "data/four.jsonl", ds);
  ASSERT_EQ(run({"--out-dir", path("data"), "filter", "--model", path("data/m.json"), "--pairs", path("data/four.jsonl"),
                 "--keep-fraction", "0.5", "--out", "half.jsonl"})
                .code,
            0);
  EXPECT_EQ(io::load_dataset(dir_ / "data/half.jsonl").pairs.size(), 2u);
  EXPECT_EQ(run({"--out-dir", path("data"), "filter", "--model", path("data/m.json"), "--pairs", path("data/four.jsonl"),
                 "--keep-fraction", "0.5", "--threshold", "1", "--out", "both.jsonl"})
                .code,
            2);
  EXPECT_FALSE(fs::exists(dir_ / "data/both.jsonl"));
}

TEST_F(Cli, BonWithOracleIsMonotone) {
  gen("data", {"--bon-prompts", "40"});
  ASSERT_EQ(run({"--out-dir", path("data"), "bon", "--model", path("data/oracle.json"), "--data", path("data/bon.jsonl"),
                 "--n", "1,2,4,8"})
                .code,
            0);
  std::istringstream csv(read("data/bon.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "n,mean_true_utility,mean_reward,prompts");
  double prev = -std::numeric_limits<double>::infinity();
  int rows = 0;
  while (std::getline(csv, line)) {
    const auto a = line.find(',');
    const double u = std::stod(line.substr(a + 1, line.find(',', a + 1) - a - 1));
    EXPECT_GE(u, prev);
    prev = u;
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}

TEST(Io, CheckpointRoundTripIsBitwise) {
  Rng rng(4);
  auto m = UrmModel::random(Schema::make(5, 3), HeadKind::probabilistic, Architecture{}, {0.2, 0.3, 0.5}, rng);
  m.set_gating(GatingNet::random(5, 3, 8, rng));
  m.metadata().final_val_loss = 1.0 / 3.0;
  const auto text = io::model_to_json(m).dump();
  const auto back = io::model_from_json(json::parse(text), "mem");
  EXPECT_TRUE(back == m);
  const auto a = m.flat_parameters();
  const auto b = back.flat_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
  EXPECT_EQ(io::model_to_json(back).dump(), text);
}

TEST(Io, DatasetRoundTrip) {
  const auto w = gen_world({}, 2);
  const auto records = sample_records(w, 40, 0.25, 3);
  io::Dataset ds{w.schema(), w.weights(), records, label_noise(make_pairs(records, w, 30, 4), 0.3, 1.0, 5)};
  const auto text = io::dataset_to_string(ds);
  const auto back = io::parse_dataset(text, "mem");
  EXPECT_EQ(back.records, ds.records);
  EXPECT_EQ(back.pairs, ds.pairs);
  EXPECT_EQ(io::dataset_to_string(back), text);
}

TEST(Io, MalformedInputIsRejected) {
  EXPECT_THROW(io::parse_dataset("{not json", "mem"), InputError);
  EXPECT_THROW(io::parse_dataset(R"({"format":"something-else"})", "mem"), InputError);
}

TEST(Io, ReportNumbers) {
  EXPECT_EQ(io::report_number(1.0 / 3.0).dump(), "0.333333333");
  EXPECT_EQ(io::report_number(std::nan("")).dump(), "null");
  EXPECT_EQ(io::report_number(std::numeric_limits<double>::infinity()).dump(), "\"inf\"");
  EXPECT_EQ(io::format_number(2.0 / 3.0), "0.666666667");
}

}  // namespace
}  // namespace urm
