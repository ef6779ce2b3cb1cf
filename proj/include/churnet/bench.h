// Copyright 2026 The Churnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CHURNET_BENCH_H_
#define CHURNET_BENCH_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "churnet/cdr_ingest.h"
#include "churnet/collective_inference.h"
#include "churnet/evaluation.h"
#include "churnet/relational_classifiers.h"
#include "churnet/synthgen.h"

namespace churnet {

// Default output root when neither the manifest nor a flag names one.
inline constexpr char kOutputEnvVar[] = "CHURNET_OUT";
inline constexpr double kDefaultDecayGamma = 0.02;

// ---- generate ----------------------------------------------------------

struct NamedSynthConfig {
  std::string name;
  SynthConfig config;
};

struct GenerateConfig {
  std::vector<NamedSynthConfig> datasets;
  bool gzip = false;
};

absl::StatusOr<GenerateConfig> ParseGenerateConfig(const std::string& yaml);
absl::StatusOr<GenerateConfig> LoadGenerateConfig(const std::string& path);

// Writes <name>.cdr.tsv[.gz], <name>.truth.tsv and <name>.members.txt per
// dataset, plus a manifest.yaml that `run` accepts. Creates `out_dir`.
absl::Status CmdGenerate(const GenerateConfig& config,
                         const std::string& out_dir);

// ---- run ---------------------------------------------------------------

struct DatasetSpec {
  std::string name;
  std::string cdr_path;
  std::string members_path;  // empty: every caller/callee is a member
  std::optional<SynthConfig> synth;  // generated in memory instead of files
  std::array<int32_t, 6> month_starts = {0, 30, 60, 90, 120, 150};
  int32_t observation_end = 179;
};

struct ExperimentManifest {
  std::string output_dir;
  uint64_t seed = 1;
  double decay_gamma = kDefaultDecayGamma;
  std::vector<Horizon> horizons = {Horizon::kShort, Horizon::kLong};
  std::vector<EdgeType> edge_types = {EdgeType::kCallCount,
                                      EdgeType::kCallDuration};
  std::vector<LearnerSpec> learners;  // default: the full grid
  LogisticOptions nlb;
  int jobs = 0;  // 0: hardware concurrency
  std::vector<DatasetSpec> datasets;
};

// Relative dataset paths are resolved against `base_dir`.
absl::StatusOr<ExperimentManifest> ParseManifest(const std::string& yaml,
                                                 const std::string& base_dir);
absl::StatusOr<ExperimentManifest> LoadManifest(const std::string& path);

// Identifies one learner on one network of one dataset.
struct RunKey {
  std::string dataset;
  Horizon horizon = Horizon::kShort;
  EdgeType edge_type = EdgeType::kCallCount;
  LearnerSpec learner;
};

// FNV-1a 64 of the canonical parameter string; independent of manifest
// order.
uint64_t RunId(const RunKey& key, double decay_gamma);
std::string RunIdHex(uint64_t run_id);
uint64_t RunSeed(uint64_t global_seed, uint64_t run_id);

// Everything the 24 learners of one network share.
struct PreparedNetwork {
  ExperimentWindows windows;
  TrainedModels models;
  absl::Status cdrn_status;
  absl::Status nlb_status;
  NodeState initial;
  // Evaluation population, in windows.evaluation_nodes order.
  std::vector<uint64_t> tie_keys;
  std::vector<std::string> evaluation_ids;
};

absl::StatusOr<PreparedNetwork> PrepareNetwork(
    std::span<const CdrRecord> filtered, const ChurnSchedule& schedule,
    const CustomerRegistry& registry, const TimelineConfig& timeline,
    double decay_gamma, const LogisticOptions& nlb);

struct LearnerOutcome {
  InferenceResult inference;
  EvaluationReport report;
  // Scores of the evaluation population.
  std::vector<double> evaluation_scores;
};

absl::StatusOr<LearnerOutcome> RunOneLearner(const PreparedNetwork& network,
                                             const LearnerSpec& learner);

struct EvaluationRow {
  std::string dataset;
  std::string horizon;
  std::string edge_type;
  std::string rc;
  std::string ci;
  EvaluationReport report;
  int iterations = 0;
};

inline constexpr char kEvaluationHeader[] =
    "dataset,horizon,edge_type,rc,ci,lift05,lift1,auc,h,population,base_rate,"
    "iters";

std::string FormatEvaluationRow(const EvaluationRow& row);
absl::StatusOr<std::vector<EvaluationRow>> ReadEvaluationCsv(
    const std::string& path);
// Dataset, horizon, edge type, then RC and CI in grid order.
void SortEvaluationRows(std::vector<EvaluationRow>& rows);

struct RunOptions {
  int jobs = 0;  // overrides the manifest when > 0
  // Restricts the grid to learners matching "rc,ci"; "*" matches anything.
  std::optional<std::pair<std::string, std::string>> filter;
};

struct RunSummary {
  size_t planned = 0;
  size_t executed = 0;
  size_t skipped = 0;
  size_t failed = 0;
};

// Output: evaluation.csv, runs.done, runs.jsonl, failures.tsv and
// scores/<dataset>/<horizon>_<edge>/<rc>_<ci>.tsv under output_dir.
absl::StatusOr<RunSummary> CmdRun(const ExperimentManifest& manifest,
                                  const RunOptions& options);

// ---- compare -----------------------------------------------------------

inline constexpr std::array<const char*, 4> kMetricNames = {"lift05", "lift1",
                                                            "auc", "h"};

struct ComparisonSummary {
  std::string scope;   // learners, rc or ci
  std::string metric;
  std::vector<std::string> methods;
  std::vector<double> average_ranks;
  size_t observations = 0;
  double friedman_statistic = 0.0;
  double friedman_p = 1.0;
  std::optional<double> critical_difference;
};

struct CiEffectSummary {
  std::string metric;
  double statistic = 0.0;
  double p_value = 1.0;
  // Pooled ascending ranks of the metric values: higher is better.
  double mean_rank_without_ci = 0.0;
  double mean_rank_with_ci = 0.0;
  size_t n_without_ci = 0;
  size_t n_with_ci = 0;
};

struct CompareReport {
  std::vector<ComparisonSummary> comparisons;
  std::vector<CiEffectSummary> ci_effect;
  std::vector<std::string> notes;

  const ComparisonSummary* Find(std::string_view scope,
                                std::string_view metric) const;
};

// Writes {learners,rc,ci}_<metric>_{ranks,nemenyi,cd}.csv, report.txt and
// report.json into `out_dir`.
absl::StatusOr<CompareReport> CmdCompare(const std::vector<EvaluationRow>& rows,
                                         const std::string& out_dir,
                                         double alpha = 0.05);

}  // namespace churnet

#endif  // CHURNET_BENCH_H_
