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

// churnet: generate synthetic CDR data, run the relational learner grid and
// compare learners statistically.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "churnet/bench.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;

// Flag, then manifest/config value, then $CHURNET_OUT.
std::optional<std::string> OutputDir(const std::string& flag,
                                     const std::string& configured) {
  if (!flag.empty()) return flag;
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv(churnet::kOutputEnvVar);
      env != nullptr && *env != '\0') {
    return std::string(env);
  }
  return std::nullopt;
}

int Fail(const absl::Status& status) {
  std::cerr << "churnet: " << status << "\n";
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relational learner benchmark for churn prediction"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_flag;
  CLI::App* generate =
      app.add_subcommand("generate", "write synthetic CDR datasets");
  generate->add_option("--config", config_path, "dataset config (YAML)")
      ->required()
      ->check(CLI::ExistingFile);
  generate->add_option("--out", out_flag, "output directory");

  std::string manifest_path;
  int jobs = 0;
  std::string filter;
  std::optional<uint64_t> seed;
  std::optional<double> gamma;
  CLI::App* run = app.add_subcommand("run", "run the learner grid");
  run->add_option("--manifest", manifest_path, "experiment manifest (YAML)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_flag, "output directory");
  run->add_option("--jobs", jobs, "worker threads (default: all cores)")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--filter", filter, "restrict to RC,CI (* matches any)");
  run->add_option("--seed", seed, "global seed");
  run->add_option("--gamma", gamma, "decay rate per day");

  std::string eval_path;
  double alpha = 0.05;
  CLI::App* compare =
      app.add_subcommand("compare", "rank learners and run the tests");
  compare->add_option("--eval", eval_path, "evaluation.csv from run")
      ->required()
      ->check(CLI::ExistingFile);
  compare->add_option("--out", out_flag, "output directory");
  compare->add_option("--alpha", alpha, "significance level");

  CLI11_PARSE(app, argc, argv);

  if (generate->parsed()) {
    absl::StatusOr<churnet::GenerateConfig> config =
        churnet::LoadGenerateConfig(config_path);
    if (!config.ok()) return Fail(config.status());
    const std::optional<std::string> out = OutputDir(out_flag, "");
    if (!out) return Fail(absl::InvalidArgumentError("--out is required"));
    if (absl::Status s = churnet::CmdGenerate(*config, *out); !s.ok()) {
      return Fail(s);
    }
    std::cout << "wrote " << config->datasets.size() << " datasets to " << *out
              << "\n";
    return kExitOk;
  }

  if (run->parsed()) {
    absl::StatusOr<churnet::ExperimentManifest> manifest =
        churnet::LoadManifest(manifest_path);
    if (!manifest.ok()) return Fail(manifest.status());
    const std::optional<std::string> out =
        OutputDir(out_flag, manifest->output_dir);
    if (!out) return Fail(absl::InvalidArgumentError("--out is required"));
    manifest->output_dir = *out;
    if (seed) manifest->seed = *seed;
    if (gamma) {
      if (!(*gamma >= 0.0)) {
        return Fail(absl::InvalidArgumentError("--gamma must be >= 0"));
      }
      manifest->decay_gamma = *gamma;
    }
    churnet::RunOptions options;
    options.jobs = jobs;
    if (!filter.empty()) {
      const size_t comma = filter.find(',');
      if (comma == std::string::npos) {
        return Fail(absl::InvalidArgumentError("--filter expects RC,CI"));
      }
      options.filter.emplace(filter.substr(0, comma), filter.substr(comma + 1));
    }
    absl::StatusOr<churnet::RunSummary> summary =
        churnet::CmdRun(*manifest, options);
    if (!summary.ok()) return Fail(summary.status());
    std::cout << "planned " << summary->planned << ", executed "
              << summary->executed << ", skipped " << summary->skipped
              << ", failed " << summary->failed << "\n";
    return summary->failed > 0 ? kExitPartial : kExitOk;
  }

  absl::StatusOr<std::vector<churnet::EvaluationRow>> rows =
      churnet::ReadEvaluationCsv(eval_path);
  if (!rows.ok()) return Fail(rows.status());
  const std::optional<std::string> out = OutputDir(out_flag, "");
  if (!out) return Fail(absl::InvalidArgumentError("--out is required"));
  absl::StatusOr<churnet::CompareReport> report =
      churnet::CmdCompare(*rows, *out, alpha);
  if (!report.ok()) return Fail(report.status());
  std::cout << "wrote comparison for " << report->comparisons.size()
            << " tables to " << *out << "\n";
  return kExitOk;
}
