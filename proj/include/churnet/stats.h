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

#ifndef CHURNET_STATS_H_
#define CHURNET_STATS_H_

#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace churnet {

// Per-observation ranks of k methods; best = 1, ties share the mean rank.
struct RankTable {
  std::vector<std::string> methods;
  std::vector<std::vector<double>> ranks;  // N rows of k entries
  std::string metric;

  size_t num_methods() const { return methods.size(); }
  size_t num_observations() const { return ranks.size(); }
  std::vector<double> AverageRanks() const;
  absl::Status Validate() const;
};

// Ranks each row of an N x k metric matrix.
absl::StatusOr<RankTable> RankMethods(
    std::vector<std::string> methods,
    const std::vector<std::vector<double>>& metric_matrix,
    bool higher_is_better, std::string metric = "");

// Mid-ranks (1-based) of `values` in ascending order.
std::vector<double> MidRanks(std::span<const double> values);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int degrees_of_freedom = 0;
};

// Tie-corrected chi-square Friedman test.
absl::StatusOr<TestResult> FriedmanTest(const RankTable& table);

inline constexpr int kMinStudentizedK = 2;
inline constexpr int kMaxStudentizedK = 30;

// Upper alpha quantile of the studentized range for infinite degrees of
// freedom, divided by sqrt(2). Only alpha = 0.05 is bundled.
absl::StatusOr<double> StudentizedRangeQ(int k, double alpha = 0.05);

absl::StatusOr<double> NemenyiCriticalDifference(int k, int n,
                                                 double alpha = 0.05);

struct NemenyiResult {
  std::vector<std::string> methods;
  std::vector<double> average_ranks;
  double critical_difference = 0.0;
  // significant[a][b] iff |R_a - R_b| >= critical_difference.
  std::vector<std::vector<bool>> significant;
};

absl::StatusOr<NemenyiResult> NemenyiTest(const RankTable& table,
                                          double alpha = 0.05);

struct KruskalWallisResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int degrees_of_freedom = 0;
  std::vector<double> mean_ranks;  // per group, in the pooled ascending order
};

// Tie-corrected Kruskal-Wallis H test over two or more groups.
absl::StatusOr<KruskalWallisResult> KruskalWallis(
    std::span<const std::vector<double>> groups);
absl::StatusOr<KruskalWallisResult> KruskalWallis(
    std::span<const double> group_a, std::span<const double> group_b);

// CSV emitters.
absl::Status WriteAverageRanksCsv(const std::string& path,
                                  const RankTable& table);
absl::Status WriteNemenyiMatrixCsv(const std::string& path,
                                   const NemenyiResult& result);
// `method,avg_rank,cd` rows, sorted by average rank.
absl::Status WriteCdDiagramCsv(const std::string& path,
                               const NemenyiResult& result);

}  // namespace churnet

#endif  // CHURNET_STATS_H_
