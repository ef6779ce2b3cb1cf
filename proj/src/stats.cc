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

#include "churnet/stats.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace churnet {
namespace {

// q_{0.05}(k) / sqrt(2) for k = 2..30, infinite degrees of freedom.
constexpr std::array<double, 29> kQ05 = {
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878,
    3.101730, 3.163684, 3.218654, 3.268004, 3.312739, 3.353618, 3.391230,
    3.426041, 3.458425, 3.488685, 3.517073, 3.543799, 3.569040, 3.592946,
    3.615646, 3.637252, 3.657861, 3.677556, 3.696413, 3.714498, 3.731869,
    3.748578};

double ChiSquareUpperTail(double statistic, int dof) {
  if (!(statistic > 0.0)) return 1.0;
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

// Sum of t^3 - t over groups of equal values.
double TieTerm(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double term = 0.0;
  for (size_t begin = 0; begin < values.size();) {
    size_t end = begin;
    while (end < values.size() && values[end] == values[begin]) ++end;
    const double t = static_cast<double>(end - begin);
    term += t * t * t - t;
    begin = end;
  }
  return term;
}

absl::Status WriteFile(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  out << body;
  out.close();
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

std::string Num(double v) { return absl::StrFormat("%.12g", v); }

}  // namespace

std::vector<double> MidRanks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (size_t begin = 0; begin < n;) {
    size_t end = begin;
    while (end < n && values[order[end]] == values[order[begin]]) ++end;
    const double mid = 0.5 * static_cast<double>(begin + 1 + end);
    for (size_t k = begin; k < end; ++k) ranks[order[k]] = mid;
    begin = end;
  }
  return ranks;
}

std::vector<double> RankTable::AverageRanks() const {
  std::vector<double> avg(methods.size(), 0.0);
  for (const auto& row : ranks) {
    for (size_t j = 0; j < row.size() && j < avg.size(); ++j) avg[j] += row[j];
  }
  for (double& a : avg) a /= std::max<size_t>(1, ranks.size());
  return avg;
}

absl::Status RankTable::Validate() const {
  const size_t k = methods.size();
  if (k < 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("need at least 2 methods, got ", k));
  }
  if (ranks.size() < 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("need at least 2 observations, got ", ranks.size()));
  }
  const double expected = k * (k + 1) / 2.0;
  for (size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i].size() != k) {
      return absl::InvalidArgumentError(
          absl::StrCat("row ", i, " has ", ranks[i].size(), " ranks, want ", k));
    }
    const double sum = std::accumulate(ranks[i].begin(), ranks[i].end(), 0.0);
    if (std::abs(sum - expected) > 1e-9) {
      return absl::InvalidArgumentError(
          absl::StrCat("row ", i, " ranks sum to ", sum, ", want ", expected));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<RankTable> RankMethods(
    std::vector<std::string> methods,
    const std::vector<std::vector<double>>& metric_matrix,
    bool higher_is_better, std::string metric) {
  RankTable table;
  table.methods = std::move(methods);
  table.metric = std::move(metric);
  for (size_t i = 0; i < metric_matrix.size(); ++i) {
    const auto& row = metric_matrix[i];
    if (row.size() != table.methods.size()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "row ", i, " has ", row.size(), " values for ",
          table.methods.size(), " methods"));
    }
    std::vector<double> keyed(row.size());
    for (size_t j = 0; j < row.size(); ++j) {
      if (std::isnan(row[j])) {
        return absl::InvalidArgumentError(
            absl::StrCat("missing value in row ", i, ", method ",
                         table.methods[j]));
      }
      keyed[j] = higher_is_better ? -row[j] : row[j];
    }
    table.ranks.push_back(MidRanks(keyed));
  }
  if (absl::Status s = table.Validate(); !s.ok()) return s;
  return table;
}

absl::StatusOr<TestResult> FriedmanTest(const RankTable& table) {
  if (absl::Status s = table.Validate(); !s.ok()) return s;
  const double k = static_cast<double>(table.num_methods());
  const double n = static_cast<double>(table.num_observations());
  std::vector<double> rank_sums(table.num_methods(), 0.0);
  double ties = 0.0;
  for (const auto& row : table.ranks) {
    for (size_t j = 0; j < row.size(); ++j) rank_sums[j] += row[j];
    ties += TieTerm(row);
  }
  double sum_sq = 0.0;
  for (double r : rank_sums) sum_sq += r * r;
  const double raw = 12.0 / (n * k * (k + 1)) * sum_sq - 3.0 * n * (k + 1);
  const double correction = 1.0 - ties / (n * k * (k * k - 1));
  TestResult result;
  result.degrees_of_freedom = static_cast<int>(k) - 1;
  // Every row fully tied: no evidence against equal ranks.
  result.statistic = correction > 1e-12 ? std::max(0.0, raw / correction) : 0.0;
  result.p_value =
      ChiSquareUpperTail(result.statistic, result.degrees_of_freedom);
  return result;
}

absl::StatusOr<double> StudentizedRangeQ(int k, double alpha) {
  if (std::abs(alpha - 0.05) > 1e-12) {
    return absl::InvalidArgumentError(
        absl::StrCat("only alpha = 0.05 is tabulated, got ", alpha));
  }
  if (k < kMinStudentizedK || k > kMaxStudentizedK) {
    return absl::InvalidArgumentError(absl::StrCat(
        "k = ", k, " outside the tabulated range ", kMinStudentizedK, "..",
        kMaxStudentizedK));
  }
  return kQ05[k - kMinStudentizedK];
}

absl::StatusOr<double> NemenyiCriticalDifference(int k, int n, double alpha) {
  if (n < 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("need at least 2 observations, got ", n));
  }
  absl::StatusOr<double> q = StudentizedRangeQ(k, alpha);
  if (!q.ok()) return q.status();
  return *q * std::sqrt(k * (k + 1.0) / (6.0 * n));
}

absl::StatusOr<NemenyiResult> NemenyiTest(const RankTable& table,
                                          double alpha) {
  if (absl::Status s = table.Validate(); !s.ok()) return s;
  absl::StatusOr<double> cd =
      NemenyiCriticalDifference(static_cast<int>(table.num_methods()),
                                static_cast<int>(table.num_observations()),
                                alpha);
  if (!cd.ok()) return cd.status();
  NemenyiResult result;
  result.methods = table.methods;
  result.average_ranks = table.AverageRanks();
  result.critical_difference = *cd;
  const size_t k = table.num_methods();
  result.significant.assign(k, std::vector<bool>(k, false));
  for (size_t a = 0; a < k; ++a) {
    for (size_t b = 0; b < k; ++b) {
      result.significant[a][b] =
          a != b && std::abs(result.average_ranks[a] -
                             result.average_ranks[b]) >= *cd;
    }
  }
  return result;
}

absl::StatusOr<KruskalWallisResult> KruskalWallis(
    std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) {
    return absl::InvalidArgumentError("need at least 2 groups");
  }
  std::vector<double> pooled;
  for (size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) {
      return absl::InvalidArgumentError(absl::StrCat("group ", g, " is empty"));
    }
    for (double v : groups[g]) {
      if (std::isnan(v)) return absl::InvalidArgumentError("NaN value");
      pooled.push_back(v);
    }
  }
  const std::vector<double> ranks = MidRanks(pooled);
  const double n = static_cast<double>(pooled.size());
  KruskalWallisResult result;
  result.degrees_of_freedom = static_cast<int>(groups.size()) - 1;
  double weighted = 0.0;
  size_t offset = 0;
  for (const auto& group : groups) {
    double rank_sum = 0.0;
    for (size_t i = 0; i < group.size(); ++i) rank_sum += ranks[offset + i];
    offset += group.size();
    weighted += rank_sum * rank_sum / group.size();
    result.mean_ranks.push_back(rank_sum / group.size());
  }
  const double raw = 12.0 / (n * (n + 1)) * weighted - 3.0 * (n + 1);
  const double correction = 1.0 - TieTerm(pooled) / (n * n * n - n);
  result.statistic =
      correction > 1e-12 ? std::max(0.0, raw / correction) : 0.0;
  result.p_value =
      ChiSquareUpperTail(result.statistic, result.degrees_of_freedom);
  return result;
}

absl::StatusOr<KruskalWallisResult> KruskalWallis(
    std::span<const double> group_a, std::span<const double> group_b) {
  const std::vector<std::vector<double>> groups = {
      {group_a.begin(), group_a.end()}, {group_b.begin(), group_b.end()}};
  return KruskalWallis(groups);
}

absl::Status WriteAverageRanksCsv(const std::string& path,
                                  const RankTable& table) {
  const std::vector<double> avg = table.AverageRanks();
  std::string body = "method,avg_rank\n";
  for (size_t j = 0; j < table.methods.size(); ++j) {
    absl::StrAppend(&body, table.methods[j], ",", Num(avg[j]), "\n");
  }
  return WriteFile(path, body);
}

absl::Status WriteNemenyiMatrixCsv(const std::string& path,
                                   const NemenyiResult& result) {
  std::string body = "method";
  for (const auto& m : result.methods) absl::StrAppend(&body, ",", m);
  body += "\n";
  for (size_t a = 0; a < result.methods.size(); ++a) {
    body += result.methods[a];
    for (size_t b = 0; b < result.methods.size(); ++b) {
      body += result.significant[a][b] ? ",1" : ",0";
    }
    body += "\n";
  }
  return WriteFile(path, body);
}

absl::Status WriteCdDiagramCsv(const std::string& path,
                               const NemenyiResult& result) {
  std::vector<size_t> order(result.methods.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return result.average_ranks[a] < result.average_ranks[b];
  });
  std::string body = "method,avg_rank,cd\n";
  for (size_t j : order) {
    absl::StrAppend(&body, result.methods[j], ",",
                    Num(result.average_ranks[j]), ",",
                    Num(result.critical_difference), "\n");
  }
  return WriteFile(path, body);
}

}  // namespace churnet
