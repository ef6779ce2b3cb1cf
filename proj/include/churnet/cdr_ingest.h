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

#ifndef CHURNET_CDR_INGEST_H_
#define CHURNET_CDR_INGEST_H_

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/container/flat_hash_map.h"
#include "absl/container/flat_hash_set.h"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "churnet/customer_registry.h"
#include "churnet/graph.h"

namespace churnet {

// Calls shorter than this carry no relationship signal.
inline constexpr int32_t kMinCallSeconds = 4;
// Days of silence that define churn.
inline constexpr int32_t kChurnSilenceDays = 30;

struct CdrRecord {
  CustomerId caller;
  CustomerId callee;
  int32_t start_day = 0;
  int32_t duration_s = 0;

  friend bool operator==(const CdrRecord&, const CdrRecord&) = default;
};

enum class ChurnStatus : uint8_t { kNonChurner = 0, kChurner = 1 };

struct ChurnLabel {
  CustomerId customer;
  ChurnStatus status = ChurnStatus::kNonChurner;
  std::optional<int32_t> churn_day;  // set iff churner

  friend bool operator==(const ChurnLabel&, const ChurnLabel&) = default;
};

using CustomerSet = absl::flat_hash_set<CustomerId>;
using ChurnLabels = absl::flat_hash_map<CustomerId, ChurnLabel>;

struct ReadStats {
  size_t lines = 0;
  size_t records = 0;
  size_t malformed = 0;
  bool header_skipped = false;
};

// Reads `caller<TAB>callee<TAB>start_day<TAB>duration_s` rows. A first line
// whose third field is not numeric is treated as a header. Malformed rows
// are counted in `stats` and skipped.
absl::Status ReadCdr(std::istream& in, CustomerRegistry& registry,
                     std::vector<CdrRecord>* out, ReadStats* stats);

// Same, from a file; gzip-compressed files are decompressed transparently.
absl::StatusOr<std::vector<CdrRecord>> ReadCdrFile(const std::string& path,
                                                   CustomerRegistry& registry,
                                                   ReadStats* stats);

absl::Status WriteCdrFile(std::span<const CdrRecord> records,
                          const CustomerRegistry& registry,
                          const std::string& path, bool gzip);

// One external id per line.
absl::StatusOr<CustomerSet> ReadMembersFile(const std::string& path,
                                            CustomerRegistry& registry);

struct FilterStats {
  size_t kept = 0;
  size_t dropped_short = 0;
  size_t dropped_off_network = 0;
};

// Keeps calls of at least kMinCallSeconds between two network members, in
// input order. A null `members` admits every customer.
std::vector<CdrRecord> FilterRecords(std::span<const CdrRecord> records,
                                     const CustomerSet* members,
                                     FilterStats* stats = nullptr);

// First verified churn day per customer: the day after the last activity
// before the first silence of at least kChurnSilenceDays that ends no later
// than `observation_end` (inclusive). Activity counts both call directions.
class ChurnSchedule {
 public:
  // `population` restricts labelling to those customers; null labels every
  // customer seen in `records`.
  static ChurnSchedule Compute(std::span<const CdrRecord> records,
                               int32_t observation_end,
                               const CustomerSet* population);

  // Label as of `activity_window_end`: churner iff the churn day is on or
  // before that day.
  ChurnLabels LabelsAt(int32_t activity_window_end) const;

  // Customers from `population` with no activity at all.
  const std::vector<CustomerId>& inactive() const { return inactive_; }

  // Returns nullopt for unseen customers or customers without a churn day.
  std::optional<int32_t> churn_day(CustomerId id) const;
  bool active(CustomerId id) const;

 private:
  absl::flat_hash_map<CustomerId, std::optional<int32_t>> first_churn_day_;
  std::vector<CustomerId> inactive_;
};

struct LabelReport {
  ChurnLabels labels;
  std::vector<CustomerId> excluded_inactive;
};

LabelReport LabelChurn(std::span<const CdrRecord> records,
                       int32_t activity_window_end, int32_t observation_end,
                       const CustomerSet* population = nullptr);

// Observation end defaults to the last day present in `records`.
LabelReport LabelChurn(std::span<const CdrRecord> records,
                       int32_t activity_window_end);

absl::Status WriteLabelsFile(const ChurnLabels& labels,
                             const CustomerRegistry& registry,
                             const std::string& path);

enum class Horizon { kShort, kLong };
enum class EdgeType { kCallCount, kCallDuration };

const char* HorizonName(Horizon h);
const char* EdgeTypeName(EdgeType e);
absl::StatusOr<Horizon> ParseHorizon(std::string_view s);
absl::StatusOr<EdgeType> ParseEdgeType(std::string_view s);

// Half-open day range [begin, end).
struct DayRange {
  int32_t begin = 0;
  int32_t end = 0;
  int32_t last_day() const { return end - 1; }
  bool contains(int32_t day) const { return day >= begin && day < end; }
};

struct TimelineConfig {
  // First day of M1..M5 and of the label-only sixth month.
  std::array<int32_t, 6> month_starts = {0, 30, 60, 90, 120, 150};
  // Last observed day (inclusive); labels for M5 need 30 days past M5.
  int32_t observation_end = 179;
  Horizon horizon = Horizon::kShort;
  EdgeType edge_type = EdgeType::kCallCount;

  // Calendar 30-day blocks from `first_day`.
  static TimelineConfig CalendarBlocks(int32_t first_day, Horizon horizon,
                                       EdgeType edge_type);

  absl::Status Validate() const;

  // Short: M3 / M4. Long: M1-M3 / M2-M4. Prediction is M5 in both.
  DayRange PretrainWindow() const;
  DayRange TrainWindow() const;
  DayRange PredictWindow() const;
};

struct ExperimentWindows {
  CallGraph pretrain_graph;
  CallGraph train_graph;
  // Per pretrain_graph node: status at the end of the pre-train window.
  std::vector<ChurnStatus> pretrain_labels;
  // Per train_graph node: status at the end of the train window.
  std::vector<ChurnStatus> train_labels;
  // Train-graph nodes that had not churned by the end of the train window,
  // and whether each churns during the prediction month.
  std::vector<NodeIndex> evaluation_nodes;
  std::vector<uint8_t> predict_labels;
};

// Builds both graphs from `records` (already filtered) and derives labels
// from `schedule`. The decay origin is set to each window's last day; only
// `decay.gamma` is taken from the argument.
absl::StatusOr<ExperimentWindows> BuildWindows(
    std::span<const CdrRecord> records, const ChurnSchedule& schedule,
    const TimelineConfig& config, const DecayConfig& decay);

// Convenience overload that computes the schedule from `records`.
absl::StatusOr<ExperimentWindows> BuildWindows(
    std::span<const CdrRecord> records, const TimelineConfig& config,
    const DecayConfig& decay);

}  // namespace churnet

#endif  // CHURNET_CDR_INGEST_H_
