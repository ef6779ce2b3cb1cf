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

#ifndef CHURNET_SYNTHGEN_H_
#define CHURNET_SYNTHGEN_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "churnet/cdr_ingest.h"
#include "churnet/customer_registry.h"

namespace churnet {

inline constexpr int32_t kSynthDaysPerMonth = 30;

struct SynthConfig {
  int64_t n_customers = 10000;
  double target_churn_rate = 0.02;
  double target_sparsity = 3e-4;
  // Contacts of a churner churn with hazard multiplied by
  // 1 + 10 * homophily_strength in every later month.
  double homophily_strength = 0.5;
  int32_t months = 6;
  uint64_t rng_seed = 1;
  double calls_per_edge_per_month = 2.0;
  double duration_mean_s = 120.0;
  // Calls from each customer to numbers outside the network.
  double offnet_calls_per_month = 8.0;

  absl::Status Validate() const;
};

struct SynthDataset {
  CustomerRegistry registry;
  // Members are registered first, so member i has CustomerId{i}.
  std::vector<CustomerId> members;
  // Scheduled churn day per member; nullopt for customers who stay.
  std::vector<std::optional<int32_t>> churn_day;
  // Sorted by (day, caller, callee, duration).
  std::vector<CdrRecord> records;

  size_t num_contacts = 0;
  double realized_sparsity = 0.0;
  // Share of customers alive at the start of the fifth month who churn in it.
  double realized_churn_rate = 0.0;
  double base_hazard = 0.0;
};

absl::StatusOr<SynthDataset> Generate(const SynthConfig& config);

// `customer_id<TAB>churn_day` for every scheduled churner.
absl::Status WriteGroundTruth(const SynthDataset& data,
                              const std::string& path);
// One member id per line.
absl::Status WriteMembers(const SynthDataset& data, const std::string& path);

}  // namespace churnet

#endif  // CHURNET_SYNTHGEN_H_
