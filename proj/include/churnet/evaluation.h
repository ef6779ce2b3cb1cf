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

#ifndef CHURNET_EVALUATION_H_
#define CHURNET_EVALUATION_H_

#include <cstdint>
#include <span>
#include <string>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace churnet {

// Churn rate among the ceil(fraction * n) highest-scored customers divided by
// the population churn rate. Ties at the cutoff are broken by ascending
// `tie_keys` (customer order); an empty span uses the position in `scores`.
absl::StatusOr<double> Lift(std::span<const double> scores,
                            std::span<const uint8_t> labels, double fraction,
                            std::span<const uint64_t> tie_keys = {});

// Probability that a random churner outranks a random non-churner, ties
// counting one half.
absl::StatusOr<double> Auc(std::span<const double> scores,
                           std::span<const uint8_t> labels);

// Beta(alpha, beta) distribution over the normalised cost of misclassifying
// a non-churner.
struct SeverityDistribution {
  double alpha = 2.0;
  double beta = 2.0;
};

// Hand's H-measure: one minus the expected minimum misclassification loss
// over the severity distribution, relative to the loss of the best
// classifier that ignores the scores.
absl::StatusOr<double> HMeasure(std::span<const double> scores,
                                std::span<const uint8_t> labels,
                                SeverityDistribution severity = {});

struct EvaluationReport {
  double lift_05 = 0.0;
  double lift_1 = 0.0;
  double auc = 0.0;
  double h_measure = 0.0;
  size_t population = 0;
  double base_rate = 0.0;
};

absl::StatusOr<EvaluationReport> Evaluate(
    std::span<const double> scores, std::span<const uint8_t> labels,
    std::span<const uint64_t> tie_keys = {},
    SeverityDistribution severity = {});

}  // namespace churnet

#endif  // CHURNET_EVALUATION_H_
