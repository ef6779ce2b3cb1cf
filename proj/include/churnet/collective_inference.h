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

#ifndef CHURNET_COLLECTIVE_INFERENCE_H_
#define CHURNET_COLLECTIVE_INFERENCE_H_

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "churnet/graph.h"
#include "churnet/relational_classifiers.h"

namespace churnet {

enum class CiMethod { kNone, kGibbs, kIc, kRl, kRlSa, kSpaCi };

inline constexpr std::array<CiMethod, 6> kAllCiMethods = {
    CiMethod::kNone, CiMethod::kGibbs, CiMethod::kIc,
    CiMethod::kRl,   CiMethod::kRlSa,  CiMethod::kSpaCi};

const char* CiName(CiMethod method);
absl::StatusOr<CiMethod> ParseCiMethod(std::string_view name);

struct CiConfig {
  CiMethod method = CiMethod::kNone;
  int max_iters = 100;
  int burn_in = 10;  // gibbs and spa_ci
  double early_stop_threshold = 1e-4;
  double rl_beta0 = 1.0;
  double rl_decay = 0.95;
  uint64_t rng_seed = 0;

  absl::Status Validate() const;
};

struct RcParams {
  double spa_spread = 0.5;
};

// One cell of the 4 x 6 learner grid.
struct LearnerSpec {
  RcKind rc = RcKind::kWvrn;
  CiConfig ci;
  RcParams rc_params;

  std::string name() const;  // e.g. "nlb+none"
};

// Every RC paired with every CI option (none first), sharing `ci` defaults.
std::vector<LearnerSpec> FullLearnerGrid(const CiConfig& ci,
                                         const RcParams& rc_params);

enum class StopReason { kSinglePass, kConverged, kMaxIterations };
const char* StopReasonName(StopReason reason);

struct InferenceResult {
  // p_churn per node; known nodes keep their label.
  std::vector<double> scores;
  int iterations = 0;
  StopReason stop_reason = StopReason::kSinglePass;
};

// True iff the mean absolute per-entry change is strictly below `threshold`.
absl::StatusOr<bool> EarlyStopCheck(std::span<const double> previous,
                                    std::span<const double> next,
                                    double threshold);

// Applies the classifier once to every unknown node, all reading the same
// snapshot.
InferenceResult ApplyOnce(const CallGraph& graph, const NodeState& initial,
                          const RelationalClassifier& rc);

// Samples hard labels from the classifier each iteration; tallies churn
// samples after `burn_in` iterations and returns their frequency.
InferenceResult GibbsSampling(const CallGraph& graph, const NodeState& initial,
                              const RelationalClassifier& rc,
                              const CiConfig& config);

// Thresholds each classifier output to its argmax label (ties go to
// non-churner) and returns the churn frequency over iterations.
InferenceResult IterativeClassification(const CallGraph& graph,
                                        const NodeState& initial,
                                        const RelationalClassifier& rc,
                                        const CiConfig& config);

// x <- RC(x) on soft estimates.
InferenceResult RelaxationLabeling(const CallGraph& graph,
                                   const NodeState& initial,
                                   const RelationalClassifier& rc,
                                   const CiConfig& config);

// x <- beta_k * RC(x) + (1 - beta_k) * x with beta_{k+1} = decay * beta_k.
InferenceResult AnnealedRelaxationLabeling(const CallGraph& graph,
                                           const NodeState& initial,
                                           const RelationalClassifier& rc,
                                           const CiConfig& config);

// Gibbs-style sampled initialisation for `burn_in` iterations, then soft
// relaxation until convergence.
InferenceResult SpreadingActivationInference(const CallGraph& graph,
                                             const NodeState& initial,
                                             const RelationalClassifier& rc,
                                             const CiConfig& config);

InferenceResult RunInference(const CallGraph& graph, const NodeState& initial,
                             const RelationalClassifier& rc,
                             const CiConfig& config);

// Models fitted on the pre-train window plus the training-window prior.
struct TrainedModels {
  double prior = 0.0;
  std::optional<CdrnReference> cdrn;
  std::optional<NlbModel> nlb;
};

absl::StatusOr<std::unique_ptr<RelationalClassifier>> MakeClassifier(
    const LearnerSpec& spec, const TrainedModels& models);

absl::StatusOr<InferenceResult> RunLearner(const CallGraph& graph,
                                           const NodeState& initial,
                                           const LearnerSpec& spec,
                                           const TrainedModels& models);

}  // namespace churnet

#endif  // CHURNET_COLLECTIVE_INFERENCE_H_
