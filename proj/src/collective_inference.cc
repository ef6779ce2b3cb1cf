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

#include "churnet/collective_inference.h"

#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"
#include "churnet/random.h"

namespace churnet {
namespace {

// Rescores every unknown node of `next` from the frozen `current` snapshot.
template <typename Update>
void Sweep(const CallGraph& graph, const NodeState& current, NodeState& next,
           const RelationalClassifier& rc, Update&& update) {
  for (NodeIndex i = 0; i < current.size(); ++i) {
    if (current.is_known(i)) continue;
    next.SetEstimate(i, update(i, rc.Score(graph, current, i).p_churn));
  }
}

bool Converged(const NodeState& before, const NodeState& after,
               double threshold) {
  absl::StatusOr<bool> stop =
      EarlyStopCheck(before.p_churn(), after.p_churn(), threshold);
  return stop.ok() && *stop;
}

double SampleLabel(uint64_t seed, int iteration, NodeIndex i, double p_churn) {
  return CounterUniform(seed, static_cast<uint64_t>(iteration), i) < p_churn
             ? 1.0
             : 0.0;
}

// Frequency of churn over `count` tallied iterations; known nodes keep their
// label.
std::vector<double> Frequencies(const NodeState& initial,
                                const std::vector<uint32_t>& tally,
                                int count) {
  std::vector<double> out(initial.size());
  for (NodeIndex i = 0; i < initial.size(); ++i) {
    out[i] = initial.is_known(i) ? initial.p_churn(i)
                                 : static_cast<double>(tally[i]) / count;
  }
  return out;
}

}  // namespace

const char* CiName(CiMethod method) {
  switch (method) {
    case CiMethod::kNone:
      return "none";
    case CiMethod::kGibbs:
      return "gibbs";
    case CiMethod::kIc:
      return "ic";
    case CiMethod::kRl:
      return "rl";
    case CiMethod::kRlSa:
      return "rl_sa";
    case CiMethod::kSpaCi:
      return "spa_ci";
  }
  return "?";
}

absl::StatusOr<CiMethod> ParseCiMethod(std::string_view name) {
  for (CiMethod m : kAllCiMethods) {
    if (name == CiName(m)) return m;
  }
  if (name == "gs") return CiMethod::kGibbs;
  if (name == "spa") return CiMethod::kSpaCi;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown collective inference method '", std::string(name), "'"));
}

absl::Status CiConfig::Validate() const {
  if (max_iters < 1) {
    return absl::InvalidArgumentError("max_iters must be positive");
  }
  if (burn_in < 0 || burn_in >= max_iters) {
    return absl::InvalidArgumentError(
        absl::StrCat("burn_in must lie in [0, max_iters), got ", burn_in));
  }
  if (!(early_stop_threshold > 0.0) || !std::isfinite(early_stop_threshold)) {
    return absl::InvalidArgumentError("early_stop_threshold must be positive");
  }
  if (!(rl_beta0 >= 0.0 && rl_beta0 <= 1.0)) {
    return absl::InvalidArgumentError("rl_beta0 must lie in [0, 1]");
  }
  if (!(rl_decay > 0.0 && rl_decay <= 1.0)) {
    return absl::InvalidArgumentError("rl_decay must lie in (0, 1]");
  }
  return absl::OkStatus();
}

std::string LearnerSpec::name() const {
  return absl::StrCat(RcName(rc), "+", CiName(ci.method));
}

std::vector<LearnerSpec> FullLearnerGrid(const CiConfig& ci,
                                         const RcParams& rc_params) {
  std::vector<LearnerSpec> grid;
  for (RcKind rc : kAllRcKinds) {
    for (CiMethod method : kAllCiMethods) {
      LearnerSpec spec{rc, ci, rc_params};
      spec.ci.method = method;
      grid.push_back(spec);
    }
  }
  return grid;
}

const char* StopReasonName(StopReason reason) {
  switch (reason) {
    case StopReason::kSinglePass:
      return "single_pass";
    case StopReason::kConverged:
      return "converged";
    case StopReason::kMaxIterations:
      return "max_iterations";
  }
  return "?";
}

absl::StatusOr<bool> EarlyStopCheck(std::span<const double> previous,
                                    std::span<const double> next,
                                    double threshold) {
  if (previous.size() != next.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("score vectors differ in length: ", previous.size(),
                     " vs ", next.size()));
  }
  if (previous.empty()) return true;
  double total = 0.0;
  for (size_t i = 0; i < previous.size(); ++i) {
    total += std::abs(next[i] - previous[i]);
  }
  return total / static_cast<double>(previous.size()) < threshold;
}

InferenceResult ApplyOnce(const CallGraph& graph, const NodeState& initial,
                          const RelationalClassifier& rc) {
  NodeState next = initial;
  Sweep(graph, initial, next, rc, [](NodeIndex, double p) { return p; });
  const auto scores = next.p_churn();
  return {{scores.begin(), scores.end()}, 1, StopReason::kSinglePass};
}

InferenceResult GibbsSampling(const CallGraph& graph, const NodeState& initial,
                              const RelationalClassifier& rc,
                              const CiConfig& config) {
  NodeState current = initial;
  NodeState next = initial;
  std::vector<uint32_t> tally(initial.size(), 0);
  std::vector<double> previous_average;
  InferenceResult result;
  result.stop_reason = StopReason::kMaxIterations;
  int counted = 0;
  int iter = 0;
  while (iter < config.max_iters) {
    Sweep(graph, current, next, rc, [&](NodeIndex i, double p) {
      return SampleLabel(config.rng_seed, iter, i, p);
    });
    swap(current, next);
    ++iter;
    if (iter <= config.burn_in) continue;
    for (NodeIndex i = 0; i < current.size(); ++i) {
      tally[i] += current.p_churn(i) > 0.5 ? 1 : 0;
    }
    ++counted;
    std::vector<double> average = Frequencies(initial, tally, counted);
    if (counted >= 2 && *EarlyStopCheck(previous_average, average,
                                        config.early_stop_threshold)) {
      result.stop_reason = StopReason::kConverged;
      previous_average = std::move(average);
      break;
    }
    previous_average = std::move(average);
  }
  result.scores = std::move(previous_average);
  result.iterations = iter;
  return result;
}

InferenceResult IterativeClassification(const CallGraph& graph,
                                        const NodeState& initial,
                                        const RelationalClassifier& rc,
                                        const CiConfig& config) {
  NodeState current = initial;
  NodeState next = initial;
  std::vector<uint32_t> tally(initial.size(), 0);
  InferenceResult result;
  result.stop_reason = StopReason::kMaxIterations;
  int iter = 0;
  while (iter < config.max_iters) {
    Sweep(graph, current, next, rc,
          [](NodeIndex, double p) { return p > 0.5 ? 1.0 : 0.0; });
    ++iter;
    for (NodeIndex i = 0; i < next.size(); ++i) {
      tally[i] += next.p_churn(i) > 0.5 ? 1 : 0;
    }
    const bool stop = Converged(current, next, config.early_stop_threshold);
    swap(current, next);
    if (stop) {
      result.stop_reason = StopReason::kConverged;
      break;
    }
  }
  result.scores = Frequencies(initial, tally, iter);
  result.iterations = iter;
  return result;
}

namespace {

// Soft relaxation shared by RL, RL-SA and the second phase of SPA-CI.
// `first_iteration` counts iterations already spent (SPA-CI burn-in).
InferenceResult Relax(const CallGraph& graph, NodeState current,
                      const RelationalClassifier& rc, const CiConfig& config,
                      double beta0, double decay, int first_iteration) {
  NodeState next = current;
  InferenceResult result;
  result.stop_reason = StopReason::kMaxIterations;
  double beta = beta0;
  int iter = first_iteration;
  while (iter < config.max_iters) {
    Sweep(graph, current, next, rc, [&](NodeIndex i, double p) {
      return beta * p + (1.0 - beta) * current.p_churn(i);
    });
    ++iter;
    beta *= decay;
    const bool stop = Converged(current, next, config.early_stop_threshold);
    swap(current, next);
    if (stop) {
      result.stop_reason = StopReason::kConverged;
      break;
    }
  }
  const auto scores = current.p_churn();
  result.scores.assign(scores.begin(), scores.end());
  result.iterations = iter;
  return result;
}

}  // namespace

InferenceResult RelaxationLabeling(const CallGraph& graph,
                                   const NodeState& initial,
                                   const RelationalClassifier& rc,
                                   const CiConfig& config) {
  return Relax(graph, initial, rc, config, 1.0, 1.0, 0);
}

InferenceResult AnnealedRelaxationLabeling(const CallGraph& graph,
                                           const NodeState& initial,
                                           const RelationalClassifier& rc,
                                           const CiConfig& config) {
  return Relax(graph, initial, rc, config, config.rl_beta0, config.rl_decay,
               0);
}

InferenceResult SpreadingActivationInference(const CallGraph& graph,
                                             const NodeState& initial,
                                             const RelationalClassifier& rc,
                                             const CiConfig& config) {
  NodeState current = initial;
  NodeState next = initial;
  int iter = 0;
  for (; iter < config.burn_in; ++iter) {
    Sweep(graph, current, next, rc, [&](NodeIndex i, double p) {
      return SampleLabel(config.rng_seed, iter, i, p);
    });
    swap(current, next);
  }
  return Relax(graph, std::move(current), rc, config, 1.0, 1.0, iter);
}

InferenceResult RunInference(const CallGraph& graph, const NodeState& initial,
                             const RelationalClassifier& rc,
                             const CiConfig& config) {
  switch (config.method) {
    case CiMethod::kNone:
      return ApplyOnce(graph, initial, rc);
    case CiMethod::kGibbs:
      return GibbsSampling(graph, initial, rc, config);
    case CiMethod::kIc:
      return IterativeClassification(graph, initial, rc, config);
    case CiMethod::kRl:
      return RelaxationLabeling(graph, initial, rc, config);
    case CiMethod::kRlSa:
      return AnnealedRelaxationLabeling(graph, initial, rc, config);
    case CiMethod::kSpaCi:
      return SpreadingActivationInference(graph, initial, rc, config);
  }
  return ApplyOnce(graph, initial, rc);
}

absl::StatusOr<std::unique_ptr<RelationalClassifier>> MakeClassifier(
    const LearnerSpec& spec, const TrainedModels& models) {
  switch (spec.rc) {
    case RcKind::kWvrn:
      return std::make_unique<WvrnClassifier>(models.prior);
    case RcKind::kCdrn:
      if (!models.cdrn) {
        return absl::FailedPreconditionError(
            "cdrn needs a reference trained on the pre-train window");
      }
      return std::make_unique<CdrnClassifier>(*models.cdrn, models.prior);
    case RcKind::kNlb:
      if (!models.nlb) {
        return absl::FailedPreconditionError(
            "nlb needs a model trained on the pre-train window");
      }
      return std::make_unique<NlbClassifier>(*models.nlb);
    case RcKind::kSpaRc:
      if (!(spec.rc_params.spa_spread >= 0.0 &&
            spec.rc_params.spa_spread < 1.0)) {
        return absl::InvalidArgumentError(absl::StrCat(
            "spa spread factor must lie in [0, 1), got ",
            spec.rc_params.spa_spread));
      }
      return std::make_unique<SpaRcClassifier>(spec.rc_params.spa_spread);
  }
  return absl::InvalidArgumentError("unknown relational classifier");
}

absl::StatusOr<InferenceResult> RunLearner(const CallGraph& graph,
                                           const NodeState& initial,
                                           const LearnerSpec& spec,
                                           const TrainedModels& models) {
  if (absl::Status s = spec.ci.Validate(); !s.ok()) return s;
  if (initial.size() != graph.num_nodes()) {
    return absl::InvalidArgumentError(
        absl::StrCat("node state has ", initial.size(), " entries for a graph ",
                     "with ", graph.num_nodes(), " nodes"));
  }
  absl::StatusOr<std::unique_ptr<RelationalClassifier>> rc =
      MakeClassifier(spec, models);
  if (!rc.ok()) return rc.status();
  return RunInference(graph, initial, **rc, spec.ci);
}

}  // namespace churnet
