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

#ifndef CHURNET_RELATIONAL_CLASSIFIERS_H_
#define CHURNET_RELATIONAL_CLASSIFIERS_H_

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "churnet/cdr_ingest.h"
#include "churnet/graph.h"

namespace churnet {

// Binary class distribution (non-churner, churner).
struct ClassVector {
  double p_nonchurn = 1.0;
  double p_churn = 0.0;

  static ClassVector FromChurn(double p_churn) {
    return {1.0 - p_churn, p_churn};
  }
};

// Per-node class knowledge. Known nodes carry a hard label (estimate 0 or 1
// that never changes); unknown nodes carry the current churn estimate.
class NodeState {
 public:
  NodeState() = default;

  // Every node unknown, estimated at `prior`.
  static NodeState Unknown(size_t n, double prior);
  // Every node known with the given labels.
  static NodeState FromLabels(std::span<const ChurnStatus> labels);

  size_t size() const { return p_churn_.size(); }
  bool is_known(NodeIndex i) const { return known_[i] != 0; }
  double p_churn(NodeIndex i) const { return p_churn_[i]; }
  ClassVector vector(NodeIndex i) const {
    return ClassVector::FromChurn(p_churn_[i]);
  }
  std::span<const double> p_churn() const { return p_churn_; }

  void SetKnown(NodeIndex i, ChurnStatus label);
  // No-op on known nodes.
  void SetEstimate(NodeIndex i, double p_churn);

  size_t num_known() const;
  bool fully_known() const { return num_known() == size(); }

  friend void swap(NodeState& a, NodeState& b) noexcept {
    a.p_churn_.swap(b.p_churn_);
    a.known_.swap(b.known_);
  }

 private:
  std::vector<double> p_churn_;
  std::vector<uint8_t> known_;
};

// --- weighted-vote relational neighbor -------------------------------------

// Weighted mean of neighbor churn estimates; `prior` for isolated nodes.
ClassVector WvrnScore(const CallGraph& graph, const NodeState& state,
                      NodeIndex i, double prior);

// --- class-distribution relational neighbor --------------------------------

struct CdrnReference {
  ClassVector ref_churn;
  ClassVector ref_nonchurn;
};

// Weight-normalized class distribution over the linked nodes of `i`.
// Returns false for isolated nodes.
bool NeighborDistribution(const CallGraph& graph, const NodeState& state,
                          NodeIndex i, ClassVector* out);

// Mean neighbor distribution of each class over a fully labelled state.
absl::StatusOr<CdrnReference> CdrnTrain(const CallGraph& graph,
                                        const NodeState& state);

// Cosine similarity to each reference, floored at zero, normalised.
ClassVector CdrnScore(const CallGraph& graph, const NodeState& state,
                      NodeIndex i, const CdrnReference& reference,
                      double prior);

// --- network-only link-based -----------------------------------------------

inline constexpr size_t kNlbFeatureCount = 4;
using NlbFeatures = std::array<double, kNlbFeatureCount>;
inline constexpr std::array<std::string_view, kNlbFeatureCount>
    kNlbFeatureNames = {"churn_mass", "nonchurn_mass", "any_churn_neighbor",
                        "churn_majority"};

// [sum w*p_churn, sum w*p_nonchurn, any neighbor with p_churn > 0.5,
//  churn mass > non-churn mass]. All zeros for isolated nodes.
NlbFeatures NlbFeatureVector(const CallGraph& graph, const NodeState& state,
                             NodeIndex i);

struct NlbModel {
  double intercept = 0.0;
  NlbFeatures coefficients = {};
};

struct LogisticOptions {
  double l2 = 1e-4;
  double gradient_tolerance = 1e-8;  // max-norm
  int max_iterations = 500;
};

struct LogisticFit {
  // [intercept, w_1, ..., w_d]
  std::vector<double> coefficients;
  int iterations = 0;
  double gradient_norm = 0.0;
  // Objective value after each accepted step, starting with the initial one.
  std::vector<double> objective_trace;
};

// Minimises mean log-loss + (l2/2) * |w|^2 over the non-intercept weights with
// damped Newton steps. `rows` is row-major with `dim` columns.
absl::StatusOr<LogisticFit> FitLogisticRegression(std::span<const double> rows,
                                                  size_t dim,
                                                  std::span<const uint8_t> y,
                                                  const LogisticOptions& opts);

// Logistic regression of each node's label on its link features.
absl::StatusOr<NlbModel> NlbTrain(const CallGraph& graph,
                                  const NodeState& state,
                                  const LogisticOptions& opts = {},
                                  LogisticFit* fit_report = nullptr);

ClassVector NlbScore(const NlbModel& model, const NlbFeatures& features);

// --- spreading activation --------------------------------------------------

// (non-churn energy, churn energy) of `i` after one transfer step; each
// neighbor j passes on w_ij / strength(j) of its energy.
ClassVector SpaRcEnergy(const CallGraph& graph, const NodeState& state,
                        NodeIndex i, double spread);

ClassVector SpaRcScore(const CallGraph& graph, const NodeState& state,
                       NodeIndex i, double spread);

// --- model files -----------------------------------------------------------

// `key<TAB>value` lines.
absl::Status WriteNlbModel(const NlbModel& model, const std::string& path);
absl::StatusOr<NlbModel> ReadNlbModel(const std::string& path);
absl::Status WriteCdrnReference(const CdrnReference& ref,
                                const std::string& path);
absl::StatusOr<CdrnReference> ReadCdrnReference(const std::string& path);

// --- polymorphic wrapper used by collective inference ----------------------

enum class RcKind { kWvrn, kCdrn, kNlb, kSpaRc };

inline constexpr std::array<RcKind, 4> kAllRcKinds = {
    RcKind::kWvrn, RcKind::kCdrn, RcKind::kNlb, RcKind::kSpaRc};

const char* RcName(RcKind kind);
absl::StatusOr<RcKind> ParseRcKind(std::string_view name);

class RelationalClassifier {
 public:
  virtual ~RelationalClassifier() = default;
  virtual RcKind kind() const = 0;
  virtual ClassVector Score(const CallGraph& graph, const NodeState& state,
                            NodeIndex i) const = 0;
};

class WvrnClassifier final : public RelationalClassifier {
 public:
  explicit WvrnClassifier(double prior) : prior_(prior) {}
  RcKind kind() const override { return RcKind::kWvrn; }
  ClassVector Score(const CallGraph& graph, const NodeState& state,
                    NodeIndex i) const override {
    return WvrnScore(graph, state, i, prior_);
  }

 private:
  double prior_;
};

class CdrnClassifier final : public RelationalClassifier {
 public:
  CdrnClassifier(CdrnReference reference, double prior)
      : reference_(reference), prior_(prior) {}
  RcKind kind() const override { return RcKind::kCdrn; }
  ClassVector Score(const CallGraph& graph, const NodeState& state,
                    NodeIndex i) const override {
    return CdrnScore(graph, state, i, reference_, prior_);
  }

 private:
  CdrnReference reference_;
  double prior_;
};

class NlbClassifier final : public RelationalClassifier {
 public:
  explicit NlbClassifier(NlbModel model) : model_(model) {}
  RcKind kind() const override { return RcKind::kNlb; }
  ClassVector Score(const CallGraph& graph, const NodeState& state,
                    NodeIndex i) const override {
    return NlbScore(model_, NlbFeatureVector(graph, state, i));
  }

 private:
  NlbModel model_;
};

class SpaRcClassifier final : public RelationalClassifier {
 public:
  explicit SpaRcClassifier(double spread) : spread_(spread) {}
  RcKind kind() const override { return RcKind::kSpaRc; }
  ClassVector Score(const CallGraph& graph, const NodeState& state,
                    NodeIndex i) const override {
    return SpaRcScore(graph, state, i, spread_);
  }

 private:
  double spread_;
};

}  // namespace churnet

#endif  // CHURNET_RELATIONAL_CLASSIFIERS_H_
