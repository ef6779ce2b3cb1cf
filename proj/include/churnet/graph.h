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

#ifndef CHURNET_GRAPH_H_
#define CHURNET_GRAPH_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "churnet/customer_registry.h"

namespace churnet {

using NodeIndex = uint32_t;

// Exponential time decay of call weights. `t` is the distance in days
// between an event and `time_origin`; graphs built from a window use the
// window's last day as origin so the most recent calls decay least.
struct DecayConfig {
  double gamma = 0.0;  // 1/day
  double time_origin = 0.0;

  absl::Status Validate() const;
  double Age(double event_day) const;
};

// e^(-gamma * t) * raw_weight.
absl::StatusOr<double> DecayedContribution(double raw_weight, double t,
                                           const DecayConfig& config);

// Immutable undirected weighted graph in CSR form. Every undirected edge is
// stored once per endpoint with the same weight. Nodes are ordered by
// ascending CustomerId so the layout does not depend on input order.
class CallGraph {
 public:
  CallGraph() = default;

  size_t num_nodes() const { return customers_.size(); }
  size_t num_edges() const { return targets_.size() / 2; }

  std::span<const NodeIndex> neighbors(NodeIndex i) const {
    return {targets_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const double> weights(NodeIndex i) const {
    return {weights_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  size_t degree(NodeIndex i) const { return offsets_[i + 1] - offsets_[i]; }

  // Sum of incident edge weights.
  double strength(NodeIndex i) const { return strength_[i]; }

  // Weight of edge (i, j), or 0 when the nodes are not linked.
  double weight(NodeIndex i, NodeIndex j) const;

  CustomerId customer(NodeIndex i) const { return customers_[i]; }
  std::span<const CustomerId> customers() const { return customers_; }

  // Returns false when the customer is not a node of this graph.
  bool IndexOf(CustomerId id, NodeIndex* out) const;

 private:
  friend class GraphBuilder;

  std::vector<CustomerId> customers_;
  std::vector<size_t> offsets_ = {0};
  std::vector<NodeIndex> targets_;
  std::vector<double> weights_;
  std::vector<double> strength_;
};

// One call event, already converted to a raw weight (1 per call, or seconds).
struct CallContribution {
  CustomerId a;
  CustomerId b;
  double raw_weight = 0.0;
  int32_t day = 0;
};

// Accumulates decayed call contributions and freezes them into a CallGraph.
// Both call directions fold into one undirected pair; self-calls are dropped.
// Per-pair sums are taken over contributions sorted by value, so the result
// is bit-identical for any permutation of the input stream.
class GraphBuilder {
 public:
  explicit GraphBuilder(DecayConfig config) : config_(config) {}

  absl::Status Add(CustomerId a, CustomerId b, double raw_weight,
                   int32_t day);

  // Registers a node even if it ends up without edges.
  void AddNode(CustomerId id) { extra_nodes_.push_back(id); }

  size_t dropped_self_calls() const { return dropped_self_calls_; }

  CallGraph Build() &&;

 private:
  struct Entry {
    uint64_t pair_key;
    double value;
  };

  DecayConfig config_;
  std::vector<Entry> entries_;
  std::vector<CustomerId> extra_nodes_;
  size_t dropped_self_calls_ = 0;
};

absl::StatusOr<CallGraph> BuildGraph(
    std::span<const CallContribution> contributions, const DecayConfig& config);

// Linked nodes of `i`, sorted; with `include_self` the node itself is added.
absl::StatusOr<std::vector<NodeIndex>> Neighborhood(const CallGraph& graph,
                                                    NodeIndex i,
                                                    bool include_self);

// Fraction of non-zero adjacency-matrix cells: 2 * |E| / n^2.
absl::StatusOr<double> Sparsity(const CallGraph& graph);

// `node_a<TAB>node_b<TAB>weight`, one line per undirected edge with a < b.
absl::Status WriteEdgeList(const CallGraph& graph, const std::string& path);

// `external_id<TAB>index`, one line per node.
absl::Status WriteNodeMap(const CallGraph& graph,
                          const CustomerRegistry& registry,
                          const std::string& path);

}  // namespace churnet

#endif  // CHURNET_GRAPH_H_
