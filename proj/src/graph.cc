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

#include "churnet/graph.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace churnet {
namespace {

uint64_t PairKey(CustomerId a, CustomerId b) {
  if (b < a) std::swap(a, b);
  return (static_cast<uint64_t>(a.value) << 32) | b.value;
}

CustomerId KeyLow(uint64_t key) { return CustomerId{uint32_t(key >> 32)}; }
CustomerId KeyHigh(uint64_t key) { return CustomerId{uint32_t(key)}; }

// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void Add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace

absl::Status DecayConfig::Validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    return absl::InvalidArgumentError(
        absl::StrCat("decay gamma must be a finite value >= 0, got ", gamma));
  }
  return absl::OkStatus();
}

double DecayConfig::Age(double event_day) const {
  return std::abs(event_day - time_origin);
}

absl::StatusOr<double> DecayedContribution(double raw_weight, double t,
                                           const DecayConfig& config) {
  if (!(raw_weight > 0.0) || !std::isfinite(raw_weight)) {
    return absl::InvalidArgumentError(
        absl::StrCat("raw weight must be positive, got ", raw_weight));
  }
  if (!(t >= 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("elapsed time must be >= 0, got ", t));
  }
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  return std::exp(-config.gamma * t) * raw_weight;
}

double CallGraph::weight(NodeIndex i, NodeIndex j) const {
  const auto nbrs = neighbors(i);
  const auto it = std::lower_bound(nbrs.begin(), nbrs.end(), j);
  if (it == nbrs.end() || *it != j) return 0.0;
  return weights(i)[it - nbrs.begin()];
}

bool CallGraph::IndexOf(CustomerId id, NodeIndex* out) const {
  const auto it = std::lower_bound(customers_.begin(), customers_.end(), id);
  if (it == customers_.end() || *it != id) return false;
  *out = static_cast<NodeIndex>(it - customers_.begin());
  return true;
}

absl::Status GraphBuilder::Add(CustomerId a, CustomerId b, double raw_weight,
                               int32_t day) {
  absl::StatusOr<double> w =
      DecayedContribution(raw_weight, config_.Age(day), config_);
  if (!w.ok()) return w.status();
  if (a == b) {
    ++dropped_self_calls_;
    return absl::OkStatus();
  }
  entries_.push_back({PairKey(a, b), *w});
  return absl::OkStatus();
}

CallGraph GraphBuilder::Build() && {
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& x, const Entry& y) {
              return x.pair_key != y.pair_key ? x.pair_key < y.pair_key
                                               : x.value < y.value;
            });

  // Collapse to one entry per pair.
  std::vector<Entry> pairs;
  for (size_t begin = 0; begin < entries_.size();) {
    size_t end = begin;
    CompensatedSum sum;
    while (end < entries_.size() &&
           entries_[end].pair_key == entries_[begin].pair_key) {
      sum.Add(entries_[end].value);
      ++end;
    }
    pairs.push_back({entries_[begin].pair_key, sum.value()});
    begin = end;
  }
  std::vector<Entry>().swap(entries_);

  CallGraph g;
  g.customers_ = std::move(extra_nodes_);
  g.customers_.reserve(g.customers_.size() + 2 * pairs.size());
  for (const Entry& p : pairs) {
    g.customers_.push_back(KeyLow(p.pair_key));
    g.customers_.push_back(KeyHigh(p.pair_key));
  }
  std::sort(g.customers_.begin(), g.customers_.end());
  g.customers_.erase(std::unique(g.customers_.begin(), g.customers_.end()),
                     g.customers_.end());
  g.customers_.shrink_to_fit();

  // Underflowed pairs keep their nodes but lose the edge.
  std::erase_if(pairs, [](const Entry& p) { return !(p.value > 0.0); });

  const size_t n = g.customers_.size();
  std::vector<NodeIndex> low(pairs.size()), high(pairs.size());
  std::vector<size_t> degree(n, 0);
  for (size_t e = 0; e < pairs.size(); ++e) {
    g.IndexOf(KeyLow(pairs[e].pair_key), &low[e]);
    g.IndexOf(KeyHigh(pairs[e].pair_key), &high[e]);
    ++degree[low[e]];
    ++degree[high[e]];
  }
  g.offsets_.assign(n + 1, 0);
  for (size_t i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + degree[i];
  g.targets_.resize(g.offsets_[n]);
  g.weights_.resize(g.offsets_[n]);
  std::vector<size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  // Pairs are sorted by (low, high), which fills every adjacency list in
  // ascending neighbor order.
  for (size_t e = 0; e < pairs.size(); ++e) {
    g.targets_[cursor[low[e]]] = high[e];
    g.weights_[cursor[low[e]]++] = pairs[e].value;
    g.targets_[cursor[high[e]]] = low[e];
    g.weights_[cursor[high[e]]++] = pairs[e].value;
  }
  g.strength_.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    CompensatedSum s;
    for (double w : g.weights(static_cast<NodeIndex>(i))) s.Add(w);
    g.strength_[i] = s.value();
  }
  return g;
}

absl::StatusOr<CallGraph> BuildGraph(
    std::span<const CallContribution> contributions,
    const DecayConfig& config) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  GraphBuilder builder(config);
  for (const CallContribution& c : contributions) {
    if (absl::Status s = builder.Add(c.a, c.b, c.raw_weight, c.day); !s.ok()) {
      return s;
    }
  }
  return std::move(builder).Build();
}

absl::StatusOr<std::vector<NodeIndex>> Neighborhood(const CallGraph& graph,
                                                    NodeIndex i,
                                                    bool include_self) {
  if (i >= graph.num_nodes()) {
    return absl::OutOfRangeError(absl::StrCat(
        "node ", i, " out of range for graph with ", graph.num_nodes(),
        " nodes"));
  }
  const auto nbrs = graph.neighbors(i);
  std::vector<NodeIndex> out(nbrs.begin(), nbrs.end());
  if (include_self) {
    out.insert(std::lower_bound(out.begin(), out.end(), i), i);
  }
  return out;
}

absl::StatusOr<double> Sparsity(const CallGraph& graph) {
  if (graph.num_nodes() == 0) {
    return absl::InvalidArgumentError("sparsity of an empty graph");
  }
  const double n = static_cast<double>(graph.num_nodes());
  return 2.0 * static_cast<double>(graph.num_edges()) / (n * n);
}

absl::Status WriteEdgeList(const CallGraph& graph, const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"),
                                          &std::fclose);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  for (NodeIndex i = 0; i < graph.num_nodes(); ++i) {
    const auto nbrs = graph.neighbors(i);
    const auto ws = graph.weights(i);
    for (size_t k = 0; k < nbrs.size(); ++k) {
      if (nbrs[k] <= i) continue;
      absl::FPrintF(f.get(), "%u\t%u\t%.17g\n", i, nbrs[k], ws[k]);
    }
  }
  return absl::OkStatus();
}

absl::Status WriteNodeMap(const CallGraph& graph,
                          const CustomerRegistry& registry,
                          const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"),
                                          &std::fclose);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  for (NodeIndex i = 0; i < graph.num_nodes(); ++i) {
    absl::FPrintF(f.get(), "%s\t%u\n", registry.Name(graph.customer(i)), i);
  }
  return absl::OkStatus();
}

}  // namespace churnet
