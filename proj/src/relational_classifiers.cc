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

#include "churnet/relational_classifiers.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "absl/container/flat_hash_map.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"

namespace churnet {
namespace {

double Clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z)
double Softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double Cosine(const ClassVector& a, const ClassVector& b) {
  const double dot = a.p_nonchurn * b.p_nonchurn + a.p_churn * b.p_churn;
  const double na = std::hypot(a.p_nonchurn, a.p_churn);
  const double nb = std::hypot(b.p_nonchurn, b.p_churn);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (na * nb);
}

absl::Status WriteKeyValues(
    const std::vector<std::pair<std::string, double>>& entries,
    const std::string& model, const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"),
                                          &std::fclose);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  absl::FPrintF(f.get(), "model\t%s\n", model);
  for (const auto& [key, value] : entries) {
    absl::FPrintF(f.get(), "%s\t%.17g\n", key, value);
  }
  return absl::OkStatus();
}

absl::StatusOr<absl::flat_hash_map<std::string, std::string>> ReadKeyValues(
    const std::string& path, std::string_view expected_model) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  absl::flat_hash_map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::pair<std::string, std::string> parts =
        absl::StrSplit(line, absl::MaxSplits('\t', 1));
    kv[parts.first] = parts.second;
  }
  if (kv["model"] != expected_model) {
    return absl::InvalidArgumentError(
        absl::StrCat(path, " is not a ", std::string(expected_model), " model file"));
  }
  return kv;
}

absl::StatusOr<double> Lookup(
    const absl::flat_hash_map<std::string, std::string>& kv,
    const std::string& key) {
  auto it = kv.find(key);
  double v = 0.0;
  if (it == kv.end() || !absl::SimpleAtod(it->second, &v)) {
    return absl::InvalidArgumentError(
        absl::StrCat("model file lacks a numeric '", key, "' entry"));
  }
  return v;
}

}  // namespace

NodeState NodeState::Unknown(size_t n, double prior) {
  NodeState s;
  s.p_churn_.assign(n, prior);
  s.known_.assign(n, 0);
  return s;
}

NodeState NodeState::FromLabels(std::span<const ChurnStatus> labels) {
  NodeState s;
  s.p_churn_.resize(labels.size());
  s.known_.assign(labels.size(), 1);
  for (size_t i = 0; i < labels.size(); ++i) {
    s.p_churn_[i] = labels[i] == ChurnStatus::kChurner ? 1.0 : 0.0;
  }
  return s;
}

void NodeState::SetKnown(NodeIndex i, ChurnStatus label) {
  known_[i] = 1;
  p_churn_[i] = label == ChurnStatus::kChurner ? 1.0 : 0.0;
}

void NodeState::SetEstimate(NodeIndex i, double p_churn) {
  if (!known_[i]) p_churn_[i] = p_churn;
}

size_t NodeState::num_known() const {
  return static_cast<size_t>(std::count(known_.begin(), known_.end(), 1));
}

ClassVector WvrnScore(const CallGraph& graph, const NodeState& state,
                      NodeIndex i, double prior) {
  const auto nbrs = graph.neighbors(i);
  if (nbrs.empty()) return ClassVector::FromChurn(prior);
  const auto ws = graph.weights(i);
  double churn = 0.0;
  for (size_t k = 0; k < nbrs.size(); ++k) {
    churn += ws[k] * state.p_churn(nbrs[k]);
  }
  return ClassVector::FromChurn(Clamp01(churn / graph.strength(i)));
}

bool NeighborDistribution(const CallGraph& graph, const NodeState& state,
                          NodeIndex i, ClassVector* out) {
  const auto nbrs = graph.neighbors(i);
  if (nbrs.empty()) return false;
  const auto ws = graph.weights(i);
  double churn = 0.0;
  double nonchurn = 0.0;
  for (size_t k = 0; k < nbrs.size(); ++k) {
    const double p = state.p_churn(nbrs[k]);
    churn += ws[k] * p;
    nonchurn += ws[k] * (1.0 - p);
  }
  const double total = churn + nonchurn;
  *out = {nonchurn / total, churn / total};
  return true;
}

absl::StatusOr<CdrnReference> CdrnTrain(const CallGraph& graph,
                                        const NodeState& state) {
  if (state.size() != graph.num_nodes() || !state.fully_known()) {
    return absl::FailedPreconditionError(
        "CDRN training needs a fully labelled state matching the graph");
  }
  std::array<ClassVector, 2> sum = {ClassVector{0, 0}, ClassVector{0, 0}};
  std::array<size_t, 2> count = {0, 0};
  for (NodeIndex i = 0; i < graph.num_nodes(); ++i) {
    ClassVector v;
    if (!NeighborDistribution(graph, state, i, &v)) continue;
    const int c = state.p_churn(i) > 0.5 ? 1 : 0;
    sum[c].p_nonchurn += v.p_nonchurn;
    sum[c].p_churn += v.p_churn;
    ++count[c];
  }
  for (int c = 0; c < 2; ++c) {
    if (count[c] == 0) {
      return absl::FailedPreconditionError(absl::StrCat(
          "no linked ", c == 1 ? "churners" : "non-churners",
          " in the training graph; cannot build a CDRN reference"));
    }
  }
  CdrnReference ref;
  ref.ref_nonchurn = {sum[0].p_nonchurn / count[0], sum[0].p_churn / count[0]};
  ref.ref_churn = {sum[1].p_nonchurn / count[1], sum[1].p_churn / count[1]};
  return ref;
}

ClassVector CdrnScore(const CallGraph& graph, const NodeState& state,
                      NodeIndex i, const CdrnReference& reference,
                      double prior) {
  ClassVector v;
  if (!NeighborDistribution(graph, state, i, &v)) {
    return ClassVector::FromChurn(prior);
  }
  const double s0 = std::max(0.0, Cosine(v, reference.ref_nonchurn));
  const double s1 = std::max(0.0, Cosine(v, reference.ref_churn));
  if (s0 + s1 == 0.0) return ClassVector::FromChurn(prior);
  return {s0 / (s0 + s1), s1 / (s0 + s1)};
}

NlbFeatures NlbFeatureVector(const CallGraph& graph, const NodeState& state,
                             NodeIndex i) {
  const auto nbrs = graph.neighbors(i);
  const auto ws = graph.weights(i);
  double churn = 0.0;
  double nonchurn = 0.0;
  bool any_churn = false;
  for (size_t k = 0; k < nbrs.size(); ++k) {
    const double p = state.p_churn(nbrs[k]);
    churn += ws[k] * p;
    nonchurn += ws[k] * (1.0 - p);
    any_churn |= p > 0.5;
  }
  return {churn, nonchurn, any_churn ? 1.0 : 0.0, churn > nonchurn ? 1.0 : 0.0};
}

absl::StatusOr<LogisticFit> FitLogisticRegression(std::span<const double> rows,
                                                  size_t dim,
                                                  std::span<const uint8_t> y,
                                                  const LogisticOptions& opts) {
  const size_t n = y.size();
  if (n == 0 || rows.size() != n * dim) {
    return absl::InvalidArgumentError("design matrix does not match labels");
  }
  if (!(opts.l2 >= 0.0) || opts.max_iterations <= 0) {
    return absl::InvalidArgumentError("invalid logistic regression options");
  }
  const Eigen::Index p = static_cast<Eigen::Index>(dim + 1);
  // Columns are centred and scaled for conditioning: z_c = (x_c - mu_c) / s_c
  // and beta_c = v_c / s_c. The objective is unchanged; only the
  // coordinates differ.
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(p);
  for (size_t c = 0; c < dim; ++c) {
    double sum = 0.0;
    for (size_t r = 0; r < n; ++r) sum += rows[r * dim + c];
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (size_t r = 0; r < n; ++r) {
      const double d = rows[r * dim + c] - mean;
      sq += d * d;
    }
    const double sd = std::sqrt(sq / static_cast<double>(n));
    if (sd > 0.0) {
      mu(c + 1) = mean;
      scale(c + 1) = sd;
    }
  }
  Eigen::MatrixXd z(n, p);
  Eigen::VectorXd target(n);
  for (size_t r = 0; r < n; ++r) {
    z(r, 0) = 1.0;
    for (size_t c = 0; c < dim; ++c) {
      z(r, c + 1) = (rows[r * dim + c] - mu(c + 1)) / scale(c + 1);
    }
    target(r) = y[r] ? 1.0 : 0.0;
  }
  // Penalty (l2/2) * sum_c (v_c / s_c)^2 over the non-intercept weights.
  Eigen::VectorXd penalty(p);
  penalty(0) = 0.0;
  for (Eigen::Index c = 1; c < p; ++c) {
    penalty(c) = opts.l2 / (scale(c) * scale(c));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  auto to_original = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd beta = v.cwiseQuotient(scale);
    beta(0) = v(0) - mu.tail(p - 1).dot(beta.tail(p - 1));
    return beta;
  };

  auto objective = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd eta = z * v;
    double loss = 0.0;
    for (size_t r = 0; r < n; ++r) loss += Softplus(eta(r)) - target(r) * eta(r);
    return loss * inv_n + 0.5 * v.cwiseProduct(penalty).dot(v);
  };
  // Gradient in the scaled coordinates and its max-norm in the original
  // ones.
  auto gradient = [&](const Eigen::VectorXd& v, Eigen::VectorXd* prob) {
    const Eigen::VectorXd eta = z * v;
    prob->resize(n);
    for (size_t r = 0; r < n; ++r) (*prob)(r) = Sigmoid(eta(r));
    return Eigen::VectorXd(z.transpose() * (*prob - target) * inv_n +
                           penalty.cwiseProduct(v));
  };
  auto original_norm = [&](const Eigen::VectorXd& g) {
    // d/dbeta_c = s_c * d/dv_c + mu_c * d/dv_0.
    double norm = std::abs(g(0));
    for (Eigen::Index c = 1; c < p; ++c) {
      norm = std::max(norm, std::abs(scale(c) * g(c) + mu(c) * g(0)));
    }
    return norm;
  };

  LogisticFit fit;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  double f = objective(v);
  fit.objective_trace.push_back(f);
  Eigen::VectorXd prob;
  Eigen::VectorXd grad = gradient(v, &prob);
  for (int iter = 0;; ++iter) {
    fit.gradient_norm = original_norm(grad);
    fit.iterations = iter;
    if (fit.gradient_norm < opts.gradient_tolerance) break;
    if (iter == opts.max_iterations) {
      return absl::FailedPreconditionError(absl::StrFormat(
          "logistic regression did not converge in %d iterations "
          "(gradient max-norm %.3g)",
          opts.max_iterations, fit.gradient_norm));
    }
    Eigen::VectorXd curvature(n);
    for (size_t r = 0; r < n; ++r) curvature(r) = prob(r) * (1.0 - prob(r));
    Eigen::MatrixXd hessian = z.transpose() * curvature.asDiagonal() * z * inv_n;
    hessian.diagonal() += penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    Eigen::VectorXd step = ldlt.solve(-grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite() ||
        grad.dot(step) >= 0.0) {
      step = -grad;  // fall back to steepest descent
    }
    // Full Newton step when the objective cannot tell it apart from the
    // current point (within rounding) but the gradient shrinks; otherwise
    // Armijo backtracking keeps the objective monotone.
    Eigen::VectorXd candidate = v + step;
    double f_new = objective(candidate);
    Eigen::VectorXd next_prob;
    Eigen::VectorXd next_grad = gradient(candidate, &next_prob);
    const double rounding = 64.0 * std::numeric_limits<double>::epsilon() *
                            std::max(1.0, std::abs(f));
    bool accepted = f_new <= f + 1e-4 * grad.dot(step) ||
                    (f_new <= f + rounding &&
                     original_norm(next_grad) < fit.gradient_norm);
    const double slope = grad.dot(step);
    double t = 0.5;
    for (int halvings = 1; !accepted && halvings < 60; ++halvings, t *= 0.5) {
      candidate = v + t * step;
      f_new = objective(candidate);
      if (f_new <= f + 1e-4 * t * slope && f_new < f) {
        next_grad = gradient(candidate, &next_prob);
        accepted = true;
      }
    }
    if (!accepted) {
      return absl::FailedPreconditionError(absl::StrFormat(
          "logistic regression line search stalled after %d iterations "
          "(gradient max-norm %.3g)",
          iter, fit.gradient_norm));
    }
    v = std::move(candidate);
    f = f_new;
    grad = std::move(next_grad);
    prob = std::move(next_prob);
    fit.objective_trace.push_back(f);
  }
  const Eigen::VectorXd beta = to_original(v);
  fit.coefficients.assign(beta.data(), beta.data() + p);
  return fit;
}

absl::StatusOr<NlbModel> NlbTrain(const CallGraph& graph,
                                  const NodeState& state,
                                  const LogisticOptions& opts,
                                  LogisticFit* fit_report) {
  if (state.size() != graph.num_nodes() || !state.fully_known()) {
    return absl::FailedPreconditionError(
        "NLB training needs a fully labelled state matching the graph");
  }
  const size_t n = graph.num_nodes();
  std::vector<double> rows(n * kNlbFeatureCount);
  std::vector<uint8_t> y(n);
  size_t churners = 0;
  for (NodeIndex i = 0; i < n; ++i) {
    const NlbFeatures f = NlbFeatureVector(graph, state, i);
    std::copy(f.begin(), f.end(), rows.begin() + i * kNlbFeatureCount);
    y[i] = state.p_churn(i) > 0.5 ? 1 : 0;
    churners += y[i];
  }
  if (churners == 0 || churners == n) {
    return absl::FailedPreconditionError(
        "NLB training needs both churners and non-churners");
  }
  absl::StatusOr<LogisticFit> fit =
      FitLogisticRegression(rows, kNlbFeatureCount, y, opts);
  if (!fit.ok()) return fit.status();
  NlbModel model;
  model.intercept = fit->coefficients[0];
  for (size_t k = 0; k < kNlbFeatureCount; ++k) {
    model.coefficients[k] = fit->coefficients[k + 1];
  }
  if (fit_report != nullptr) *fit_report = *std::move(fit);
  return model;
}

ClassVector NlbScore(const NlbModel& model, const NlbFeatures& features) {
  double z = model.intercept;
  for (size_t k = 0; k < kNlbFeatureCount; ++k) {
    z += model.coefficients[k] * features[k];
  }
  return ClassVector::FromChurn(Sigmoid(z));
}

ClassVector SpaRcEnergy(const CallGraph& graph, const NodeState& state,
                        NodeIndex i, double spread) {
  const double own = state.p_churn(i);
  double churn_in = 0.0;
  double nonchurn_in = 0.0;
  const auto nbrs = graph.neighbors(i);
  const auto ws = graph.weights(i);
  for (size_t k = 0; k < nbrs.size(); ++k) {
    const double share = ws[k] / graph.strength(nbrs[k]);
    const double p = state.p_churn(nbrs[k]);
    churn_in += share * p;
    nonchurn_in += share * (1.0 - p);
  }
  return {(1.0 - spread) * (1.0 - own) + spread * nonchurn_in,
          (1.0 - spread) * own + spread * churn_in};
}

ClassVector SpaRcScore(const CallGraph& graph, const NodeState& state,
                       NodeIndex i, double spread) {
  const ClassVector e = SpaRcEnergy(graph, state, i, spread);
  const double total = e.p_nonchurn + e.p_churn;
  if (!(total > 0.0)) return state.vector(i);
  return {e.p_nonchurn / total, e.p_churn / total};
}

absl::Status WriteNlbModel(const NlbModel& model, const std::string& path) {
  std::vector<std::pair<std::string, double>> entries = {
      {"intercept", model.intercept}};
  for (size_t k = 0; k < kNlbFeatureCount; ++k) {
    entries.emplace_back(std::string(kNlbFeatureNames[k]),
                         model.coefficients[k]);
  }
  return WriteKeyValues(entries, "nlb", path);
}

absl::StatusOr<NlbModel> ReadNlbModel(const std::string& path) {
  auto kv = ReadKeyValues(path, "nlb");
  if (!kv.ok()) return kv.status();
  NlbModel model;
  absl::StatusOr<double> v = Lookup(*kv, "intercept");
  if (!v.ok()) return v.status();
  model.intercept = *v;
  for (size_t k = 0; k < kNlbFeatureCount; ++k) {
    v = Lookup(*kv, std::string(kNlbFeatureNames[k]));
    if (!v.ok()) return v.status();
    model.coefficients[k] = *v;
  }
  return model;
}

absl::Status WriteCdrnReference(const CdrnReference& ref,
                                const std::string& path) {
  return WriteKeyValues({{"ref_churn.p_nonchurn", ref.ref_churn.p_nonchurn},
                         {"ref_churn.p_churn", ref.ref_churn.p_churn},
                         {"ref_nonchurn.p_nonchurn", ref.ref_nonchurn.p_nonchurn},
                         {"ref_nonchurn.p_churn", ref.ref_nonchurn.p_churn}},
                        "cdrn", path);
}

absl::StatusOr<CdrnReference> ReadCdrnReference(const std::string& path) {
  auto kv = ReadKeyValues(path, "cdrn");
  if (!kv.ok()) return kv.status();
  CdrnReference ref;
  double* targets[] = {&ref.ref_churn.p_nonchurn, &ref.ref_churn.p_churn,
                       &ref.ref_nonchurn.p_nonchurn, &ref.ref_nonchurn.p_churn};
  const char* keys[] = {"ref_churn.p_nonchurn", "ref_churn.p_churn",
                        "ref_nonchurn.p_nonchurn", "ref_nonchurn.p_churn"};
  for (int k = 0; k < 4; ++k) {
    absl::StatusOr<double> v = Lookup(*kv, keys[k]);
    if (!v.ok()) return v.status();
    *targets[k] = *v;
  }
  return ref;
}

const char* RcName(RcKind kind) {
  switch (kind) {
    case RcKind::kWvrn:
      return "wvrn";
    case RcKind::kCdrn:
      return "cdrn";
    case RcKind::kNlb:
      return "nlb";
    case RcKind::kSpaRc:
      return "spa_rc";
  }
  return "?";
}

absl::StatusOr<RcKind> ParseRcKind(std::string_view name) {
  for (RcKind k : kAllRcKinds) {
    if (name == RcName(k)) return k;
  }
  if (name == "spa") return RcKind::kSpaRc;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown relational classifier '", std::string(name), "'"));
}

}  // namespace churnet
