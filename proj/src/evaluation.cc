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

#include "churnet/evaluation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "absl/strings/str_cat.h"

namespace churnet {
namespace {

absl::Status CheckInputs(std::span<const double> scores,
                         std::span<const uint8_t> labels, size_t* churners) {
  if (scores.size() != labels.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        scores.size(), " scores but ", labels.size(), " labels"));
  }
  if (scores.empty()) return absl::InvalidArgumentError("empty population");
  for (double s : scores) {
    if (std::isnan(s)) return absl::InvalidArgumentError("NaN score");
  }
  *churners = 0;
  for (uint8_t l : labels) *churners += l ? 1 : 0;
  return absl::OkStatus();
}

absl::Status RequireBothClasses(size_t churners, size_t n) {
  if (churners == 0 || churners == n) {
    return absl::InvalidArgumentError(
        "metric needs both churners and non-churners in the population");
  }
  return absl::OkStatus();
}

// Loss line a + b*c of one operating point, c the normalised cost of a false
// churn alarm.
struct Line {
  double a;
  double b;
};

// Integral of (a + b*c) * Beta(c; alpha, beta) over [lo, hi].
double IntegrateLine(const Line& line, double lo, double hi,
                     const SeverityDistribution& sev) {
  if (hi <= lo) return 0.0;
  using boost::math::ibeta;
  const double mass = ibeta(sev.alpha, sev.beta, hi) -
                      ibeta(sev.alpha, sev.beta, lo);
  const double first_moment = sev.alpha / (sev.alpha + sev.beta) *
                              (ibeta(sev.alpha + 1, sev.beta, hi) -
                               ibeta(sev.alpha + 1, sev.beta, lo));
  return line.a * mass + line.b * first_moment;
}

// Integral over [0, 1] of the lower envelope of `lines` weighted by the
// severity density. `lines` must be sorted by non-increasing slope.
double IntegrateLowerEnvelope(std::vector<Line> lines,
                              const SeverityDistribution& sev) {
  // Equal slopes: keep the lowest intercept.
  std::vector<Line> distinct;
  for (const Line& l : lines) {
    if (!distinct.empty() && distinct.back().b == l.b) {
      distinct.back().a = std::min(distinct.back().a, l.a);
    } else {
      distinct.push_back(l);
    }
  }
  auto cross = [](const Line& p, const Line& q) {
    return (q.a - p.a) / (p.b - q.b);
  };
  // With slopes decreasing, later lines take over as c grows.
  std::vector<Line> hull;
  for (const Line& l : distinct) {
    while (hull.size() >= 2 &&
           cross(hull[hull.size() - 2], l) <=
               cross(hull[hull.size() - 2], hull.back())) {
      hull.pop_back();
    }
    hull.push_back(l);
  }
  double total = 0.0;
  double lo = 0.0;
  for (size_t k = 0; k < hull.size() && lo < 1.0; ++k) {
    double hi = k + 1 < hull.size() ? cross(hull[k], hull[k + 1]) : 1.0;
    hi = std::clamp(hi, lo, 1.0);
    total += IntegrateLine(hull[k], lo, hi, sev);
    lo = hi;
  }
  return total;
}

}  // namespace

absl::StatusOr<double> Lift(std::span<const double> scores,
                            std::span<const uint8_t> labels, double fraction,
                            std::span<const uint64_t> tie_keys) {
  size_t churners = 0;
  if (absl::Status s = CheckInputs(scores, labels, &churners); !s.ok()) {
    return s;
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("lift fraction must lie in (0, 1), got ", fraction));
  }
  if (!tie_keys.empty() && tie_keys.size() != scores.size()) {
    return absl::InvalidArgumentError("tie keys do not match scores");
  }
  if (churners == 0) {
    return absl::InvalidArgumentError("lift undefined for zero base rate");
  }
  const size_t n = scores.size();
  auto key = [&](size_t i) { return tie_keys.empty() ? i : tie_keys[i]; };
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const size_t cutoff = std::min<size_t>(
      n, std::max<size_t>(
             1, static_cast<size_t>(std::ceil(fraction * n - 1e-9))));
  std::partial_sort(order.begin(), order.begin() + cutoff, order.end(),
                    [&](size_t x, size_t y) {
                      if (scores[x] != scores[y]) return scores[x] > scores[y];
                      return key(x) < key(y);
                    });
  size_t hits = 0;
  for (size_t k = 0; k < cutoff; ++k) hits += labels[order[k]] ? 1 : 0;
  const double base_rate = static_cast<double>(churners) / n;
  return (static_cast<double>(hits) / cutoff) / base_rate;
}

absl::StatusOr<double> Auc(std::span<const double> scores,
                           std::span<const uint8_t> labels) {
  size_t churners = 0;
  if (absl::Status s = CheckInputs(scores, labels, &churners); !s.ok()) {
    return s;
  }
  const size_t n = scores.size();
  if (absl::Status s = RequireBothClasses(churners, n); !s.ok()) return s;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t x, size_t y) { return scores[x] < scores[y]; });
  // Sum of mid-ranks of the churners.
  double churner_rank_sum = 0.0;
  for (size_t begin = 0; begin < n;) {
    size_t end = begin;
    size_t tied_churners = 0;
    while (end < n && scores[order[end]] == scores[order[begin]]) {
      tied_churners += labels[order[end]] ? 1 : 0;
      ++end;
    }
    const double mid_rank = 0.5 * static_cast<double>(begin + 1 + end);
    churner_rank_sum += mid_rank * tied_churners;
    begin = end;
  }
  const double n1 = static_cast<double>(churners);
  const double n0 = static_cast<double>(n - churners);
  return (churner_rank_sum - n1 * (n1 + 1) / 2) / (n0 * n1);
}

absl::StatusOr<double> HMeasure(std::span<const double> scores,
                                std::span<const uint8_t> labels,
                                SeverityDistribution severity) {
  size_t churners = 0;
  if (absl::Status s = CheckInputs(scores, labels, &churners); !s.ok()) {
    return s;
  }
  const size_t n = scores.size();
  if (absl::Status s = RequireBothClasses(churners, n); !s.ok()) return s;
  if (!(severity.alpha > 0.0) || !(severity.beta > 0.0) ||
      !std::isfinite(severity.alpha) || !std::isfinite(severity.beta)) {
    return absl::InvalidArgumentError("Beta severity parameters must be > 0");
  }
  const double n1 = static_cast<double>(churners);
  const double n0 = static_cast<double>(n - churners);
  const double pi1 = n1 / n;
  const double pi0 = n0 / n;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t x, size_t y) { return scores[x] < scores[y]; });

  // Operating point k flags as churners everything above the k-th distinct
  // score. F0/F1 are the fractions of each class at or below the threshold.
  auto line_at = [&](double below0, double below1) {
    const double f0 = below0 / n0;
    const double f1 = below1 / n1;
    return Line{pi1 * f1, pi0 * (1.0 - f0) - pi1 * f1};
  };
  std::vector<Line> lines = {line_at(0, 0)};
  double below0 = 0.0;
  double below1 = 0.0;
  for (size_t begin = 0; begin < n;) {
    size_t end = begin;
    while (end < n && scores[order[end]] == scores[order[begin]]) {
      (labels[order[end]] ? below1 : below0) += 1.0;
      ++end;
    }
    lines.push_back(line_at(below0, below1));
    begin = end;
  }
  const double expected_min_loss = IntegrateLowerEnvelope(lines, severity);
  const double no_information_loss = IntegrateLowerEnvelope(
      {lines.front(), Line{pi1, -pi1}}, severity);
  return 1.0 - expected_min_loss / no_information_loss;
}

absl::StatusOr<EvaluationReport> Evaluate(std::span<const double> scores,
                                          std::span<const uint8_t> labels,
                                          std::span<const uint64_t> tie_keys,
                                          SeverityDistribution severity) {
  EvaluationReport report;
  absl::StatusOr<double> v = Lift(scores, labels, 0.005, tie_keys);
  if (!v.ok()) return v.status();
  report.lift_05 = *v;
  v = Lift(scores, labels, 0.01, tie_keys);
  if (!v.ok()) return v.status();
  report.lift_1 = *v;
  v = Auc(scores, labels);
  if (!v.ok()) return v.status();
  report.auc = *v;
  v = HMeasure(scores, labels, severity);
  if (!v.ok()) return v.status();
  report.h_measure = *v;
  report.population = scores.size();
  size_t churners = 0;
  for (uint8_t l : labels) churners += l ? 1 : 0;
  report.base_rate = static_cast<double>(churners) / scores.size();
  return report;
}

}  // namespace churnet
