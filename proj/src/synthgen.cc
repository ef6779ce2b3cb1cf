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

#include "churnet/synthgen.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

#include "absl/container/flat_hash_set.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "churnet/random.h"

namespace churnet {
namespace {

// Independent draw streams.
enum Stream : uint64_t {
  kPairing = 1,
  kWeights = 2,
  kEndpoints = 3,
  kEdgeFactor = 4,
  kChurnMonth = 100,  // + month
  kChurnDay = 200,
  kCalls = 300,       // + month
  kOffnet = 400,      // + month
};

constexpr double kParetoExponent = 2.5;
constexpr int kCalibrationRounds = 48;

class Draws {
 public:
  Draws(uint64_t seed, uint64_t stream, uint64_t key)
      : seed_(Mix64(seed ^ Mix64(stream))), key_(key) {}
  double Uniform() { return CounterUniform(seed_, key_, counter_++); }
  double Exponential(double mean) { return -mean * std::log1p(-Uniform()); }
  // Inversion; the means used here are small.
  int64_t Poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 50.0) {
      const double g = std::sqrt(-2.0 * std::log1p(-Uniform())) *
                       std::cos(2.0 * M_PI * Uniform());
      return std::max<int64_t>(0, std::llround(mean + std::sqrt(mean) * g));
    }
    const double u = Uniform();
    double p = std::exp(-mean);
    double cdf = p;
    int64_t k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }

 private:
  uint64_t seed_;
  uint64_t key_;
  uint64_t counter_ = 0;
};

struct Contact {
  uint32_t a;
  uint32_t b;
};

absl::StatusOr<std::vector<Contact>> BuildContacts(const SynthConfig& c) {
  const uint64_t n = static_cast<uint64_t>(c.n_customers);
  const double target = c.target_sparsity * static_cast<double>(n) * n / 2.0;
  const uint64_t budget = static_cast<uint64_t>(std::llround(target));
  const uint64_t min_edges = (n + 1) / 2;
  const uint64_t max_edges = n * (n - 1) / 4;
  if (budget < min_edges) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "sparsity %g gives %d contacts for %d customers; at least %d are "
        "needed so that every customer has a contact (sparsity >= %g)",
        c.target_sparsity, budget, n, min_edges, 2.0 * min_edges / n / n));
  }
  if (budget > max_edges) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "sparsity %g is too dense for %d customers (at most %g supported)",
        c.target_sparsity, n, 4.0 * max_edges / n / n));
  }
  absl::flat_hash_set<uint64_t> seen;
  seen.reserve(budget);
  std::vector<Contact> contacts;
  contacts.reserve(budget);
  auto add = [&](uint32_t a, uint32_t b) {
    if (a == b) return false;
    if (a > b) std::swap(a, b);
    if (!seen.insert((uint64_t{a} << 32) | b).second) return false;
    contacts.push_back({a, b});
    return true;
  };

  // Random perfect matching so every customer has a contact.
  std::vector<uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Draws shuffle(c.rng_seed, kPairing, 0);
  for (uint64_t i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[static_cast<uint64_t>(shuffle.Uniform() * (i + 1))]);
  }
  for (uint64_t i = 0; i + 1 < n; i += 2) add(perm[i], perm[i + 1]);
  if (n % 2 == 1) add(perm[n - 1], perm[0]);

  // Chung-Lu fill over heavy-tailed weights.
  std::vector<double> cumulative(n);
  const double cap = std::sqrt(static_cast<double>(n));
  double total = 0.0;
  Draws weights(c.rng_seed, kWeights, 0);
  for (uint64_t i = 0; i < n; ++i) {
    const double w = std::pow(1.0 - weights.Uniform(),
                              -1.0 / (kParetoExponent - 1.0));
    total += std::min(w, cap);
    cumulative[i] = total;
  }
  auto pick = [&](double u) {
    const auto it =
        std::upper_bound(cumulative.begin(), cumulative.end(), u * total);
    return static_cast<uint32_t>(
        std::min<size_t>(it - cumulative.begin(), n - 1));
  };
  Draws endpoints(c.rng_seed, kEndpoints, 0);
  uint64_t attempts = 0;
  const uint64_t max_attempts = 50 * budget + 1000;
  while (contacts.size() < budget && attempts++ < max_attempts) {
    add(pick(endpoints.Uniform()), pick(endpoints.Uniform()));
  }
  if (contacts.size() < budget) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "could not place %d distinct contacts among %d customers",
        budget, n));
  }
  return contacts;
}

struct Adjacency {
  std::vector<uint64_t> offsets;
  std::vector<uint32_t> targets;
};

Adjacency ToAdjacency(uint64_t n, const std::vector<Contact>& contacts) {
  Adjacency adj;
  adj.offsets.assign(n + 1, 0);
  for (const Contact& e : contacts) {
    ++adj.offsets[e.a + 1];
    ++adj.offsets[e.b + 1];
  }
  std::partial_sum(adj.offsets.begin(), adj.offsets.end(),
                   adj.offsets.begin());
  adj.targets.resize(adj.offsets[n]);
  std::vector<uint64_t> fill(adj.offsets.begin(), adj.offsets.end() - 1);
  for (const Contact& e : contacts) {
    adj.targets[fill[e.a]++] = e.b;
    adj.targets[fill[e.b]++] = e.a;
  }
  return adj;
}

// Month index of churn per customer (-1: stays), and the churn rate in the
// fifth month among customers alive at its start.
struct ChurnMonths {
  std::vector<int32_t> month;
  double fifth_month_rate = 0.0;
};

ChurnMonths SimulateChurn(const SynthConfig& c, const Adjacency& adj,
                          double base_hazard) {
  const uint64_t n = static_cast<uint64_t>(c.n_customers);
  const double boost = 1.0 + 10.0 * c.homophily_strength;
  ChurnMonths out;
  out.month.assign(n, -1);
  std::vector<uint8_t> exposed(n, 0);
  const int32_t rate_month = std::min(4, c.months - 1);
  for (int32_t m = 0; m < c.months; ++m) {
    const uint64_t seed = Mix64(c.rng_seed ^ Mix64(kChurnMonth + m));
    size_t alive = 0;
    size_t churned = 0;
    for (uint64_t i = 0; i < n; ++i) {
      if (out.month[i] >= 0) continue;
      ++alive;
      const double h = std::min(1.0, base_hazard * (exposed[i] ? boost : 1.0));
      if (CounterUniform(seed, 0, i) < h) {
        out.month[i] = m;
        ++churned;
      }
    }
    if (m == rate_month && alive > 0) {
      out.fifth_month_rate = static_cast<double>(churned) / alive;
    }
    for (uint64_t i = 0; i < n; ++i) {
      if (out.month[i] != m) continue;
      for (uint64_t k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
        exposed[adj.targets[k]] = 1;
      }
    }
  }
  return out;
}

int32_t Duration(Draws& d, double mean) {
  return kMinCallSeconds +
         static_cast<int32_t>(d.Exponential(mean - kMinCallSeconds));
}

absl::Status WriteText(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  out << body;
  out.close();
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

}  // namespace

absl::Status SynthConfig::Validate() const {
  if (n_customers < 100 || n_customers > (int64_t{1} << 31)) {
    return absl::InvalidArgumentError(
        absl::StrCat("n_customers must be in [100, 2^31], got ", n_customers));
  }
  if (!(target_churn_rate > 0.0 && target_churn_rate < 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "target_churn_rate must be in (0, 1), got ", target_churn_rate));
  }
  if (!(target_sparsity > 0.0 && target_sparsity < 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "target_sparsity must be in (0, 1), got ", target_sparsity));
  }
  if (!(homophily_strength >= 0.0 && homophily_strength <= 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "homophily_strength must be in [0, 1], got ", homophily_strength));
  }
  if (months < 1 || months > 60) {
    return absl::InvalidArgumentError(
        absl::StrCat("months must be in [1, 60], got ", months));
  }
  if (!(calls_per_edge_per_month > 0.0) ||
      !std::isfinite(calls_per_edge_per_month)) {
    return absl::InvalidArgumentError("calls_per_edge_per_month must be > 0");
  }
  if (!(duration_mean_s > kMinCallSeconds) || !std::isfinite(duration_mean_s)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "duration_mean_s must exceed ", kMinCallSeconds, " s"));
  }
  if (!(offnet_calls_per_month >= 0.0) ||
      !std::isfinite(offnet_calls_per_month)) {
    return absl::InvalidArgumentError("offnet_calls_per_month must be >= 0");
  }
  return absl::OkStatus();
}

absl::StatusOr<SynthDataset> Generate(const SynthConfig& config) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  const uint64_t n = static_cast<uint64_t>(config.n_customers);
  absl::StatusOr<std::vector<Contact>> contacts = BuildContacts(config);
  if (!contacts.ok()) return contacts.status();

  SynthDataset data;
  data.num_contacts = contacts->size();
  data.realized_sparsity =
      2.0 * static_cast<double>(contacts->size()) / (static_cast<double>(n) * n);

  // Calibrate the base hazard on fixed draws; the realised rate grows
  // with the hazard, so bisect in log space.
  {
    const Adjacency adj = ToAdjacency(n, *contacts);
    double lo = std::log(1e-9);
    double hi = 0.0;
    double best_hazard = config.target_churn_rate;
    double best_error = INFINITY;
    ChurnMonths best;
    for (int round = 0; round < kCalibrationRounds; ++round) {
      const double hazard =
          round == 0 ? config.target_churn_rate : std::exp(0.5 * (lo + hi));
      ChurnMonths sim = SimulateChurn(config, adj, hazard);
      const double realized = sim.fifth_month_rate;
      const double error = std::abs(realized - config.target_churn_rate);
      if (error < best_error) {
        best_error = error;
        best_hazard = hazard;
        best = std::move(sim);
      }
      if (best_error <= 1e-3 * config.target_churn_rate || hi - lo < 1e-6) {
        break;
      }
      (realized < config.target_churn_rate ? lo : hi) = std::log(hazard);
    }
    data.base_hazard = best_hazard;
    data.realized_churn_rate = best.fifth_month_rate;
    data.churn_day.assign(n, std::nullopt);
    const uint64_t day_seed = Mix64(config.rng_seed ^ Mix64(kChurnDay));
    for (uint64_t i = 0; i < n; ++i) {
      if (best.month[i] < 0) continue;
      data.churn_day[i] =
          best.month[i] * kSynthDaysPerMonth +
          static_cast<int32_t>(CounterUniform(day_seed, 0, i) *
                               kSynthDaysPerMonth);
    }
  }

  const int width =
      std::max<int>(6, static_cast<int>(absl::StrCat(n - 1).size()));
  data.members.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    data.members.push_back(
        data.registry.Intern(absl::StrFormat("c%0*d", width, i)));
  }
  auto alive_on = [&](uint64_t i, int32_t day) {
    return !data.churn_day[i].has_value() || day < *data.churn_day[i];
  };

  const std::vector<Contact>& edges = *contacts;
  std::vector<double> factor(edges.size());
  for (size_t e = 0; e < edges.size(); ++e) {
    Draws d(config.rng_seed, kEdgeFactor, e);
    factor[e] = 0.25 + d.Exponential(0.75);
  }
  for (int32_t m = 0; m < config.months; ++m) {
    const int32_t first_day = m * kSynthDaysPerMonth;
    for (size_t e = 0; e < edges.size(); ++e) {
      Draws d(config.rng_seed, kCalls + m, e);
      const int64_t count =
          d.Poisson(config.calls_per_edge_per_month * factor[e]);
      for (int64_t k = 0; k < count; ++k) {
        const int32_t day =
            first_day + static_cast<int32_t>(d.Uniform() * kSynthDaysPerMonth);
        const bool forward = d.Uniform() < 0.5;
        const int32_t duration = Duration(d, config.duration_mean_s);
        if (!alive_on(edges[e].a, day) || !alive_on(edges[e].b, day)) continue;
        const CustomerId a{edges[e].a};
        const CustomerId b{edges[e].b};
        data.records.push_back(
            {forward ? a : b, forward ? b : a, day, duration});
      }
    }
    if (config.offnet_calls_per_month <= 0.0) continue;
    for (uint64_t i = 0; i < n; ++i) {
      Draws d(config.rng_seed, kOffnet + m, i);
      const int64_t count = d.Poisson(config.offnet_calls_per_month);
      for (int64_t k = 0; k < count; ++k) {
        const int32_t day =
            first_day + static_cast<int32_t>(d.Uniform() * kSynthDaysPerMonth);
        const uint64_t other = static_cast<uint64_t>(d.Uniform() * n);
        const bool outgoing = d.Uniform() < 0.5;
        const int32_t duration = Duration(d, config.duration_mean_s);
        if (!alive_on(i, day)) continue;
        const CustomerId self{static_cast<uint32_t>(i)};
        const CustomerId x =
            data.registry.Intern(absl::StrFormat("x%0*d", width, other));
        data.records.push_back(
            {outgoing ? self : x, outgoing ? x : self, day, duration});
      }
    }
  }
  std::sort(data.records.begin(), data.records.end(),
            [](const CdrRecord& l, const CdrRecord& r) {
              return std::tie(l.start_day, l.caller, l.callee, l.duration_s) <
                     std::tie(r.start_day, r.caller, r.callee, r.duration_s);
            });
  return data;
}

absl::Status WriteGroundTruth(const SynthDataset& data,
                              const std::string& path) {
  std::string body;
  for (size_t i = 0; i < data.members.size(); ++i) {
    if (!data.churn_day[i].has_value()) continue;
    absl::StrAppend(&body, data.registry.Name(data.members[i]), "\t",
                    *data.churn_day[i], "\n");
  }
  return WriteText(path, body);
}

absl::Status WriteMembers(const SynthDataset& data, const std::string& path) {
  std::string body;
  for (CustomerId id : data.members) {
    absl::StrAppend(&body, data.registry.Name(id), "\n");
  }
  return WriteText(path, body);
}

}  // namespace churnet
