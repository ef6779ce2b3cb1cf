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
#include <sstream>
#include <vector>

#include "absl/container/flat_hash_set.h"
#include "churnet/bench.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace churnet {
namespace {

SynthConfig Small(uint64_t seed, double homophily) {
  SynthConfig c;
  c.n_customers = 2000;
  c.target_sparsity = 6.0 / 2000;
  c.target_churn_rate = 0.03;
  c.homophily_strength = homophily;
  c.rng_seed = seed;
  c.offnet_calls_per_month = 1;
  return c;
}

bool IsMember(const SynthDataset& d, CustomerId id) {
  return id.value < d.members.size();
}

// Customer ids of members equal their index (see SynthDataset).
std::vector<std::vector<uint32_t>> ObservedContacts(const SynthDataset& d) {
  absl::flat_hash_set<std::pair<uint32_t, uint32_t>> pairs;
  for (const CdrRecord& r : d.records) {
    if (!IsMember(d, r.caller) || !IsMember(d, r.callee)) continue;
    pairs.insert(std::minmax(r.caller.value, r.callee.value));
  }
  std::vector<std::vector<uint32_t>> adj(d.members.size());
  for (auto [a, b] : pairs) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

struct Exposure {
  double exposed_churn = 0, exposed_total = 0;
  double other_churn = 0, other_total = 0;
  double Z() const {
    const double p1 = exposed_churn / exposed_total;
    const double p0 = other_churn / other_total;
    const double p = (exposed_churn + other_churn) / (exposed_total + other_total);
    return (p1 - p0) /
           std::sqrt(p * (1 - p) * (1 / exposed_total + 1 / other_total));
  }
};

// Monthly churn of customers alive at the month start, split by whether an
// observed contact churned in an earlier month. A pair is observed iff it
// called before the earlier churner left, which does not depend on the
// survivor's fate.
void TallyExposure(const SynthDataset& d, Exposure* out) {
  const auto adj = ObservedContacts(d);
  auto month_of = [&](uint32_t i) {
    return d.churn_day[i] ? *d.churn_day[i] / kSynthDaysPerMonth : 1 << 30;
  };
  for (int m = 1; m < 6; ++m) {
    for (uint32_t i = 0; i < adj.size(); ++i) {
      if (month_of(i) < m) continue;
      const bool exposed = std::any_of(adj[i].begin(), adj[i].end(),
                                       [&](uint32_t j) { return month_of(j) < m; });
      const bool churns = month_of(i) == m;
      (exposed ? out->exposed_total : out->other_total) += 1;
      (exposed ? out->exposed_churn : out->other_churn) += churns;
    }
  }
}

TEST(Synthgen, NoHomophilyMeansNoContagion) {
  Exposure null_model, planted;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    auto d = Generate(Small(seed, 0.0));
    ASSERT_TRUE(d.ok()) << d.status();
    TallyExposure(*d, &null_model);
  }
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    auto d = Generate(Small(seed, 0.5));
    ASSERT_TRUE(d.ok());
    TallyExposure(*d, &planted);
  }
  EXPECT_LT(std::abs(null_model.Z()), 4.0);
  EXPECT_GT(planted.Z(), 8.0);
}

TEST(Synthgen, DeterministicPerSeed) {
  auto a = Generate(Small(7, 0.5));
  auto b = Generate(Small(7, 0.5));
  auto c = Generate(Small(8, 0.5));
  ASSERT_TRUE(a.ok() && b.ok() && c.ok());
  EXPECT_EQ(a->records, b->records);
  EXPECT_EQ(a->churn_day, b->churn_day);
  EXPECT_NE(a->records, c->records);
  const std::string dir = testing::ScratchDir("det");
  ASSERT_TRUE(WriteCdrFile(a->records, a->registry, dir + "/a.tsv", false).ok());
  ASSERT_TRUE(WriteCdrFile(b->records, b->registry, dir + "/b.tsv", false).ok());
  std::ifstream fa(dir + "/a.tsv", std::ios::binary), fb(dir + "/b.tsv", std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Synthgen, RecordsRespectChurnAndMinimumDuration) {
  auto d = Generate(Small(3, 0.7));
  ASSERT_TRUE(d.ok());
  size_t churners = 0;
  for (const auto& day : d->churn_day) churners += day.has_value();
  EXPECT_GT(churners, 0u);
  for (const CdrRecord& r : d->records) {
    EXPECT_GE(r.duration_s, kMinCallSeconds);
    EXPECT_GE(r.start_day, 0);
    EXPECT_LT(r.start_day, 6 * kSynthDaysPerMonth);
    for (CustomerId id : {r.caller, r.callee}) {
      if (IsMember(*d, id) && d->churn_day[id.value]) {
        EXPECT_LT(r.start_day, *d->churn_day[id.value]);
      }
    }
  }
}

TEST(Synthgen, SparsityWithinThirtyPercent) {
  for (double s : {3e-4, 1e-3}) {
    SynthConfig c;
    c.n_customers = 10000;
    c.target_sparsity = s;
    c.offnet_calls_per_month = 0;
    auto d = Generate(c);
    ASSERT_TRUE(d.ok());
    EXPECT_NEAR(d->realized_sparsity / s, 1.0, 0.3);
  }
}

TEST(Synthgen, InfeasibleConfigurationsRejected) {
  SynthConfig c;
  c.n_customers = 1000;
  c.target_sparsity = 1e-6;  // fewer edges than a perfect matching needs
  EXPECT_FALSE(Generate(c).ok());
  c.target_sparsity = 0.9;  // denser than the generator supports
  EXPECT_FALSE(Generate(c).ok());
  c = SynthConfig{};
  c.n_customers = 50;
  EXPECT_FALSE(c.Validate().ok());
  c = SynthConfig{};
  c.target_churn_rate = 1.0;
  EXPECT_FALSE(c.Validate().ok());
  c = SynthConfig{};
  c.homophily_strength = 1.5;
  EXPECT_FALSE(c.Validate().ok());
}

// 93,000 customers at 2.2% churn and sparsity 1.04e-4.
TEST(Synthgen, LargeScaleCalibration) {
  SynthConfig c;
  c.n_customers = 93000;
  c.target_churn_rate = 0.022;
  c.target_sparsity = 1.04e-4;
  c.offnet_calls_per_month = 0;
  c.calls_per_edge_per_month = 1;
  auto d = Generate(c);
  ASSERT_TRUE(d.ok());
  double alive = 0, churned = 0;
  for (const auto& day : d->churn_day) {
    if (day && *day < 4 * kSynthDaysPerMonth) continue;
    alive += 1;
    churned += day && *day < 5 * kSynthDaysPerMonth;
  }
  EXPECT_NEAR(churned / alive / 0.022, 1.0, 0.2);
  GraphBuilder builder(DecayConfig{});
  for (const CdrRecord& r : d->records) {
    ASSERT_TRUE(builder.Add(r.caller, r.callee, 1.0, r.start_day).ok());
  }
  for (CustomerId id : d->members) builder.AddNode(id);
  CallGraph g = std::move(builder).Build();
  const double s = *Sparsity(g);
  EXPECT_GT(s, 1.04e-4 / 3);
  EXPECT_LT(s, 1.04e-4 * 3);
}

TEST(Synthgen, FilesWritten) {
  auto d = Generate(Small(2, 0.5));
  ASSERT_TRUE(d.ok());
  const std::string dir = testing::ScratchDir("files");
  ASSERT_TRUE(WriteGroundTruth(*d, dir + "/truth.tsv").ok());
  ASSERT_TRUE(WriteMembers(*d, dir + "/members.txt").ok());
  CustomerRegistry reg;
  auto members = ReadMembersFile(dir + "/members.txt", reg);
  ASSERT_TRUE(members.ok());
  EXPECT_EQ(members->size(), 2000u);
  std::ifstream truth(dir + "/truth.tsv");
  size_t lines = 0, churners = 0;
  for (std::string l; std::getline(truth, l);) ++lines;
  for (const auto& day : d->churn_day) churners += day.has_value();
  EXPECT_EQ(lines, churners);
}

// Planted homophily is recoverable by WVRN without CI through the full
// label/window pipeline: mean AUC over 10 seeds exceeds 0.5 under a
// one-sided t-test at p < 0.01 (t > 2.821 with 9 degrees of freedom).
TEST(Synthgen, PlantedSignalIsRecoverable) {
  std::vector<double> aucs;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    SynthConfig c = Small(seed, 0.5);
    c.n_customers = 4000;
    c.target_sparsity = 5.0 / 4000;
    c.offnet_calls_per_month = SynthConfig{}.offnet_calls_per_month;
    auto d = Generate(c);
    ASSERT_TRUE(d.ok());
    CustomerSet members(d->members.begin(), d->members.end());
    TimelineConfig t;
    const ChurnSchedule sched =
        ChurnSchedule::Compute(d->records, t.observation_end, &members);
    const auto filtered = FilterRecords(d->records, &members);
    auto net = PrepareNetwork(filtered, sched, d->registry, t, 0.02,
                              LogisticOptions{});
    ASSERT_TRUE(net.ok()) << net.status();
    auto out = RunOneLearner(*net, LearnerSpec{});
    ASSERT_TRUE(out.ok()) << out.status();
    aucs.push_back(out->report.auc);
  }
  double mean = 0, var = 0;
  for (double a : aucs) mean += a / aucs.size();
  for (double a : aucs) var += (a - mean) * (a - mean) / (aucs.size() - 1);
  const double t = (mean - 0.5) / std::sqrt(var / aucs.size());
  EXPECT_GT(t, 2.821) << "mean AUC " << mean;
}

}  // namespace
}  // namespace churnet
