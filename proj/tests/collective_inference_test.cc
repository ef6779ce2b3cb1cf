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
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "absl/strings/str_format.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace churnet {
namespace {

using ::churnet::testing::MakeGraph;
constexpr ChurnStatus C = ChurnStatus::kChurner;
constexpr ChurnStatus N = ChurnStatus::kNonChurner;

// Returns the same churn probability for every node.
class ConstantRc final : public RelationalClassifier {
 public:
  explicit ConstantRc(double p) : p_(p) {}
  RcKind kind() const override { return RcKind::kWvrn; }
  ClassVector Score(const CallGraph&, const NodeState&,
                    NodeIndex) const override {
    return ClassVector::FromChurn(p_);
  }

 private:
  double p_;
};

CiConfig Config(CiMethod m, int max_iters = 100, double threshold = 1e-4) {
  CiConfig c;
  c.method = m;
  c.max_iters = max_iters;
  c.burn_in = std::min(10, max_iters - 1);
  c.early_stop_threshold = threshold;
  return c;
}

// Unknown centre 0 with leaves {1,2} churners and {3,4} non-churners.
struct Star {
  CallGraph graph = MakeGraph(5, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}});
  NodeState state;
  Star() {
    state = NodeState::Unknown(5, 0.1);
    state.SetKnown(1, C);
    state.SetKnown(2, C);
    state.SetKnown(3, N);
    state.SetKnown(4, N);
  }
};

TEST(EarlyStop, Cases) {
  std::vector<double> a = {0.1, 0.5, 0.9};
  EXPECT_TRUE(*EarlyStopCheck(a, a, 1e-12));
  std::vector<double> b = {0.11, 0.51, 0.91};
  EXPECT_FALSE(*EarlyStopCheck(a, b, 1e-4));
  std::vector<double> z = {0.0, 0.0}, c = {0.0, 0.0002};
  EXPECT_FALSE(*EarlyStopCheck(z, c, 1e-4));
  EXPECT_TRUE(*EarlyStopCheck(z, c, 1.0001e-4));
  EXPECT_FALSE(EarlyStopCheck(a, z, 1e-4).ok());
}

TEST(CiConfig, Validation) {
  CiConfig c;
  EXPECT_TRUE(c.Validate().ok());
  c.burn_in = c.max_iters;
  EXPECT_FALSE(c.Validate().ok());
  c = CiConfig{};
  c.early_stop_threshold = 0;
  EXPECT_FALSE(c.Validate().ok());
  c = CiConfig{};
  c.rl_decay = 0;
  EXPECT_FALSE(c.Validate().ok());
  for (CiMethod m : kAllCiMethods) EXPECT_EQ(*ParseCiMethod(CiName(m)), m);
  EXPECT_FALSE(ParseCiMethod("bp").ok());
}

TEST(Grid, TwentyFourNamedLearners) {
  auto grid = FullLearnerGrid(CiConfig{}, RcParams{});
  ASSERT_EQ(grid.size(), 24u);
  EXPECT_EQ(grid.front().name(), "wvrn+none");
  EXPECT_EQ(grid.back().name(), "spa_rc+spa_ci");
}

TEST(None, StarCentreIsHalf) {
  Star s;
  WvrnClassifier rc(0.1);
  InferenceResult r = RunInference(s.graph, s.state, rc, Config(CiMethod::kNone));
  EXPECT_DOUBLE_EQ(r.scores[0], 0.5);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.stop_reason, StopReason::kSinglePass);
}

TEST(None, KnownNodesKeepLabels) {
  CallGraph g = MakeGraph(3, {{0, 1, 1}, {1, 2, 1}});
  std::vector<ChurnStatus> labels = {C, N, C};
  NodeState s = NodeState::FromLabels(labels);
  WvrnClassifier rc(0.1);
  InferenceResult r = RunInference(g, s, rc, Config(CiMethod::kNone));
  EXPECT_EQ(r.scores, (std::vector<double>{1, 0, 1}));
}

TEST(Rl, StarStaysAtHalfAndStops) {
  Star s;
  s.state.SetEstimate(0, 0.5);
  WvrnClassifier rc(0.1);
  for (int cap : {1, 2, 3}) {
    InferenceResult r = RunInference(s.graph, s.state, rc, Config(CiMethod::kRl, cap));
    EXPECT_EQ(r.scores[0], 0.5);
  }
  InferenceResult r = RunInference(s.graph, s.state, rc, Config(CiMethod::kRl));
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.stop_reason, StopReason::kConverged);
}

// 0 (churner) -2- 1 -1- 2 -3- 3 (non-churner). Harmonic solution:
// x1 = (2 + x2)/3, x2 = x1/4  =>  x1 = 8/11, x2 = 2/11.
struct Chain {
  CallGraph graph = MakeGraph(4, {{0, 1, 2}, {1, 2, 1}, {2, 3, 3}});
  NodeState state;
  Chain() {
    state = NodeState::Unknown(4, 0.3);
    state.SetKnown(0, C);
    state.SetKnown(3, N);
  }
};

TEST(Rl, ChainMatchesHarmonicSolution) {
  Chain ch;
  WvrnClassifier rc(0.3);
  InferenceResult r =
      RunInference(ch.graph, ch.state, rc, Config(CiMethod::kRl, 500, 1e-15));
  EXPECT_NEAR(r.scores[1], 8.0 / 11.0, 1e-9);
  EXPECT_NEAR(r.scores[2], 2.0 / 11.0, 1e-9);
  EXPECT_EQ(r.stop_reason, StopReason::kConverged);
}

TEST(Rl, FixedPointIsReturnedAfterOneIteration) {
  Chain ch;
  ch.state.SetEstimate(1, 8.0 / 11.0);
  ch.state.SetEstimate(2, 2.0 / 11.0);
  WvrnClassifier rc(0.3);
  InferenceResult r = RunInference(ch.graph, ch.state, rc, Config(CiMethod::kRl));
  EXPECT_EQ(r.iterations, 1);
  EXPECT_NEAR(r.scores[1], 8.0 / 11.0, 1e-15);
  EXPECT_NEAR(r.scores[2], 2.0 / 11.0, 1e-15);
}

TEST(RlSa, DegenerateSchedulesAndTelescopedProduct) {
  Chain ch;
  WvrnClassifier wvrn(0.3);
  CiConfig cfg = Config(CiMethod::kRlSa, 200, 1e-12);
  cfg.rl_beta0 = 1.0;
  cfg.rl_decay = 1.0;
  CiConfig rl = cfg;
  rl.method = CiMethod::kRl;
  EXPECT_EQ(RunInference(ch.graph, ch.state, wvrn, cfg).scores,
            RunInference(ch.graph, ch.state, wvrn, rl).scores);

  cfg.rl_beta0 = 0.0;
  InferenceResult frozen = RunInference(ch.graph, ch.state, wvrn, cfg);
  EXPECT_EQ(frozen.scores[1], 0.3);
  EXPECT_EQ(frozen.scores[2], 0.3);

  // Constant RC output c from x0: x_k = c + (x0 - c) prod_{j<k} (1 - b0 v^j).
  const double c = 0.9, x0 = 0.2;
  CallGraph g = MakeGraph(2, {{0, 1, 1}});
  NodeState s = NodeState::Unknown(2, x0);
  ConstantRc rc(c);
  for (double beta0 : {1.0, 0.8, 0.35}) {
    for (int k = 1; k <= 6; ++k) {
      CiConfig sa = Config(CiMethod::kRlSa, k, 1e-300);
      sa.rl_beta0 = beta0;
      sa.rl_decay = 0.5;
      double prod = 1.0;
      for (int j = 0; j < k; ++j) prod *= 1.0 - beta0 * std::pow(0.5, j);
      InferenceResult r = RunInference(g, s, rc, sa);
      if (beta0 < 1.0) {
        EXPECT_EQ(r.iterations, k);
      }
      EXPECT_NEAR(r.scores[0], c + (x0 - c) * prod, 1e-14)
          << "beta0=" << beta0 << " k=" << k;
    }
  }
}

TEST(Gibbs, CertainRcGivesExactlyOne) {
  CallGraph g = MakeGraph(3, {{0, 1, 1}, {1, 2, 1}});
  ConstantRc rc(1.0);
  InferenceResult r =
      RunInference(g, NodeState::Unknown(3, 0.2), rc, Config(CiMethod::kGibbs));
  for (double v : r.scores) EXPECT_EQ(v, 1.0);
}

TEST(Gibbs, FairCoinConcentrates) {
  CallGraph g = MakeGraph(2, {{0, 1, 1}});
  ConstantRc rc(0.5);
  CiConfig cfg = Config(CiMethod::kGibbs, 10010, 1e-300);
  cfg.burn_in = 10;
  cfg.rng_seed = 42;
  InferenceResult r = RunInference(g, NodeState::Unknown(2, 0.5), rc, cfg);
  EXPECT_EQ(r.iterations, 10010);
  for (double v : r.scores) EXPECT_NEAR(v, 0.5, 0.02);
}

TEST(Gibbs, SeedContract) {
  Chain ch;
  WvrnClassifier rc(0.3);
  CiConfig a = Config(CiMethod::kGibbs, 200, 1e-9);
  a.rng_seed = 1;
  CiConfig b = a;
  b.rng_seed = 2;
  auto ra = RunInference(ch.graph, ch.state, rc, a);
  EXPECT_EQ(ra.scores, RunInference(ch.graph, ch.state, rc, a).scores);
  EXPECT_NE(ra.scores, RunInference(ch.graph, ch.state, rc, b).scores);
}

TEST(Ic, AlwaysChurnAndTieToNonChurn) {
  CallGraph g = MakeGraph(2, {{0, 1, 1}});
  ConstantRc yes(0.75), tie(0.5);
  NodeState s = NodeState::Unknown(2, 0.2);
  auto r1 = RunInference(g, s, yes, Config(CiMethod::kIc));
  auto r2 = RunInference(g, s, tie, Config(CiMethod::kIc));
  EXPECT_EQ(r1.scores, (std::vector<double>{1, 1}));
  EXPECT_EQ(r2.scores, (std::vector<double>{0, 0}));
}

// Edges 0-1:3, 0-2:1, 1-2:1, 1-3:1, 2-3:1, 3-4:1, 4-5:3; 0 churner, 5 not;
// unknowns start at 0.3 under WVRN.
//   iter 1: p = (.72, .533, .3, .075)  -> labels (1, 1, 0, 0)
//   iter 2: p = (.8, .667, .667, 0)    -> labels (1, 1, 1, 0)
//   iter 3: p = (1, 1, .667, .25)      -> labels (1, 1, 1, 0)
TEST(Ic, SixNodeHandTrace) {
  CallGraph g = MakeGraph(6, {{0, 1, 3}, {0, 2, 1}, {1, 2, 1}, {1, 3, 1},
                              {2, 3, 1}, {3, 4, 1}, {4, 5, 3}});
  NodeState s = NodeState::Unknown(6, 0.3);
  s.SetKnown(0, C);
  s.SetKnown(5, N);
  WvrnClassifier rc(0.3);
  InferenceResult r = RunInference(g, s, rc, Config(CiMethod::kIc, 3, 1e-12));
  EXPECT_EQ(r.iterations, 3);
  ASSERT_EQ(r.scores.size(), 6u);
  EXPECT_EQ(r.scores[0], 1.0);
  EXPECT_EQ(r.scores[1], 1.0);
  EXPECT_EQ(r.scores[2], 1.0);
  EXPECT_DOUBLE_EQ(r.scores[3], 2.0 / 3.0);
  EXPECT_EQ(r.scores[4], 0.0);
  EXPECT_EQ(r.scores[5], 0.0);
}

TEST(SpaCi, NoBurnInEqualsRl) {
  Chain ch;
  for (RcKind kind : {RcKind::kWvrn, RcKind::kSpaRc}) {
    std::unique_ptr<RelationalClassifier> rc;
    if (kind == RcKind::kWvrn) rc = std::make_unique<WvrnClassifier>(0.3);
    else rc = std::make_unique<SpaRcClassifier>(0.4);
    CiConfig spa = Config(CiMethod::kSpaCi);
    spa.burn_in = 0;
    CiConfig rl = spa;
    rl.method = CiMethod::kRl;
    auto a = RunInference(ch.graph, ch.state, *rc, spa);
    auto b = RunInference(ch.graph, ch.state, *rc, rl);
    EXPECT_EQ(a.scores, b.scores);
    EXPECT_EQ(a.iterations, b.iterations);
  }
}

TEST(SpaCi, FullyLabelledUnchanged) {
  CallGraph g = MakeGraph(3, {{0, 1, 1}, {1, 2, 1}});
  std::vector<ChurnStatus> labels = {N, C, N};
  WvrnClassifier rc(0.1);
  auto r = RunInference(g, NodeState::FromLabels(labels), rc,
                        Config(CiMethod::kSpaCi));
  EXPECT_EQ(r.scores, (std::vector<double>{0, 1, 0}));
}

std::string SpaCiTrace() {
  CallGraph g = MakeGraph(6, {{0, 1, 2}, {0, 2, 1}, {1, 3, 1.5}, {2, 3, 1},
                              {3, 4, 0.5}, {4, 5, 2}, {2, 5, 1}});
  NodeState s = NodeState::Unknown(6, 0.25);
  s.SetKnown(0, C);
  s.SetKnown(5, N);
  SpaRcClassifier rc(0.5);
  std::string out;
  for (int cap : {2, 3, 4, 6, 10, 40}) {
    CiConfig cfg = Config(CiMethod::kSpaCi, cap, 1e-6);
    cfg.burn_in = 2;
    cfg.rng_seed = 20260101;
    InferenceResult r = RunInference(g, s, rc, cfg);
    absl::StrAppendFormat(&out, "max_iters=%d iterations=%d stop=%s", cap,
                          r.iterations, StopReasonName(r.stop_reason));
    for (double v : r.scores) absl::StrAppendFormat(&out, " %.17g", v);
    out += "\n";
  }
  return out;
}

TEST(SpaCi, SeededTraceMatchesGolden) {
  const std::string path = std::string(CHURNET_GOLDEN_DIR) + "/spa_ci_6node.txt";
  const std::string trace = SpaCiTrace();
  if (std::getenv("CHURNET_UPDATE_GOLDEN") != nullptr) {
    std::ofstream(path) << trace;
  }
  std::ifstream in(path);
  ASSERT_TRUE(in.good()) << "missing golden file " << path;
  std::stringstream golden;
  golden << in.rdbuf();
  EXPECT_EQ(trace, golden.str());
  EXPECT_EQ(trace, SpaCiTrace());
}

TEST(RunLearner, MissingModelsAndBadState) {
  Star s;
  LearnerSpec spec;
  spec.rc = RcKind::kNlb;
  EXPECT_FALSE(RunLearner(s.graph, s.state, spec, TrainedModels{}).ok());
  spec.rc = RcKind::kCdrn;
  EXPECT_FALSE(RunLearner(s.graph, s.state, spec, TrainedModels{}).ok());
  spec.rc = RcKind::kWvrn;
  EXPECT_FALSE(RunLearner(s.graph, NodeState::Unknown(2, 0.1), spec, {}).ok());
  spec.rc = RcKind::kSpaRc;
  spec.rc_params.spa_spread = 1.0;
  EXPECT_FALSE(RunLearner(s.graph, s.state, spec, {}).ok());
  spec.rc_params.spa_spread = 0.5;
  auto r = RunLearner(s.graph, s.state, spec, {});
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->scores.size(), 5u);
}

}  // namespace
}  // namespace churnet
