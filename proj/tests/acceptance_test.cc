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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "churnet/bench.h"
#include "churnet/stats.h"
#include "oracles.h"

namespace churnet {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
  void Check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      absl::StrAppend(&detail, detail.empty() ? "" : "; ", "failed: ", what);
    }
  }
  void Note(const std::string& what) {
    absl::StrAppend(&detail, detail.empty() ? "" : "; ", what);
  }
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since)
      .count();
}

// ---- 1: metric oracles ----------------------------------------------------

Outcome MetricOracles() {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(0, 1);
  double worst_auc = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 4 + rng() % 120;
    std::vector<double> s(n);
    std::vector<uint8_t> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = rep % 2 ? u(rng) : std::floor(u(rng) * 10);
      y[i] = u(rng) < 0.35;
    }
    y[0] = 1;
    y[1] = 0;
    worst_auc = std::max(worst_auc,
                         std::abs(*Auc(s, y) - oracle::BruteForceAuc(s, y)));
  }
  out.Check(worst_auc <= 1e-9, "AUC vs brute force");
  double worst_h = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 6 + rng() % 30;
    std::vector<double> s(n);
    std::vector<uint8_t> y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = u(rng) < 0.4;
      s[i] = std::round((u(rng) + 0.6 * y[i]) * 20) / 20;
    }
    y[0] = 1;
    y[1] = 0;
    worst_h = std::max(
        worst_h, std::abs(*HMeasure(s, y) - oracle::QuadratureHMeasure(s, y)));
  }
  out.Check(worst_h <= 1e-6, "H-measure vs quadrature");
  int lift_cases = 0, lift_exact = 0;
  for (int n : {100, 200, 1000, 1500}) {
    for (int churners : {2, 5, 20}) {
      for (double p : {0.005, 0.01, 0.05}) {
        std::vector<double> s(n);
        std::vector<uint8_t> y(n, 0);
        for (int i = 0; i < n; ++i) s[i] = n - i;
        for (int c = 0; c < churners; ++c) y[(c * 7) % n] = 1;
        ++lift_cases;
        lift_exact += *Lift(s, y, p) == oracle::CountedLift(s, y, p);
      }
    }
  }
  out.Check(lift_exact == lift_cases, "lift vs counted definition");
  const double secs = Seconds(start);
  out.Check(secs < 10, "runtime under 10 s");
  out.Note(absl::StrFormat(
      "AUC max err %.1e over 200 sets, H max err %.1e over 50 sets, lift "
      "%d/%d exact, %.2f s",
      worst_auc, worst_h, lift_exact, lift_cases, secs));
  return out;
}

// ---- 2: classifier oracles ------------------------------------------------

Outcome ClassifierOracles() {
  Outcome out;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  int graphs = 0;
  for (int rep = 0; rep < 300; ++rep) {
    const int n = 3 + rng() % 4;  // 3..6 nodes
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    GraphBuilder builder(DecayConfig{});
    for (int i = 0; i < n; ++i) builder.AddNode(CustomerId{uint32_t(i)});
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        if (u(rng) < 0.5) continue;
        w(a, b) = w(b, a) = 0.5 + 4 * u(rng);
        builder.Add(CustomerId{uint32_t(a)}, CustomerId{uint32_t(b)}, w(a, b), 0)
            .IgnoreError();
      }
    }
    const CallGraph g = std::move(builder).Build();
    std::vector<double> p(n);
    NodeState state = NodeState::Unknown(n, 0.2);
    for (int i = 0; i < n; ++i) {
      const double r = u(rng);
      if (r < 0.3) {
        state.SetKnown(i, ChurnStatus::kChurner);
      } else if (r < 0.6) {
        state.SetKnown(i, ChurnStatus::kNonChurner);
      } else {
        state.SetEstimate(i, u(rng));
      }
      p[i] = state.p_churn(i);
    }
    ++graphs;
    const CdrnReference ref{{0.3, 0.7}, {0.85, 0.15}};
    const std::vector<double> spa = [&] {
      bool isolated = false;
      for (int i = 0; i < n; ++i) isolated |= w.row(i).sum() == 0;
      return isolated ? std::vector<double>{} : oracle::DenseSpaStep(w, p, 0.35);
    }();
    for (int i = 0; i < n; ++i) {
      double mass = 0, churn = 0;
      bool any = false;
      for (int j = 0; j < n; ++j) {
        mass += w(i, j);
        churn += w(i, j) * p[j];
        any |= w(i, j) > 0 && p[j] > 0.5;
      }
      const double nonchurn = mass - churn;
      // WVRN and NLB features.
      const double wvrn = mass > 0 ? churn / mass : 0.2;
      worst = std::max(worst, std::abs(WvrnScore(g, state, i, 0.2).p_churn - wvrn));
      const NlbFeatures f = NlbFeatureVector(g, state, i);
      const NlbFeatures want = {churn, nonchurn, any ? 1.0 : 0.0,
                                churn > nonchurn ? 1.0 : 0.0};
      for (size_t k = 0; k < kNlbFeatureCount; ++k) {
        worst = std::max(worst, std::abs(f[k] - want[k]));
      }
      // CDRN cosine.
      if (mass > 0) {
        const double v0 = nonchurn / mass, v1 = churn / mass;
        auto cosine = [&](const ClassVector& r) {
          return std::max(0.0, (v0 * r.p_nonchurn + v1 * r.p_churn) /
                                   (std::hypot(v0, v1) *
                                    std::hypot(r.p_nonchurn, r.p_churn)));
        };
        const double s1 = cosine(ref.ref_churn), s0 = cosine(ref.ref_nonchurn);
        worst = std::max(worst, std::abs(CdrnScore(g, state, i, ref, 0.2).p_churn -
                                         s1 / (s0 + s1)));
      }
      if (!spa.empty()) {
        worst = std::max(worst, std::abs(SpaRcScore(g, state, i, 0.35).p_churn - spa[i]));
      }
    }
  }
  out.Check(worst <= 1e-9, "WVRN/CDRN/NLB-features/SPA-RC vs dense oracles");

  double worst_coef = 0;
  int fits = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 r2(seed);
    const int n = 40 + r2() % 60;
    std::vector<ChurnStatus> labels(n);
    for (auto& l : labels) {
      l = u(r2) < 0.3 ? ChurnStatus::kChurner : ChurnStatus::kNonChurner;
    }
    GraphBuilder builder(DecayConfig{});
    for (int i = 0; i < n; ++i) builder.AddNode(CustomerId{uint32_t(i)});
    for (int k = 0; k < 3 * n; ++k) {
      const uint32_t a = r2() % n, b = r2() % n;
      if (labels[a] != labels[b] && u(r2) < 0.5) continue;
      builder.Add(CustomerId{a}, CustomerId{b}, 0.5 + 2 * u(r2), 0).IgnoreError();
    }
    const CallGraph g = std::move(builder).Build();
    const NodeState full = NodeState::FromLabels(labels);
    const double l2 = seed % 2 ? 1e-4 : 1e-2;
    auto model = NlbTrain(g, full, LogisticOptions{l2, 1e-11, 500});
    if (!model.ok()) continue;
    std::vector<double> rows;
    std::vector<uint8_t> y;
    for (NodeIndex i = 0; i < g.num_nodes(); ++i) {
      const NlbFeatures f = NlbFeatureVector(g, full, i);
      rows.insert(rows.end(), f.begin(), f.end());
      y.push_back(labels[i] == ChurnStatus::kChurner);
    }
    const auto beta = oracle::IrlsLogistic(rows, kNlbFeatureCount, y, l2);
    worst_coef = std::max(worst_coef, std::abs(model->intercept - beta[0]));
    for (size_t k = 0; k < kNlbFeatureCount; ++k) {
      worst_coef = std::max(worst_coef, std::abs(model->coefficients[k] - beta[k + 1]));
    }
    ++fits;
  }
  out.Check(fits >= 15, "enough NLB fits");
  out.Check(worst_coef <= 1e-4, "NLB coefficients vs IRLS oracle");
  out.Note(absl::StrFormat(
      "%d graphs of 3-6 nodes, max err %.1e; %d NLB fits, max coefficient "
      "err %.1e",
      graphs, worst, fits, worst_coef));
  return out;
}

// ---- 3: statistical machinery ---------------------------------------------

Outcome Statistics() {
  Outcome out;
  RankTable t{{"a", "b", "c"}, std::vector<std::vector<double>>(10, {1, 2, 3}),
              "m"};
  auto f = FriedmanTest(t);
  out.Check(f.ok() && std::abs(f->statistic - 20) < 1e-12,
            "Friedman statistic 20");
  out.Check(f.ok() && f->p_value < 0.001, "Friedman p < 0.001");
  auto cd = NemenyiCriticalDifference(2, 4, 0.05);
  out.Check(cd.ok() && std::abs(*cd - 0.980) < 5e-4, "Nemenyi CD 0.980");
  std::vector<double> a = {1, 2, 3}, b = {4, 5, 6};
  auto kw = KruskalWallis(a, b);
  out.Check(kw.ok() && std::abs(kw->statistic - 27.0 / 7.0) <= 1e-9,
            "Kruskal-Wallis H = 27/7");
  out.Note(absl::StrFormat("Friedman %.12g (p %.3g), CD %.6f, KW H %.12g",
                           f->statistic, f->p_value, *cd, kw->statistic));
  return out;
}

// ---- 4-6: synthetic benchmark ---------------------------------------------

struct Benchmark {
  bool ok = false;
  std::string error;
  double seconds = 0;
  RunSummary summary;
  CompareReport report;
  fs::path run_dir, compare_dir;
};

Benchmark& SyntheticBenchmark() {
  static Benchmark bench = [] {
    Benchmark b;
    const auto start = std::chrono::steady_clock::now();
    auto gen = LoadGenerateConfig(CHURNET_TABLE3_CONFIG);
    if (!gen.ok()) {
      b.error = std::string(gen.status().message());
      return b;
    }
    ExperimentManifest m;
    m.output_dir = (fs::path(CHURNET_ACCEPTANCE_DIR) / "run").string();
    m.learners = FullLearnerGrid(CiConfig{}, RcParams{});
    for (const NamedSynthConfig& d : gen->datasets) {
      DatasetSpec spec;
      spec.name = d.name;
      spec.synth = d.config;
      m.datasets.push_back(spec);
    }
    fs::remove_all(CHURNET_ACCEPTANCE_DIR);
    auto summary = CmdRun(m, RunOptions{});
    if (!summary.ok()) {
      b.error = std::string(summary.status().message());
      return b;
    }
    b.summary = *summary;
    b.run_dir = m.output_dir;
    b.compare_dir = fs::path(CHURNET_ACCEPTANCE_DIR) / "compare";
    auto rows = ReadEvaluationCsv((b.run_dir / "evaluation.csv").string());
    if (!rows.ok()) {
      b.error = std::string(rows.status().message());
      return b;
    }
    auto report = CmdCompare(*rows, b.compare_dir.string());
    if (!report.ok()) {
      b.error = std::string(report.status().message());
      return b;
    }
    b.report = *report;
    b.seconds = Seconds(start);
    b.ok = true;
    return b;
  }();
  return bench;
}

// 1-based position by average rank; ties resolved in the method's favour.
int Position(const ComparisonSummary& c, const std::string& method) {
  const auto it = std::find(c.methods.begin(), c.methods.end(), method);
  if (it == c.methods.end()) return 1 << 20;
  const double r = c.average_ranks[it - c.methods.begin()];
  return 1 + std::count_if(c.average_ranks.begin(), c.average_ranks.end(),
                           [&](double x) { return x < r; });
}

Outcome BestLearner() {
  Outcome out;
  Benchmark& b = SyntheticBenchmark();
  if (!b.ok) {
    out.Check(false, "benchmark: " + b.error);
    return out;
  }
  out.Check(b.summary.planned == 672 && b.summary.failed == 0,
            "672 runs without failure");
  int top = 0;
  std::string positions;
  for (const char* metric : kMetricNames) {
    const ComparisonSummary* c = b.report.Find("learners", metric);
    if (c == nullptr) continue;
    const int pos = Position(*c, "nlb+none");
    top += pos <= static_cast<int>(c->methods.size()) / 4;
    absl::StrAppend(&positions, positions.empty() ? "" : ", ", metric, " ",
                    pos, "/", c->methods.size());
  }
  out.Check(top >= 3, absl::StrCat("nlb+none in the top quartile on ", top,
                                   " of 4 metrics (need 3)"));
  out.Note(absl::StrFormat("nlb+none positions: %s; %zu runs in %.0f s",
                           positions, b.summary.planned, b.seconds));
  return out;
}

Outcome CiDoesNotHelp() {
  Outcome out;
  Benchmark& b = SyntheticBenchmark();
  if (!b.ok) {
    out.Check(false, "benchmark: " + b.error);
    return out;
  }
  const CiEffectSummary* auc = nullptr;
  for (const CiEffectSummary& e : b.report.ci_effect) {
    if (e.metric == "auc") auc = &e;
  }
  out.Check(auc != nullptr, "Kruskal-Wallis on AUC");
  if (auc == nullptr) return out;
  out.Check(auc->mean_rank_without_ci >= auc->mean_rank_with_ci,
            "without-CI mean rank at least as good as with-CI on AUC");
  for (const char* metric : kMetricNames) {
    const ComparisonSummary* c = b.report.Find("learners", metric);
    out.Check(c != nullptr && c->critical_difference.has_value(),
              absl::StrCat("Friedman/Nemenyi for ", metric));
    for (const char* kind : {"ranks", "nemenyi", "cd"}) {
      out.Check(fs::exists(b.compare_dir / absl::StrCat("learners_", metric,
                                                        "_", kind, ".csv")),
                absl::StrCat("learners_", metric, "_", kind, ".csv"));
    }
  }
  out.Check(fs::exists(b.compare_dir / "report.txt") &&
                fs::exists(b.compare_dir / "report.json"),
            "report files");
  const ComparisonSummary* learners_auc = b.report.Find("learners", "auc");
  out.Note(absl::StrFormat(
      "AUC mean rank without CI %.2f vs with CI %.2f, KW p = %.3g (%s at "
      "0.01); learner Friedman p = %.3g",
      auc->mean_rank_without_ci, auc->mean_rank_with_ci, auc->p_value,
      auc->p_value < 0.01 ? "significant" : "not significant",
      learners_auc ? learners_auc->friedman_p : 1.0));
  return out;
}

std::vector<double> ReadScores(const fs::path& path) {
  std::vector<double> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(std::stod(line.substr(line.find('\t') + 1)));
  }
  return out;
}

Outcome IcIsWorst() {
  Outcome out;
  Benchmark& b = SyntheticBenchmark();
  if (!b.ok) {
    out.Check(false, "benchmark: " + b.error);
    return out;
  }
  int worst = 0;
  std::string where;
  for (const char* metric : kMetricNames) {
    const ComparisonSummary* c = b.report.Find("ci", metric);
    if (c == nullptr) continue;
    const auto last = std::max_element(c->average_ranks.begin(), c->average_ranks.end());
    const std::string loser = c->methods[last - c->average_ranks.begin()];
    worst += loser == "ic";
    absl::StrAppend(&where, where.empty() ? "" : ", ", metric, " worst ", loser);
  }
  out.Check(worst >= 3, absl::StrCat("IC worst CI option on ", worst,
                                     " of 4 metrics (need 3)"));
  int checked = 0, coarse = 0;
  for (const auto& ds : fs::directory_iterator(b.run_dir / "scores")) {
    for (const auto& net : fs::directory_iterator(ds.path())) {
      for (RcKind rc : kAllRcKinds) {
        const auto ic = ReadScores(net.path() / absl::StrCat(RcName(rc), "_ic.tsv"));
        const auto rl = ReadScores(net.path() / absl::StrCat(RcName(rc), "_rl.tsv"));
        if (ic.empty() || rl.empty()) continue;
        ++checked;
        coarse += std::set<double>(ic.begin(), ic.end()).size() <=
                  std::set<double>(rl.begin(), rl.end()).size();
      }
    }
  }
  out.Check(checked == 112 && coarse == checked,
            "|distinct IC scores| <= |distinct RL scores| on every run");
  out.Note(absl::StrFormat("%s; coarseness holds on %d/%d (network, RC) pairs",
                           where, coarse, checked));
  return out;
}

// ---- 7: property suite ----------------------------------------------------

Outcome PropertySuite() {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  const std::string cmd =
      absl::StrCat("\"", CHURNET_PROPERTY_TEST, "\" --gtest_brief=1 > \"",
                   CHURNET_ACCEPTANCE_DIR, "_property.log\" 2>&1");
  const int rc = std::system(cmd.c_str());
  const double secs = Seconds(start);
  out.Check(rc == 0, "property suite passes (see " CHURNET_ACCEPTANCE_DIR
                     "_property.log)");
  out.Check(secs < 120, "property suite under 2 minutes");
  out.Note(absl::StrFormat("property suite %.1f s", secs));
  return out;
}

// ---- 8: scale -------------------------------------------------------------

Outcome Scale() {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  ExperimentManifest m;
  m.output_dir = (fs::path(CHURNET_ACCEPTANCE_DIR) / "scale").string();
  m.learners = FullLearnerGrid(CiConfig{}, RcParams{});
  m.horizons = {Horizon::kShort};
  m.edge_types = {EdgeType::kCallCount};
  DatasetSpec spec;
  spec.name = "million";
  SynthConfig c;
  c.n_customers = 1000000;
  c.target_sparsity = 1e-6;
  c.target_churn_rate = 0.02;
  spec.synth = c;
  m.datasets.push_back(spec);
  fs::remove_all(m.output_dir);
  auto summary = CmdRun(m, RunOptions{});
  const double secs = Seconds(start);
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  const double peak_gb = usage.ru_maxrss / (1024.0 * 1024.0);
  out.Check(summary.ok(), summary.ok() ? "" : std::string(summary.status().message()));
  if (summary.ok()) {
    out.Check(summary->executed + summary->skipped == 24 && summary->failed == 0,
              "24 learners on the million-node network");
  }
  out.Check(peak_gb < 16.0, "peak memory under 16 GB");
  out.Note(absl::StrFormat("1,000,000 nodes, 24 learners in %.0f s, peak RSS %.2f GB",
                           secs, peak_gb));
  return out;
}

}  // namespace
}  // namespace churnet

int main(int argc, char** argv) {
  using namespace churnet;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"metric oracles", MetricOracles},
      {"classifier oracles", ClassifierOracles},
      {"statistical machinery", Statistics},
      {"best learner is NLB without CI", BestLearner},
      {"CI does not help", CiDoesNotHelp},
      {"IC is the worst CI", IcIsWorst},
      {"invariant suites", PropertySuite},
      {"million-node scale", Scale},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.contains(id)) continue;
    const Outcome o = criteria[i].second();
    failed += !o.pass;
    std::printf("CRITERION %d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL",
                criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
