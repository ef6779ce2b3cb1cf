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

#include "churnet/bench.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"
#include <yaml-cpp/yaml.h>

#include "absl/container/flat_hash_set.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/time/clock.h"
#include "absl/time/time.h"
#include "churnet/random.h"
#include "churnet/stats.h"

namespace churnet {
namespace fs = std::filesystem;
namespace {

absl::Status ConfigError(const std::string& where, const std::string& what) {
  return absl::InvalidArgumentError(absl::StrCat(where, ": ", what));
}

absl::StatusOr<std::string> ReadWholeFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

absl::Status WriteWholeFile(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", tmp));
    out << body;
    out.close();
    if (!out) return absl::DataLossError(absl::StrCat("write failed: ", tmp));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    return absl::UnavailableError(
        absl::StrCat("cannot rename ", tmp, ": ", ec.message()));
  }
  return absl::OkStatus();
}

absl::Status MakeDirs(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    return absl::UnavailableError(
        absl::StrCat("cannot create ", dir, ": ", ec.message()));
  }
  return absl::OkStatus();
}

uint64_t Fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ValidName(const std::string& name) {
  return !name.empty() &&
         std::all_of(name.begin(), name.end(), [](unsigned char c) {
           return std::isalnum(c) || c == '_' || c == '-' || c == '.';
         });
}

template <typename T>
absl::StatusOr<T> As(const YAML::Node& node, const std::string& where) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception& e) {
    return ConfigError(where, e.what());
  }
}

// Applies the synth keys present in `node` on top of `config`.
absl::Status ApplySynthKeys(const YAML::Node& node, const std::string& where,
                            SynthConfig* config, bool allow_name) {
  if (!node.IsMap()) return ConfigError(where, "expected a mapping");
  std::optional<double> average_degree;
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const std::string at = absl::StrCat(where, ".", key);
    const YAML::Node& v = kv.second;
    absl::Status s;
    auto set_double = [&](double* out) {
      absl::StatusOr<double> d = As<double>(v, at);
      if (!d.ok()) return d.status();
      *out = *d;
      return absl::OkStatus();
    };
    if (key == "n_customers") {
      absl::StatusOr<int64_t> n = As<int64_t>(v, at);
      if (!n.ok()) return n.status();
      config->n_customers = *n;
    } else if (key == "months") {
      absl::StatusOr<int32_t> m = As<int32_t>(v, at);
      if (!m.ok()) return m.status();
      config->months = *m;
    } else if (key == "rng_seed" || key == "seed") {
      absl::StatusOr<uint64_t> seed = As<uint64_t>(v, at);
      if (!seed.ok()) return seed.status();
      config->rng_seed = *seed;
    } else if (key == "target_churn_rate") {
      s = set_double(&config->target_churn_rate);
    } else if (key == "target_sparsity") {
      s = set_double(&config->target_sparsity);
    } else if (key == "average_degree") {
      double d = 0;
      s = set_double(&d);
      average_degree = d;
    } else if (key == "homophily_strength") {
      s = set_double(&config->homophily_strength);
    } else if (key == "calls_per_edge_per_month") {
      s = set_double(&config->calls_per_edge_per_month);
    } else if (key == "duration_mean_s") {
      s = set_double(&config->duration_mean_s);
    } else if (key == "offnet_calls_per_month") {
      s = set_double(&config->offnet_calls_per_month);
    } else if (!(allow_name && key == "name")) {
      return ConfigError(at, "unknown key");
    }
    if (!s.ok()) return s;
  }
  if (average_degree.has_value()) {
    config->target_sparsity =
        *average_degree / static_cast<double>(config->n_customers);
  }
  return absl::OkStatus();
}

absl::StatusOr<YAML::Node> LoadYaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("YAML: ", e.what()));
  }
}

std::string ResolvePath(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || base_dir.empty()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

std::string NowUtc() {
  return absl::FormatTime("%Y-%m-%dT%H:%M:%E3SZ", absl::Now(),
                          absl::UTCTimeZone());
}

std::string Num(double v) { return absl::StrFormat("%.12g", v); }

int GridPosition(const std::string& rc, const std::string& ci) {
  absl::StatusOr<RcKind> r = ParseRcKind(rc);
  absl::StatusOr<CiMethod> c = ParseCiMethod(ci);
  if (!r.ok() || !c.ok()) return 1 << 20;
  return static_cast<int>(*r) * 16 + static_cast<int>(*c);
}

int HorizonPosition(const std::string& h) {
  absl::StatusOr<Horizon> p = ParseHorizon(h);
  return p.ok() ? static_cast<int>(*p) : 99;
}

int EdgePosition(const std::string& e) {
  absl::StatusOr<EdgeType> p = ParseEdgeType(e);
  return p.ok() ? static_cast<int>(*p) : 99;
}

}  // namespace

// ---- generate ----------------------------------------------------------

absl::StatusOr<GenerateConfig> ParseGenerateConfig(const std::string& yaml) {
  absl::StatusOr<YAML::Node> root = LoadYaml(yaml);
  if (!root.ok()) return root.status();
  if (!root->IsMap()) return ConfigError("config", "expected a mapping");
  GenerateConfig out;
  SynthConfig defaults;
  uint64_t base_seed = 1;
  bool seed_given = false;
  for (const auto& kv : *root) {
    const std::string key = kv.first.as<std::string>();
    if (key == "gzip") {
      absl::StatusOr<bool> g = As<bool>(kv.second, "gzip");
      if (!g.ok()) return g.status();
      out.gzip = *g;
    } else if (key == "seed") {
      absl::StatusOr<uint64_t> s = As<uint64_t>(kv.second, "seed");
      if (!s.ok()) return s.status();
      base_seed = *s;
      seed_given = true;
    } else if (key == "defaults") {
      if (absl::Status s =
              ApplySynthKeys(kv.second, "defaults", &defaults, false);
          !s.ok()) {
        return s;
      }
    } else if (key != "datasets") {
      return ConfigError(key, "unknown key");
    }
  }
  const YAML::Node datasets = (*root)["datasets"];
  if (!datasets || !datasets.IsSequence() || datasets.size() == 0) {
    return ConfigError("datasets", "expected a non-empty list");
  }
  std::set<std::string> names;
  for (size_t i = 0; i < datasets.size(); ++i) {
    const std::string where = absl::StrCat("datasets[", i, "]");
    const YAML::Node d = datasets[i];
    if (!d.IsMap() || !d["name"]) return ConfigError(where, "missing name");
    NamedSynthConfig named;
    named.name = d["name"].as<std::string>();
    if (!ValidName(named.name)) {
      return ConfigError(where, "name must match [A-Za-z0-9_.-]+");
    }
    if (!names.insert(named.name).second) {
      return ConfigError(where, absl::StrCat("duplicate name ", named.name));
    }
    named.config = defaults;
    if (!d["rng_seed"] && !d["seed"]) {
      named.config.rng_seed =
          seed_given ? Mix64(base_seed ^ Fnv1a64(named.name))
                     : defaults.rng_seed;
    }
    // Average degree is relative to the final customer count.
    if (absl::Status s = ApplySynthKeys(d, where, &named.config, true);
        !s.ok()) {
      return s;
    }
    if (absl::Status s = named.config.Validate(); !s.ok()) {
      return ConfigError(where, std::string(s.message()));
    }
    out.datasets.push_back(std::move(named));
  }
  return out;
}

absl::StatusOr<GenerateConfig> LoadGenerateConfig(const std::string& path) {
  absl::StatusOr<std::string> text = ReadWholeFile(path);
  if (!text.ok()) return text.status();
  return ParseGenerateConfig(*text);
}

absl::Status CmdGenerate(const GenerateConfig& config,
                         const std::string& out_dir) {
  if (absl::Status s = MakeDirs(out_dir); !s.ok()) return s;
  YAML::Emitter manifest;
  manifest << YAML::BeginMap;
  manifest << YAML::Key << "decay_gamma" << YAML::Value << kDefaultDecayGamma;
  manifest << YAML::Key << "datasets" << YAML::Value << YAML::BeginSeq;
  for (const NamedSynthConfig& d : config.datasets) {
    absl::StatusOr<SynthDataset> data = Generate(d.config);
    if (!data.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat(d.name, ": ", data.status().message()));
    }
    const std::string cdr =
        absl::StrCat(d.name, ".cdr.tsv", config.gzip ? ".gz" : "");
    const std::string truth = absl::StrCat(d.name, ".truth.tsv");
    const std::string members = absl::StrCat(d.name, ".members.txt");
    const fs::path dir(out_dir);
    if (absl::Status s = WriteCdrFile(data->records, data->registry,
                                      (dir / cdr).string(), config.gzip);
        !s.ok()) {
      return s;
    }
    if (absl::Status s = WriteGroundTruth(*data, (dir / truth).string());
        !s.ok()) {
      return s;
    }
    if (absl::Status s = WriteMembers(*data, (dir / members).string());
        !s.ok()) {
      return s;
    }
    manifest << YAML::BeginMap;
    manifest << YAML::Key << "name" << YAML::Value << d.name;
    manifest << YAML::Key << "cdr" << YAML::Value << cdr;
    manifest << YAML::Key << "members" << YAML::Value << members;
    manifest << YAML::EndMap;
  }
  manifest << YAML::EndSeq << YAML::EndMap;
  return WriteWholeFile((fs::path(out_dir) / "manifest.yaml").string(),
                        std::string(manifest.c_str()) + "\n");
}

// ---- manifest ----------------------------------------------------------

absl::StatusOr<ExperimentManifest> ParseManifest(const std::string& yaml,
                                                 const std::string& base_dir) {
  absl::StatusOr<YAML::Node> root = LoadYaml(yaml);
  if (!root.ok()) return root.status();
  if (!root->IsMap()) return ConfigError("manifest", "expected a mapping");
  ExperimentManifest m;
  CiConfig ci;
  RcParams rc_params;
  std::optional<std::vector<std::string>> learner_names;
  for (const auto& kv : *root) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    if (key == "output_dir") {
      absl::StatusOr<std::string> s = As<std::string>(v, key);
      if (!s.ok()) return s.status();
      m.output_dir = ResolvePath(base_dir, *s);
    } else if (key == "seed") {
      absl::StatusOr<uint64_t> s = As<uint64_t>(v, key);
      if (!s.ok()) return s.status();
      m.seed = *s;
    } else if (key == "decay_gamma") {
      absl::StatusOr<double> g = As<double>(v, key);
      if (!g.ok()) return g.status();
      m.decay_gamma = *g;
    } else if (key == "jobs") {
      absl::StatusOr<int> j = As<int>(v, key);
      if (!j.ok()) return j.status();
      m.jobs = *j;
    } else if (key == "horizons") {
      absl::StatusOr<std::vector<std::string>> list =
          As<std::vector<std::string>>(v, key);
      if (!list.ok()) return list.status();
      m.horizons.clear();
      for (const std::string& h : *list) {
        absl::StatusOr<Horizon> p = ParseHorizon(h);
        if (!p.ok()) return ConfigError(key, std::string(p.status().message()));
        m.horizons.push_back(*p);
      }
    } else if (key == "edge_types") {
      absl::StatusOr<std::vector<std::string>> list =
          As<std::vector<std::string>>(v, key);
      if (!list.ok()) return list.status();
      m.edge_types.clear();
      for (const std::string& e : *list) {
        absl::StatusOr<EdgeType> p = ParseEdgeType(e);
        if (!p.ok()) return ConfigError(key, std::string(p.status().message()));
        m.edge_types.push_back(*p);
      }
    } else if (key == "learners") {
      if (v.IsScalar() && v.as<std::string>() == "all") {
        learner_names.reset();
      } else {
        absl::StatusOr<std::vector<std::string>> list =
            As<std::vector<std::string>>(v, key);
        if (!list.ok()) return list.status();
        learner_names = *list;
      }
    } else if (key == "collective_inference") {
      if (!v.IsMap()) return ConfigError(key, "expected a mapping");
      for (const auto& p : v) {
        const std::string k = p.first.as<std::string>();
        const std::string at = absl::StrCat(key, ".", k);
        absl::StatusOr<double> d = As<double>(p.second, at);
        if (!d.ok()) return d.status();
        if (k == "max_iters") {
          ci.max_iters = static_cast<int>(*d);
        } else if (k == "burn_in") {
          ci.burn_in = static_cast<int>(*d);
        } else if (k == "early_stop_threshold") {
          ci.early_stop_threshold = *d;
        } else if (k == "rl_beta0") {
          ci.rl_beta0 = *d;
        } else if (k == "rl_decay") {
          ci.rl_decay = *d;
        } else {
          return ConfigError(at, "unknown key");
        }
      }
    } else if (key == "relational_classifiers") {
      if (!v.IsMap()) return ConfigError(key, "expected a mapping");
      for (const auto& p : v) {
        const std::string k = p.first.as<std::string>();
        const std::string at = absl::StrCat(key, ".", k);
        if (k != "spa_spread") return ConfigError(at, "unknown key");
        absl::StatusOr<double> d = As<double>(p.second, at);
        if (!d.ok()) return d.status();
        rc_params.spa_spread = *d;
      }
    } else if (key == "nlb") {
      if (!v.IsMap()) return ConfigError(key, "expected a mapping");
      for (const auto& p : v) {
        const std::string k = p.first.as<std::string>();
        const std::string at = absl::StrCat(key, ".", k);
        absl::StatusOr<double> d = As<double>(p.second, at);
        if (!d.ok()) return d.status();
        if (k == "l2") {
          m.nlb.l2 = *d;
        } else if (k == "gradient_tolerance") {
          m.nlb.gradient_tolerance = *d;
        } else if (k == "max_iterations") {
          m.nlb.max_iterations = static_cast<int>(*d);
        } else {
          return ConfigError(at, "unknown key");
        }
      }
    } else if (key != "datasets") {
      return ConfigError(key, "unknown key");
    }
  }
  if (!(m.decay_gamma >= 0.0) || !std::isfinite(m.decay_gamma)) {
    return ConfigError("decay_gamma", "must be a finite value >= 0");
  }
  if (m.horizons.empty() || m.edge_types.empty()) {
    return ConfigError("manifest", "horizons and edge_types must be non-empty");
  }
  if (absl::Status s = ci.Validate(); !s.ok()) {
    return ConfigError("collective_inference", std::string(s.message()));
  }
  if (!(rc_params.spa_spread >= 0.0 && rc_params.spa_spread < 1.0)) {
    return ConfigError("relational_classifiers.spa_spread",
                       "must lie in [0, 1)");
  }
  const std::vector<LearnerSpec> grid = FullLearnerGrid(ci, rc_params);
  if (!learner_names.has_value()) {
    m.learners = grid;
  } else {
    for (const std::string& name : *learner_names) {
      auto it = std::find_if(grid.begin(), grid.end(), [&](const auto& l) {
        return l.name() == name;
      });
      if (it == grid.end()) {
        return ConfigError("learners", absl::StrCat("unknown learner ", name,
                                                    " (expected rc+ci)"));
      }
      m.learners.push_back(*it);
    }
    if (m.learners.empty()) return ConfigError("learners", "empty list");
  }

  const YAML::Node datasets = (*root)["datasets"];
  if (!datasets || !datasets.IsSequence() || datasets.size() == 0) {
    return ConfigError("datasets", "expected a non-empty list");
  }
  std::set<std::string> names;
  for (size_t i = 0; i < datasets.size(); ++i) {
    const std::string where = absl::StrCat("datasets[", i, "]");
    const YAML::Node d = datasets[i];
    if (!d.IsMap() || !d["name"]) return ConfigError(where, "missing name");
    DatasetSpec spec;
    for (const auto& kv : d) {
      const std::string k = kv.first.as<std::string>();
      const std::string at = absl::StrCat(where, ".", k);
      if (k == "name") {
        spec.name = kv.second.as<std::string>();
      } else if (k == "cdr") {
        spec.cdr_path = ResolvePath(base_dir, kv.second.as<std::string>());
      } else if (k == "members") {
        spec.members_path = ResolvePath(base_dir, kv.second.as<std::string>());
      } else if (k == "synth") {
        SynthConfig synth;
        if (absl::Status s = ApplySynthKeys(kv.second, at, &synth, false);
            !s.ok()) {
          return s;
        }
        if (absl::Status s = synth.Validate(); !s.ok()) {
          return ConfigError(at, std::string(s.message()));
        }
        spec.synth = synth;
      } else if (k == "month_starts") {
        absl::StatusOr<std::vector<int32_t>> starts =
            As<std::vector<int32_t>>(kv.second, at);
        if (!starts.ok()) return starts.status();
        if (starts->size() != 6) {
          return ConfigError(at, "expected six month start days");
        }
        std::copy(starts->begin(), starts->end(), spec.month_starts.begin());
      } else if (k == "observation_end") {
        absl::StatusOr<int32_t> e = As<int32_t>(kv.second, at);
        if (!e.ok()) return e.status();
        spec.observation_end = *e;
      } else {
        return ConfigError(at, "unknown key");
      }
    }
    if (!ValidName(spec.name)) {
      return ConfigError(where, "name must match [A-Za-z0-9_.-]+");
    }
    if (!names.insert(spec.name).second) {
      return ConfigError(where, absl::StrCat("duplicate name ", spec.name));
    }
    if (spec.synth.has_value() == !spec.cdr_path.empty()) {
      return ConfigError(where, "give exactly one of cdr or synth");
    }
    TimelineConfig timeline;
    timeline.month_starts = spec.month_starts;
    timeline.observation_end = spec.observation_end;
    if (absl::Status s = timeline.Validate(); !s.ok()) {
      return ConfigError(where, std::string(s.message()));
    }
    m.datasets.push_back(std::move(spec));
  }
  return m;
}

absl::StatusOr<ExperimentManifest> LoadManifest(const std::string& path) {
  absl::StatusOr<std::string> text = ReadWholeFile(path);
  if (!text.ok()) return text.status();
  return ParseManifest(*text, fs::path(path).parent_path().string());
}

// ---- run ids -----------------------------------------------------------

uint64_t RunId(const RunKey& key, double decay_gamma) {
  const CiConfig& ci = key.learner.ci;
  const std::string canonical = absl::StrFormat(
      "dataset=%s|horizon=%s|edge=%s|rc=%s|ci=%s|gamma=%.17g|max_iters=%d|"
      "burn_in=%d|threshold=%.17g|beta0=%.17g|decay=%.17g|spread=%.17g",
      key.dataset, HorizonName(key.horizon), EdgeTypeName(key.edge_type),
      RcName(key.learner.rc), CiName(ci.method), decay_gamma, ci.max_iters,
      ci.burn_in, ci.early_stop_threshold, ci.rl_beta0, ci.rl_decay,
      key.learner.rc_params.spa_spread);
  return Fnv1a64(canonical);
}

std::string RunIdHex(uint64_t run_id) {
  return absl::StrFormat("%016x", run_id);
}

uint64_t RunSeed(uint64_t global_seed, uint64_t run_id) {
  return Mix64(global_seed ^ run_id);
}

// ---- one network -------------------------------------------------------

absl::StatusOr<PreparedNetwork> PrepareNetwork(
    std::span<const CdrRecord> filtered, const ChurnSchedule& schedule,
    const CustomerRegistry& registry, const TimelineConfig& timeline,
    double decay_gamma, const LogisticOptions& nlb) {
  PreparedNetwork net;
  absl::StatusOr<ExperimentWindows> windows =
      BuildWindows(filtered, schedule, timeline, DecayConfig{decay_gamma, 0.0});
  if (!windows.ok()) return windows.status();
  net.windows = *std::move(windows);
  const ExperimentWindows& w = net.windows;

  const NodeState pretrain = NodeState::FromLabels(w.pretrain_labels);
  absl::StatusOr<CdrnReference> cdrn = CdrnTrain(w.pretrain_graph, pretrain);
  if (cdrn.ok()) {
    net.models.cdrn = *cdrn;
  } else {
    net.cdrn_status = cdrn.status();
  }
  absl::StatusOr<NlbModel> model = NlbTrain(w.pretrain_graph, pretrain, nlb);
  if (model.ok()) {
    net.models.nlb = *model;
  } else {
    net.nlb_status = model.status();
  }

  const size_t n = w.train_graph.num_nodes();
  const size_t churners = std::count(w.train_labels.begin(),
                                     w.train_labels.end(), ChurnStatus::kChurner);
  net.models.prior = n == 0 ? 0.0 : static_cast<double>(churners) / n;
  net.initial = NodeState::Unknown(n, net.models.prior);
  for (NodeIndex i = 0; i < n; ++i) {
    if (w.train_labels[i] == ChurnStatus::kChurner) {
      net.initial.SetKnown(i, ChurnStatus::kChurner);
    }
  }

  const size_t m = w.evaluation_nodes.size();
  net.evaluation_ids.reserve(m);
  for (NodeIndex i : w.evaluation_nodes) {
    net.evaluation_ids.push_back(
        registry.Name(w.train_graph.customer(i)));
  }
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return net.evaluation_ids[a] < net.evaluation_ids[b];
  });
  net.tie_keys.resize(m);
  for (size_t r = 0; r < m; ++r) net.tie_keys[order[r]] = r;
  return net;
}

absl::StatusOr<LearnerOutcome> RunOneLearner(const PreparedNetwork& network,
                                             const LearnerSpec& learner) {
  if (learner.rc == RcKind::kCdrn && !network.models.cdrn) {
    return absl::FailedPreconditionError(absl::StrCat(
        "CDRN reference unavailable: ", network.cdrn_status.message()));
  }
  if (learner.rc == RcKind::kNlb && !network.models.nlb) {
    return absl::FailedPreconditionError(absl::StrCat(
        "NLB model unavailable: ", network.nlb_status.message()));
  }
  LearnerOutcome out;
  absl::StatusOr<InferenceResult> inference =
      RunLearner(network.windows.train_graph, network.initial, learner,
                 network.models);
  if (!inference.ok()) return inference.status();
  out.inference = *std::move(inference);
  const auto& nodes = network.windows.evaluation_nodes;
  out.evaluation_scores.reserve(nodes.size());
  for (NodeIndex i : nodes) out.evaluation_scores.push_back(out.inference.scores[i]);
  absl::StatusOr<EvaluationReport> report =
      Evaluate(out.evaluation_scores, network.windows.predict_labels,
               network.tie_keys);
  if (!report.ok()) return report.status();
  out.report = *report;
  return out;
}

// ---- evaluation csv ----------------------------------------------------

std::string FormatEvaluationRow(const EvaluationRow& r) {
  return absl::StrCat(r.dataset, ",", r.horizon, ",", r.edge_type, ",", r.rc,
                      ",", r.ci, ",", Num(r.report.lift_05), ",",
                      Num(r.report.lift_1), ",", Num(r.report.auc), ",",
                      Num(r.report.h_measure), ",", r.report.population, ",",
                      Num(r.report.base_rate), ",", r.iterations);
}

absl::StatusOr<std::vector<EvaluationRow>> ReadEvaluationCsv(
    const std::string& path) {
  absl::StatusOr<std::string> text = ReadWholeFile(path);
  if (!text.ok()) return text.status();
  std::vector<EvaluationRow> rows;
  size_t line_no = 0;
  for (absl::string_view line : absl::StrSplit(*text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kEvaluationHeader) {
        return absl::InvalidArgumentError(
            absl::StrCat(path, ": unexpected header"));
      }
      continue;
    }
    std::vector<std::string> f = absl::StrSplit(line, ',');
    EvaluationRow r;
    bool ok = f.size() == 12;
    if (ok) {
      r.dataset = f[0];
      r.horizon = f[1];
      r.edge_type = f[2];
      r.rc = f[3];
      r.ci = f[4];
      ok = absl::SimpleAtod(f[5], &r.report.lift_05) &&
           absl::SimpleAtod(f[6], &r.report.lift_1) &&
           absl::SimpleAtod(f[7], &r.report.auc) &&
           absl::SimpleAtod(f[8], &r.report.h_measure) &&
           absl::SimpleAtoi(f[9], &r.report.population) &&
           absl::SimpleAtod(f[10], &r.report.base_rate) &&
           absl::SimpleAtoi(f[11], &r.iterations);
    }
    if (!ok) {
      return absl::InvalidArgumentError(
          absl::StrCat(path, ":", line_no, ": malformed row"));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void SortEvaluationRows(std::vector<EvaluationRow>& rows) {
  auto key = [](const EvaluationRow& r) {
    return std::make_tuple(r.dataset, HorizonPosition(r.horizon), r.horizon,
                           EdgePosition(r.edge_type), r.edge_type,
                           GridPosition(r.rc, r.ci), r.rc, r.ci);
  };
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const EvaluationRow& a, const EvaluationRow& b) {
                     return key(a) < key(b);
                   });
}

namespace {

struct LoadedDataset {
  CustomerRegistry registry;
  std::vector<CdrRecord> filtered;
  ChurnSchedule schedule;
};

absl::StatusOr<LoadedDataset> LoadDataset(const DatasetSpec& spec) {
  LoadedDataset out;
  std::vector<CdrRecord> records;
  CustomerSet members;
  bool have_members = false;
  if (spec.synth.has_value()) {
    absl::StatusOr<SynthDataset> data = Generate(*spec.synth);
    if (!data.ok()) return data.status();
    out.registry = std::move(data->registry);
    records = std::move(data->records);
    members.insert(data->members.begin(), data->members.end());
    have_members = true;
  } else {
    absl::StatusOr<std::vector<CdrRecord>> r =
        ReadCdrFile(spec.cdr_path, out.registry, nullptr);
    if (!r.ok()) return r.status();
    records = *std::move(r);
    if (!spec.members_path.empty()) {
      absl::StatusOr<CustomerSet> m =
          ReadMembersFile(spec.members_path, out.registry);
      if (!m.ok()) return m.status();
      members = *std::move(m);
      have_members = true;
    }
  }
  const CustomerSet* population = have_members ? &members : nullptr;
  out.schedule =
      ChurnSchedule::Compute(records, spec.observation_end, population);
  out.filtered = FilterRecords(records, population);
  return out;
}

bool MatchesFilter(const LearnerSpec& l, const RunOptions& options) {
  if (!options.filter) return true;
  const auto& [rc, ci] = *options.filter;
  return (rc == "*" || rc == RcName(l.rc)) &&
         (ci == "*" || ci == CiName(l.ci.method));
}

class RunWriter {
 public:
  explicit RunWriter(const fs::path& dir) : dir_(dir) {}

  absl::Status Open() {
    const bool fresh = !fs::exists(dir_ / "evaluation.csv");
    eval_.open(dir_ / "evaluation.csv", std::ios::app | std::ios::binary);
    done_.open(dir_ / "runs.done", std::ios::app | std::ios::binary);
    jsonl_.open(dir_ / "runs.jsonl", std::ios::app | std::ios::binary);
    failures_.open(dir_ / "failures.tsv", std::ios::trunc | std::ios::binary);
    if (!eval_ || !done_ || !jsonl_ || !failures_) {
      return absl::UnavailableError(
          absl::StrCat("cannot open run outputs in ", dir_.string()));
    }
    if (fresh) eval_ << kEvaluationHeader << "\n" << std::flush;
    failures_ << "run_id\tdataset\thorizon\tedge_type\tlearner\terror\n"
              << std::flush;
    return absl::OkStatus();
  }

  void Success(uint64_t run_id, const EvaluationRow& row,
               const nlohmann::json& log) {
    std::lock_guard<std::mutex> lock(mu_);
    eval_ << FormatEvaluationRow(row) << "\n" << std::flush;
    jsonl_ << log.dump() << "\n" << std::flush;
    done_ << RunIdHex(run_id) << "\n" << std::flush;
  }

  void Failure(uint64_t run_id, const RunKey& key, const absl::Status& status,
               nlohmann::json log) {
    std::string message(status.message());
    std::replace(message.begin(), message.end(), '\t', ' ');
    std::replace(message.begin(), message.end(), '\n', ' ');
    std::lock_guard<std::mutex> lock(mu_);
    failures_ << RunIdHex(run_id) << "\t" << key.dataset << "\t"
              << HorizonName(key.horizon) << "\t"
              << EdgeTypeName(key.edge_type) << "\t" << key.learner.name()
              << "\t" << message << "\n"
              << std::flush;
    log["status"] = "failed";
    log["error"] = message;
    jsonl_ << log.dump() << "\n" << std::flush;
  }

 private:
  fs::path dir_;
  std::mutex mu_;
  std::ofstream eval_;
  std::ofstream done_;
  std::ofstream jsonl_;
  std::ofstream failures_;
};

absl::Status WriteScoreFile(const fs::path& path, uint64_t run_id,
                            uint64_t seed, const PreparedNetwork& net,
                            const LearnerOutcome& outcome) {
  std::string body = absl::StrFormat(
      "# run_id=%s seed=%d iterations=%d stop_reason=%s\n", RunIdHex(run_id),
      seed, outcome.inference.iterations,
      StopReasonName(outcome.inference.stop_reason));
  for (size_t k = 0; k < net.evaluation_ids.size(); ++k) {
    absl::StrAppend(&body, net.evaluation_ids[k], "\t",
                    absl::StrFormat("%.17g", outcome.evaluation_scores[k]),
                    "\n");
  }
  return WriteWholeFile(path.string(), body);
}

// Rewrites evaluation.csv deduplicated (last row wins) in canonical order.
absl::Status CanonicaliseEvaluation(const fs::path& path) {
  absl::StatusOr<std::vector<EvaluationRow>> rows =
      ReadEvaluationCsv(path.string());
  if (!rows.ok()) return rows.status();
  std::map<std::tuple<std::string, std::string, std::string, std::string,
                      std::string>,
           EvaluationRow>
      unique;
  for (EvaluationRow& r : *rows) {
    unique[{r.dataset, r.horizon, r.edge_type, r.rc, r.ci}] = std::move(r);
  }
  std::vector<EvaluationRow> sorted;
  for (auto& [k, r] : unique) sorted.push_back(std::move(r));
  SortEvaluationRows(sorted);
  std::string body = absl::StrCat(kEvaluationHeader, "\n");
  for (const EvaluationRow& r : sorted) {
    absl::StrAppend(&body, FormatEvaluationRow(r), "\n");
  }
  return WriteWholeFile(path.string(), body);
}

}  // namespace

absl::StatusOr<RunSummary> CmdRun(const ExperimentManifest& manifest,
                                  const RunOptions& options) {
  if (manifest.output_dir.empty()) {
    return absl::InvalidArgumentError("no output directory given");
  }
  const fs::path out_dir(manifest.output_dir);
  if (absl::Status s = MakeDirs(out_dir.string()); !s.ok()) return s;

  std::vector<LearnerSpec> learners;
  for (const LearnerSpec& l : manifest.learners) {
    if (MatchesFilter(l, options)) learners.push_back(l);
  }
  if (learners.empty()) {
    return absl::InvalidArgumentError("the learner filter matches nothing");
  }
  int jobs = options.jobs > 0 ? options.jobs : manifest.jobs;
  if (jobs <= 0) jobs = std::max(1u, std::thread::hardware_concurrency());

  absl::flat_hash_set<uint64_t> done;
  if (absl::StatusOr<std::string> text =
          ReadWholeFile((out_dir / "runs.done").string());
      text.ok()) {
    for (absl::string_view line : absl::StrSplit(*text, '\n')) {
      uint64_t id = 0;
      const auto [end, ec] =
          std::from_chars(line.data(), line.data() + line.size(), id, 16);
      if (ec == std::errc() && end == line.data() + line.size() &&
          !line.empty()) {
        done.insert(id);
      }
    }
  }
  RunWriter writer(out_dir);
  if (absl::Status s = writer.Open(); !s.ok()) return s;

  RunSummary summary;
  std::atomic<size_t> executed{0};
  std::atomic<size_t> failed{0};
  for (const DatasetSpec& dataset : manifest.datasets) {
    // Pending runs per network.
    struct Pending {
      TimelineConfig timeline;
      std::vector<std::pair<RunKey, uint64_t>> runs;
    };
    std::vector<Pending> networks;
    for (Horizon h : manifest.horizons) {
      for (EdgeType e : manifest.edge_types) {
        Pending p;
        p.timeline.month_starts = dataset.month_starts;
        p.timeline.observation_end = dataset.observation_end;
        p.timeline.horizon = h;
        p.timeline.edge_type = e;
        for (const LearnerSpec& l : learners) {
          RunKey key{dataset.name, h, e, l};
          const uint64_t id = RunId(key, manifest.decay_gamma);
          ++summary.planned;
          if (done.contains(id)) {
            ++summary.skipped;
          } else {
            p.runs.emplace_back(std::move(key), id);
          }
        }
        if (!p.runs.empty()) networks.push_back(std::move(p));
      }
    }
    if (networks.empty()) continue;

    auto fail_all = [&](const Pending& p, const absl::Status& status) {
      for (const auto& [key, id] : p.runs) {
        nlohmann::json log = {{"run_id", RunIdHex(id)},
                              {"dataset", key.dataset},
                              {"learner", key.learner.name()},
                              {"started", NowUtc()}};
        writer.Failure(id, key, status, log);
        ++failed;
      }
    };
    absl::StatusOr<LoadedDataset> data = LoadDataset(dataset);
    if (!data.ok()) {
      for (const Pending& p : networks) fail_all(p, data.status());
      continue;
    }
    for (const Pending& p : networks) {
      absl::StatusOr<PreparedNetwork> net =
          PrepareNetwork(data->filtered, data->schedule, data->registry,
                         p.timeline, manifest.decay_gamma, manifest.nlb);
      if (!net.ok()) {
        fail_all(p, net.status());
        continue;
      }
      const fs::path score_dir =
          out_dir / "scores" / dataset.name /
          absl::StrCat(HorizonName(p.timeline.horizon), "_",
                       EdgeTypeName(p.timeline.edge_type));
      if (absl::Status s = MakeDirs(score_dir.string()); !s.ok()) {
        fail_all(p, s);
        continue;
      }
      std::atomic<size_t> next{0};
      auto worker = [&]() {
        for (size_t k = next++; k < p.runs.size(); k = next++) {
          const auto& [key, id] = p.runs[k];
          LearnerSpec learner = key.learner;
          learner.ci.rng_seed = RunSeed(manifest.seed, id);
          nlohmann::json log = {
              {"run_id", RunIdHex(id)},     {"dataset", key.dataset},
              {"horizon", HorizonName(key.horizon)},
              {"edge_type", EdgeTypeName(key.edge_type)},
              {"learner", learner.name()}, {"seed", learner.ci.rng_seed},
              {"started", NowUtc()}};
          const absl::Time start = absl::Now();
          absl::StatusOr<LearnerOutcome> outcome =
              RunOneLearner(*net, learner);
          absl::Status status = outcome.status();
          if (status.ok()) {
            status = WriteScoreFile(
                score_dir / absl::StrCat(RcName(learner.rc), "_",
                                         CiName(learner.ci.method), ".tsv"),
                id, learner.ci.rng_seed, *net, *outcome);
          }
          log["finished"] = NowUtc();
          log["seconds"] = absl::ToDoubleSeconds(absl::Now() - start);
          if (!status.ok()) {
            writer.Failure(id, key, status, log);
            ++failed;
            continue;
          }
          log["status"] = "ok";
          log["iterations"] = outcome->inference.iterations;
          log["stop_reason"] = StopReasonName(outcome->inference.stop_reason);
          EvaluationRow row{key.dataset,
                            HorizonName(key.horizon),
                            EdgeTypeName(key.edge_type),
                            RcName(learner.rc),
                            CiName(learner.ci.method),
                            outcome->report,
                            outcome->inference.iterations};
          writer.Success(id, row, log);
          ++executed;
        }
      };
      const int threads =
          std::min<int>(jobs, static_cast<int>(p.runs.size()));
      std::vector<std::thread> pool;
      for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
      worker();
      for (std::thread& t : pool) t.join();
    }
  }
  summary.executed = executed;
  summary.failed = failed;
  if (absl::Status s = CanonicaliseEvaluation(out_dir / "evaluation.csv");
      !s.ok()) {
    return s;
  }
  return summary;
}

// ---- compare -----------------------------------------------------------

const ComparisonSummary* CompareReport::Find(std::string_view scope,
                                             std::string_view metric) const {
  for (const ComparisonSummary& c : comparisons) {
    if (c.scope == scope && c.metric == metric) return &c;
  }
  return nullptr;
}

namespace {

double MetricValue(const EvaluationRow& r, std::string_view metric) {
  if (metric == "lift05") return r.report.lift_05;
  if (metric == "lift1") return r.report.lift_1;
  if (metric == "auc") return r.report.auc;
  return r.report.h_measure;
}

// Ranks `methods` within each block; blocks lacking a method are dropped.
struct Blocked {
  std::vector<std::string> methods;
  std::vector<std::vector<double>> matrix;
  size_t dropped = 0;
};

template <typename BlockFn, typename MethodFn>
Blocked BuildBlocks(const std::vector<EvaluationRow>& rows,
                    std::string_view metric, BlockFn block_of,
                    MethodFn method_of) {
  std::vector<std::pair<int, std::string>> method_order;
  std::map<std::string, std::map<std::string, double>> blocks;
  std::vector<std::string> block_order;
  for (const EvaluationRow& r : rows) {
    const std::string b = block_of(r);
    const auto [name, position] = method_of(r);
    if (std::none_of(method_order.begin(), method_order.end(),
                     [&](const auto& m) { return m.second == name; })) {
      method_order.emplace_back(position, name);
    }
    if (!blocks.contains(b)) block_order.push_back(b);
    blocks[b][name] = MetricValue(r, metric);
  }
  std::sort(method_order.begin(), method_order.end());
  Blocked out;
  for (const auto& m : method_order) out.methods.push_back(m.second);
  for (const std::string& b : block_order) {
    const auto& values = blocks[b];
    if (values.size() != out.methods.size()) {
      ++out.dropped;
      continue;
    }
    std::vector<double> row;
    for (const std::string& m : out.methods) row.push_back(values.at(m));
    out.matrix.push_back(std::move(row));
  }
  return out;
}

std::string ObservationKey(const EvaluationRow& r) {
  return absl::StrCat(r.dataset, "/", r.horizon, "/", r.edge_type);
}

}  // namespace

absl::StatusOr<CompareReport> CmdCompare(const std::vector<EvaluationRow>& rows,
                                         const std::string& out_dir,
                                         double alpha) {
  if (rows.empty()) return absl::InvalidArgumentError("no evaluation rows");
  if (absl::Status s = MakeDirs(out_dir); !s.ok()) return s;
  std::vector<EvaluationRow> sorted = rows;
  SortEvaluationRows(sorted);
  const fs::path dir(out_dir);
  CompareReport report;
  nlohmann::json json;
  json["alpha"] = alpha;

  struct Scope {
    const char* name;
    std::function<std::string(const EvaluationRow&)> block;
    std::function<std::pair<std::string, int>(const EvaluationRow&)> method;
    bool required;
  };
  const std::vector<Scope> scopes = {
      {"learners", ObservationKey,
       [](const EvaluationRow& r) {
         return std::make_pair(absl::StrCat(r.rc, "+", r.ci),
                               GridPosition(r.rc, r.ci));
       },
       true},
      {"rc",
       [](const EvaluationRow& r) {
         return absl::StrCat(ObservationKey(r), "/", r.ci);
       },
       [](const EvaluationRow& r) {
         return std::make_pair(r.rc, GridPosition(r.rc, "none"));
       },
       false},
      {"ci",
       [](const EvaluationRow& r) {
         return absl::StrCat(ObservationKey(r), "/", r.rc);
       },
       [](const EvaluationRow& r) {
         return std::make_pair(r.ci, GridPosition("wvrn", r.ci));
       },
       false},
  };

  for (const Scope& scope : scopes) {
    for (const char* metric : kMetricNames) {
      Blocked blocked = BuildBlocks(sorted, metric, scope.block, scope.method);
      const std::string label = absl::StrCat(scope.name, "_", metric);
      if (blocked.dropped > 0) {
        report.notes.push_back(absl::StrCat(
            label, ": dropped ", blocked.dropped,
            " observations missing at least one method"));
      }
      absl::StatusOr<RankTable> table = RankMethods(
          blocked.methods, blocked.matrix, /*higher_is_better=*/true, metric);
      if (!table.ok()) {
        if (scope.required) {
          return absl::InvalidArgumentError(
              absl::StrCat(label, ": ", table.status().message()));
        }
        report.notes.push_back(
            absl::StrCat(label, ": skipped, ", table.status().message()));
        continue;
      }
      absl::StatusOr<TestResult> friedman = FriedmanTest(*table);
      if (!friedman.ok()) return friedman.status();
      ComparisonSummary summary;
      summary.scope = scope.name;
      summary.metric = metric;
      summary.methods = table->methods;
      summary.average_ranks = table->AverageRanks();
      summary.observations = table->num_observations();
      summary.friedman_statistic = friedman->statistic;
      summary.friedman_p = friedman->p_value;
      if (absl::Status s = WriteAverageRanksCsv(
              (dir / (label + "_ranks.csv")).string(), *table);
          !s.ok()) {
        return s;
      }
      absl::StatusOr<NemenyiResult> nemenyi = NemenyiTest(*table, alpha);
      if (nemenyi.ok()) {
        summary.critical_difference = nemenyi->critical_difference;
        if (absl::Status s = WriteNemenyiMatrixCsv(
                (dir / (label + "_nemenyi.csv")).string(), *nemenyi);
            !s.ok()) {
          return s;
        }
        if (absl::Status s = WriteCdDiagramCsv(
                (dir / (label + "_cd.csv")).string(), *nemenyi);
            !s.ok()) {
          return s;
        }
      } else {
        report.notes.push_back(absl::StrCat(label, ": no Nemenyi test, ",
                                            nemenyi.status().message()));
      }
      nlohmann::json j = {{"scope", summary.scope},
                          {"metric", summary.metric},
                          {"methods", summary.methods},
                          {"average_ranks", summary.average_ranks},
                          {"observations", summary.observations},
                          {"friedman_statistic", summary.friedman_statistic},
                          {"friedman_p", summary.friedman_p}};
      if (summary.critical_difference) {
        j["critical_difference"] = *summary.critical_difference;
      }
      json["comparisons"].push_back(j);
      report.comparisons.push_back(std::move(summary));
    }
  }

  for (const char* metric : kMetricNames) {
    std::vector<double> without_ci;
    std::vector<double> with_ci;
    for (const EvaluationRow& r : sorted) {
      (r.ci == "none" ? without_ci : with_ci).push_back(MetricValue(r, metric));
    }
    absl::StatusOr<KruskalWallisResult> kw = KruskalWallis(without_ci, with_ci);
    if (!kw.ok()) {
      report.notes.push_back(absl::StrCat("ci_effect_", metric, ": skipped, ",
                                          kw.status().message()));
      continue;
    }
    CiEffectSummary e;
    e.metric = metric;
    e.statistic = kw->statistic;
    e.p_value = kw->p_value;
    e.mean_rank_without_ci = kw->mean_ranks[0];
    e.mean_rank_with_ci = kw->mean_ranks[1];
    e.n_without_ci = without_ci.size();
    e.n_with_ci = with_ci.size();
    json["ci_effect"].push_back({{"metric", e.metric},
                                 {"kruskal_wallis_h", e.statistic},
                                 {"p_value", e.p_value},
                                 {"mean_rank_without_ci", e.mean_rank_without_ci},
                                 {"mean_rank_with_ci", e.mean_rank_with_ci},
                                 {"n_without_ci", e.n_without_ci},
                                 {"n_with_ci", e.n_with_ci}});
    report.ci_effect.push_back(e);
  }
  json["notes"] = report.notes;

  std::string text;
  for (const ComparisonSummary& c : report.comparisons) {
    absl::StrAppend(&text, "== ", c.scope, " / ", c.metric, " (k=",
                    c.methods.size(), ", N=", c.observations, ")\n");
    absl::StrAppend(&text, "Friedman chi2 = ", Num(c.friedman_statistic),
                    ", p = ", absl::StrFormat("%.3g", c.friedman_p), "\n");
    if (c.critical_difference) {
      absl::StrAppend(&text, "Nemenyi CD (alpha ", Num(alpha), ") = ",
                      absl::StrFormat("%.4f", *c.critical_difference), "\n");
    }
    std::vector<size_t> order(c.methods.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return c.average_ranks[a] < c.average_ranks[b];
    });
    for (size_t j : order) {
      absl::StrAppend(&text, absl::StrFormat("  %-16s %8.3f\n", c.methods[j],
                                             c.average_ranks[j]));
    }
    text += "\n";
  }
  for (const CiEffectSummary& e : report.ci_effect) {
    absl::StrAppend(
        &text,
        absl::StrFormat("== without CI vs with CI / %s\nKruskal-Wallis H = "
                        "%.4f, p = %.3g; mean rank without CI %.2f (n=%d), "
                        "with CI %.2f (n=%d)\n\n",
                        e.metric, e.statistic, e.p_value,
                        e.mean_rank_without_ci, e.n_without_ci,
                        e.mean_rank_with_ci, e.n_with_ci));
  }
  for (const std::string& note : report.notes) {
    absl::StrAppend(&text, "note: ", note, "\n");
  }
  if (absl::Status s = WriteWholeFile((dir / "report.txt").string(), text);
      !s.ok()) {
    return s;
  }
  if (absl::Status s = WriteWholeFile((dir / "report.json").string(),
                                      json.dump(2) + "\n");
      !s.ok()) {
    return s;
  }
  return report;
}

}  // namespace churnet
