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

#include "churnet/cdr_ingest.h"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <memory>
#include <string_view>

#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"

namespace churnet {
namespace {

enum class LineKind { kRecord, kHeader, kMalformed, kBlank };

std::string_view ToStd(absl::string_view s) { return {s.data(), s.size()}; }

LineKind ParseLine(absl::string_view line, bool first_line,
                   CustomerRegistry& registry, CdrRecord* out) {
  line = absl::StripTrailingAsciiWhitespace(line);
  if (line.empty()) return LineKind::kBlank;
  std::vector<absl::string_view> fields = absl::StrSplit(line, '\t');
  int32_t day = 0;
  int32_t duration = 0;
  if (fields.size() >= 3 && first_line && !absl::SimpleAtoi(fields[2], &day)) {
    return LineKind::kHeader;
  }
  if (fields.size() != 4 || fields[0].empty() || fields[1].empty() ||
      !absl::SimpleAtoi(fields[2], &day) ||
      !absl::SimpleAtoi(fields[3], &duration) || duration < 0) {
    return LineKind::kMalformed;
  }
  out->caller = registry.Intern(ToStd(fields[0]));
  out->callee = registry.Intern(ToStd(fields[1]));
  out->start_day = day;
  out->duration_s = duration;
  return LineKind::kRecord;
}

void Tally(LineKind kind, const CdrRecord& rec, std::vector<CdrRecord>* out,
           ReadStats* stats) {
  switch (kind) {
    case LineKind::kRecord:
      out->push_back(rec);
      ++stats->records;
      break;
    case LineKind::kHeader:
      stats->header_skipped = true;
      break;
    case LineKind::kMalformed:
      ++stats->malformed;
      break;
    case LineKind::kBlank:
      break;
  }
}

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzFile = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

}  // namespace

absl::Status ReadCdr(std::istream& in, CustomerRegistry& registry,
                     std::vector<CdrRecord>* out, ReadStats* stats) {
  ReadStats local;
  if (stats == nullptr) stats = &local;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    ++stats->lines;
    CdrRecord rec;
    const LineKind kind = ParseLine(line, first, registry, &rec);
    if (kind != LineKind::kBlank) first = false;
    Tally(kind, rec, out, stats);
  }
  if (in.bad()) return absl::DataLossError("read error on CDR stream");
  return absl::OkStatus();
}

absl::StatusOr<std::vector<CdrRecord>> ReadCdrFile(const std::string& path,
                                                   CustomerRegistry& registry,
                                                   ReadStats* stats) {
  ReadStats local;
  if (stats == nullptr) stats = &local;
  GzFile f(gzopen(path.c_str(), "rb"));
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  gzbuffer(f.get(), 1 << 18);
  std::vector<CdrRecord> out;
  std::string line;
  char buf[4096];
  bool first = true;
  while (gzgets(f.get(), buf, sizeof(buf)) != nullptr) {
    line.append(buf);
    if (line.back() != '\n' && !gzeof(f.get())) continue;  // long line
    ++stats->lines;
    CdrRecord rec;
    const LineKind kind = ParseLine(line, first, registry, &rec);
    if (kind != LineKind::kBlank) first = false;
    Tally(kind, rec, &out, stats);
    line.clear();
  }
  int err = Z_OK;
  const char* msg = gzerror(f.get(), &err);
  if (err != Z_OK && err != Z_STREAM_END) {
    return absl::DataLossError(absl::StrCat("error reading ", path, ": ", msg));
  }
  return out;
}

absl::Status WriteCdrFile(std::span<const CdrRecord> records,
                          const CustomerRegistry& registry,
                          const std::string& path, bool gzip) {
  std::string buffer;
  auto flush = [&](auto&& write) {
    if (!write(buffer)) return false;
    buffer.clear();
    return true;
  };
  auto emit = [&](auto&& write) -> absl::Status {
    absl::StrAppend(&buffer, "caller_id\tcallee_id\tstart_day\tduration_s\n");
    for (const CdrRecord& r : records) {
      absl::StrAppend(&buffer, registry.Name(r.caller), "\t",
                      registry.Name(r.callee), "\t", r.start_day, "\t",
                      r.duration_s, "\n");
      if (buffer.size() > (1 << 20) && !flush(write)) {
        return absl::DataLossError(absl::StrCat("write failed: ", path));
      }
    }
    if (!flush(write)) {
      return absl::DataLossError(absl::StrCat("write failed: ", path));
    }
    return absl::OkStatus();
  };
  if (gzip) {
    GzFile f(gzopen(path.c_str(), "wb"));
    if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
    return emit([&](const std::string& s) {
      return s.empty() ||
             gzwrite(f.get(), s.data(), static_cast<unsigned>(s.size())) > 0;
    });
  }
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"),
                                          &std::fclose);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  return emit([&](const std::string& s) {
    return std::fwrite(s.data(), 1, s.size(), f.get()) == s.size();
  });
}

absl::StatusOr<CustomerSet> ReadMembersFile(const std::string& path,
                                            CustomerRegistry& registry) {
  GzFile f(gzopen(path.c_str(), "rb"));
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  CustomerSet members;
  char buf[4096];
  while (gzgets(f.get(), buf, sizeof(buf)) != nullptr) {
    absl::string_view id = absl::StripAsciiWhitespace(buf);
    if (!id.empty()) members.insert(registry.Intern(ToStd(id)));
  }
  return members;
}

std::vector<CdrRecord> FilterRecords(std::span<const CdrRecord> records,
                                     const CustomerSet* members,
                                     FilterStats* stats) {
  FilterStats local;
  if (stats == nullptr) stats = &local;
  std::vector<CdrRecord> out;
  out.reserve(records.size());
  for (const CdrRecord& r : records) {
    if (r.duration_s < kMinCallSeconds) {
      ++stats->dropped_short;
      continue;
    }
    if (members != nullptr &&
        (!members->contains(r.caller) || !members->contains(r.callee))) {
      ++stats->dropped_off_network;
      continue;
    }
    out.push_back(r);
    ++stats->kept;
  }
  return out;
}

ChurnSchedule ChurnSchedule::Compute(std::span<const CdrRecord> records,
                                     int32_t observation_end,
                                     const CustomerSet* population) {
  ChurnSchedule schedule;
  int32_t first_day = std::numeric_limits<int32_t>::max();
  uint32_t max_id = 0;
  for (const CdrRecord& r : records) {
    first_day = std::min(first_day, r.start_day);
    max_id = std::max({max_id, r.caller.value, r.callee.value});
  }
  if (population != nullptr) {
    for (CustomerId id : *population) max_id = std::max(max_id, id.value);
  }

  // One day-bitmap per customer over [first_day, observation_end].
  const int64_t span =
      records.empty() ? 0
                      : std::max<int64_t>(0, int64_t{observation_end} -
                                                 first_day + 1);
  const size_t words = static_cast<size_t>((span + 63) / 64);
  std::vector<uint64_t> bits(words * (size_t{max_id} + 1), 0);
  std::vector<uint8_t> seen(size_t{max_id} + 1, 0);
  auto wanted = [&](CustomerId id) {
    return population == nullptr || population->contains(id);
  };
  for (const CdrRecord& r : records) {
    if (r.start_day > observation_end) continue;
    const size_t offset = static_cast<size_t>(r.start_day - first_day);
    for (CustomerId id : {r.caller, r.callee}) {
      if (!wanted(id)) continue;
      seen[id.value] = 1;
      bits[id.value * words + offset / 64] |= uint64_t{1} << (offset % 64);
    }
  }

  for (uint32_t v = 0; v <= max_id && !records.empty(); ++v) {
    if (!seen[v]) continue;
    const uint64_t* row = bits.data() + size_t{v} * words;
    std::optional<int32_t> churn;
    int64_t prev = -1;
    for (int64_t d = 0; d < span; ++d) {
      if (!((row[d / 64] >> (d % 64)) & 1)) continue;
      if (prev >= 0 && d - prev - 1 >= kChurnSilenceDays) {
        churn = static_cast<int32_t>(first_day + prev + 1);
        break;
      }
      prev = d;
    }
    if (!churn && prev >= 0 && span - 1 - prev >= kChurnSilenceDays) {
      churn = static_cast<int32_t>(first_day + prev + 1);
    }
    schedule.first_churn_day_[CustomerId{v}] = churn;
  }
  if (population != nullptr) {
    for (CustomerId id : *population) {
      if (!schedule.first_churn_day_.contains(id)) {
        schedule.inactive_.push_back(id);
      }
    }
    std::sort(schedule.inactive_.begin(), schedule.inactive_.end());
  }
  return schedule;
}

ChurnLabels ChurnSchedule::LabelsAt(int32_t activity_window_end) const {
  ChurnLabels labels;
  labels.reserve(first_churn_day_.size());
  for (const auto& [id, day] : first_churn_day_) {
    ChurnLabel label{id, ChurnStatus::kNonChurner, std::nullopt};
    if (day && *day <= activity_window_end) {
      label.status = ChurnStatus::kChurner;
      label.churn_day = *day;
    }
    labels.emplace(id, label);
  }
  return labels;
}

std::optional<int32_t> ChurnSchedule::churn_day(CustomerId id) const {
  auto it = first_churn_day_.find(id);
  if (it == first_churn_day_.end()) return std::nullopt;
  return it->second;
}

bool ChurnSchedule::active(CustomerId id) const {
  return first_churn_day_.contains(id);
}

LabelReport LabelChurn(std::span<const CdrRecord> records,
                       int32_t activity_window_end, int32_t observation_end,
                       const CustomerSet* population) {
  ChurnSchedule schedule =
      ChurnSchedule::Compute(records, observation_end, population);
  return {schedule.LabelsAt(activity_window_end), schedule.inactive()};
}

LabelReport LabelChurn(std::span<const CdrRecord> records,
                       int32_t activity_window_end) {
  int32_t last = std::numeric_limits<int32_t>::min();
  for (const CdrRecord& r : records) last = std::max(last, r.start_day);
  return LabelChurn(records, activity_window_end, last, nullptr);
}

absl::Status WriteLabelsFile(const ChurnLabels& labels,
                             const CustomerRegistry& registry,
                             const std::string& path) {
  std::vector<const ChurnLabel*> sorted;
  sorted.reserve(labels.size());
  for (const auto& [id, label] : labels) sorted.push_back(&label);
  std::sort(sorted.begin(), sorted.end(),
            [&](const ChurnLabel* a, const ChurnLabel* b) {
              return registry.Name(a->customer) < registry.Name(b->customer);
            });
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"),
                                          &std::fclose);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  for (const ChurnLabel* l : sorted) {
    const bool churner = l->status == ChurnStatus::kChurner;
    absl::FPrintF(f.get(), "%s\t%s\t%s\n", registry.Name(l->customer),
                  churner ? "churner" : "non-churner",
                  churner ? absl::StrCat(*l->churn_day) : "");
  }
  return absl::OkStatus();
}

const char* HorizonName(Horizon h) {
  return h == Horizon::kShort ? "short" : "long";
}

const char* EdgeTypeName(EdgeType e) {
  return e == EdgeType::kCallCount ? "call_count" : "call_duration";
}

absl::StatusOr<Horizon> ParseHorizon(std::string_view s) {
  if (s == "short") return Horizon::kShort;
  if (s == "long") return Horizon::kLong;
  return absl::InvalidArgumentError(absl::StrCat("unknown horizon '", std::string(s), "'"));
}

absl::StatusOr<EdgeType> ParseEdgeType(std::string_view s) {
  if (s == "call_count") return EdgeType::kCallCount;
  if (s == "call_duration") return EdgeType::kCallDuration;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown edge type '", std::string(s), "'"));
}

TimelineConfig TimelineConfig::CalendarBlocks(int32_t first_day,
                                              Horizon horizon,
                                              EdgeType edge_type) {
  TimelineConfig config;
  for (int m = 0; m < 6; ++m) config.month_starts[m] = first_day + 30 * m;
  config.observation_end = first_day + 6 * 30 - 1;
  config.horizon = horizon;
  config.edge_type = edge_type;
  return config;
}

absl::Status TimelineConfig::Validate() const {
  for (int m = 1; m < 6; ++m) {
    if (month_starts[m] <= month_starts[m - 1]) {
      return absl::InvalidArgumentError(
          "month boundaries must be strictly increasing");
    }
  }
  if (observation_end < month_starts[5] + kChurnSilenceDays - 2) {
    return absl::InvalidArgumentError(absl::StrCat(
        "observation must extend ", kChurnSilenceDays,
        " days past the prediction month to verify churn (observation_end=",
        observation_end, ", prediction month ends ", month_starts[5] - 1,
        ")"));
  }
  return absl::OkStatus();
}

DayRange TimelineConfig::PretrainWindow() const {
  return horizon == Horizon::kShort
             ? DayRange{month_starts[2], month_starts[3]}
             : DayRange{month_starts[0], month_starts[3]};
}

DayRange TimelineConfig::TrainWindow() const {
  return horizon == Horizon::kShort
             ? DayRange{month_starts[3], month_starts[4]}
             : DayRange{month_starts[1], month_starts[4]};
}

DayRange TimelineConfig::PredictWindow() const {
  return {month_starts[4], month_starts[5]};
}

namespace {

absl::StatusOr<CallGraph> BuildWindowGraph(std::span<const CdrRecord> records,
                                           DayRange window, EdgeType type,
                                           double gamma, const char* label) {
  GraphBuilder builder(
      DecayConfig{gamma, static_cast<double>(window.last_day())});
  size_t used = 0;
  for (const CdrRecord& r : records) {
    if (!window.contains(r.start_day)) continue;
    const double raw = type == EdgeType::kCallCount ? 1.0 : r.duration_s;
    if (raw <= 0.0) continue;  // zero-length calls carry no duration mass
    if (absl::Status s = builder.Add(r.caller, r.callee, raw, r.start_day);
        !s.ok()) {
      return s;
    }
    ++used;
  }
  if (used == 0 || used == builder.dropped_self_calls()) {
    return absl::FailedPreconditionError(
        absl::StrCat("no call records in the ", label, " window [",
                     window.begin, ", ", window.end, ")"));
  }
  return std::move(builder).Build();
}

std::vector<ChurnStatus> StatusAt(const CallGraph& graph,
                                  const ChurnSchedule& schedule,
                                  int32_t window_end) {
  std::vector<ChurnStatus> out(graph.num_nodes(), ChurnStatus::kNonChurner);
  for (NodeIndex i = 0; i < graph.num_nodes(); ++i) {
    const std::optional<int32_t> day = schedule.churn_day(graph.customer(i));
    if (day && *day <= window_end) out[i] = ChurnStatus::kChurner;
  }
  return out;
}

}  // namespace

absl::StatusOr<ExperimentWindows> BuildWindows(
    std::span<const CdrRecord> records, const ChurnSchedule& schedule,
    const TimelineConfig& config, const DecayConfig& decay) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  if (absl::Status s = decay.Validate(); !s.ok()) return s;
  const DayRange pretrain = config.PretrainWindow();
  const DayRange train = config.TrainWindow();
  const DayRange predict = config.PredictWindow();

  ExperimentWindows out;
  absl::StatusOr<CallGraph> g = BuildWindowGraph(
      records, pretrain, config.edge_type, decay.gamma, "pre-train");
  if (!g.ok()) return g.status();
  out.pretrain_graph = *std::move(g);
  g = BuildWindowGraph(records, train, config.edge_type, decay.gamma,
                       "train");
  if (!g.ok()) return g.status();
  out.train_graph = *std::move(g);

  out.pretrain_labels =
      StatusAt(out.pretrain_graph, schedule, pretrain.last_day());
  out.train_labels = StatusAt(out.train_graph, schedule, train.last_day());
  for (NodeIndex i = 0; i < out.train_graph.num_nodes(); ++i) {
    if (out.train_labels[i] == ChurnStatus::kChurner) continue;
    const std::optional<int32_t> day =
        schedule.churn_day(out.train_graph.customer(i));
    out.evaluation_nodes.push_back(i);
    out.predict_labels.push_back(day && predict.contains(*day) ? 1 : 0);
  }
  return out;
}

absl::StatusOr<ExperimentWindows> BuildWindows(
    std::span<const CdrRecord> records, const TimelineConfig& config,
    const DecayConfig& decay) {
  const ChurnSchedule schedule =
      ChurnSchedule::Compute(records, config.observation_end, nullptr);
  return BuildWindows(records, schedule, config, decay);
}

}  // namespace churnet
