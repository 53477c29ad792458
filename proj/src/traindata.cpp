// SPDX-License-Identifier: Apache-2.0
#include "darth/traindata.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "darth/parallel.hpp"

namespace darth::traindata {
namespace {

struct QueryLog {
  std::vector<Observation> rows;
  std::vector<double> crossing;  // per target
};

template <typename Search>
std::pair<ObservationLog, EffortTable> generate(IndexKind kind, std::size_t k, const Dataset& queries,
                                                const GroundTruth& gt, const GenerateParams& gp, Search&& search) {
  if (gp.stride == 0) throw ArgumentError("stride must be at least 1");
  if (gt.count < queries.count()) {
    throw ArgumentError("missing ground truth rows: have " + std::to_string(gt.count) + " for " +
                        std::to_string(queries.count()) + " queries");
  }
  if (gt.k < k) throw ArgumentError("ground truth narrower than k");
  if (!std::is_sorted(gp.targets.begin(), gp.targets.end())) throw ArgumentError("targets must be ascending");

  std::vector<QueryLog> per_query(queries.count());
  parallel_for(queries.count(), gp.threads, [&](std::size_t qi) {
    QueryLog& log = per_query[qi];
    log.crossing.assign(gp.targets.size(), -1.0);
    RecallTracker tracker(gt.ids_row(qi).subspan(0, k));
    features::FeatureExtractor fx;
    std::size_t next_target = 0;
    auto hook = [&](const SearchState& st) {
      tracker.observe(st);
      const double recall = tracker.recall();
      while (next_target < gp.targets.size() && recall >= gp.targets[next_target]) {
        log.crossing[next_target++] = static_cast<double>(st.ndis);
      }
      if (st.ndis % gp.stride == 0 && !st.results.empty() && st.has_first_nn) {
        log.rows.push_back({static_cast<std::uint32_t>(qi), fx(st), recall});
      }
      return HookAction::proceed;
    };
    const QueryOutcome out = search(queries.row(qi), hook);
    for (double& c : log.crossing) {
      if (c < 0.0) c = static_cast<double>(out.ndis);
    }
  });

  ObservationLog log;
  log.kind = kind;
  log.k = k;
  log.stride = gp.stride;
  std::size_t total = 0;
  for (const auto& q : per_query) total += q.rows.size();
  log.rows.reserve(total);
  EffortTable effort;
  effort.targets = gp.targets;
  effort.dists.assign(gp.targets.size(), 0.0);
  for (auto& q : per_query) {
    log.rows.insert(log.rows.end(), q.rows.begin(), q.rows.end());
    std::vector<Observation>().swap(q.rows);
    for (std::size_t t = 0; t < effort.targets.size(); ++t) effort.dists[t] += q.crossing[t];
  }
  if (!per_query.empty()) {
    for (double& d : effort.dists) d /= static_cast<double>(per_query.size());
  }
  return {std::move(log), std::move(effort)};
}

std::string target_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", t);
  return buf;
}

}  // namespace

std::string_view index_kind_name(IndexKind k) { return k == IndexKind::hnsw ? "hnsw" : "ivf"; }

IndexKind parse_index_kind(std::string_view name) {
  if (name == "hnsw") return IndexKind::hnsw;
  if (name == "ivf") return IndexKind::ivf;
  throw ArgumentError("unknown index kind '" + std::string(name) + "'");
}

double label_recall(std::span<const idx_t> topk, std::span<const idx_t> gt_row) {
  if (gt_row.empty()) return 0.0;
  std::vector<idx_t> truth(gt_row.begin(), gt_row.end());
  std::sort(truth.begin(), truth.end());
  std::size_t hits = 0;
  for (idx_t id : topk) hits += std::binary_search(truth.begin(), truth.end(), id) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gt_row.size());
}

std::vector<double> default_targets() {
  std::vector<double> t;
  for (int i = 50; i <= 95; i += 5) t.push_back(i / 100.0);
  for (int i = 96; i <= 100; ++i) t.push_back(i / 100.0);
  return t;
}

gbdt::Matrix ObservationLog::matrix() const {
  gbdt::Matrix m(rows.size(), features::kFeatureCount);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].features.values.begin(), rows[i].features.values.end(), m.row(i).begin());
  }
  return m;
}

std::vector<double> ObservationLog::labels() const {
  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = rows[i].recall;
  return y;
}

ObservationLog ObservationLog::filter_queries(std::uint32_t begin, std::uint32_t end) const {
  ObservationLog out;
  out.kind = kind;
  out.k = k;
  out.stride = stride;
  for (const auto& r : rows) {
    if (r.query_id >= begin && r.query_id < end) out.rows.push_back(r);
  }
  return out;
}

void ObservationLog::write_csv(std::ostream& out) const {
  out << "query_id";
  for (auto name : features::kFeatureNames) out << ',' << name;
  out << ",recall\n";
  char buf[32];
  for (const auto& r : rows) {
    out << r.query_id;
    for (double v : r.features.values) {
      std::snprintf(buf, sizeof(buf), "%.10g", v);
      out << ',' << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.10g", r.recall);
    out << ',' << buf << '\n';
  }
}

void ObservationLog::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  write_csv(out);
  if (!out) throw FormatError("write failed on " + path.string());
}

ObservationLog ObservationLog::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("query_id,", 0) != 0) {
    throw FormatError(path.string() + ": missing observation-log header");
  }
  ObservationLog log;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Observation obs;
    const char* p = line.c_str();
    char* end = nullptr;
    auto next = [&]() {
      const double v = std::strtod(p, &end);
      if (end == p) throw FormatError(path.string() + ": bad number on line " + std::to_string(lineno));
      p = end;
      if (*p == ',') ++p;
      return v;
    };
    obs.query_id = static_cast<std::uint32_t>(next());
    for (double& v : obs.features.values) v = next();
    obs.recall = next();
    if (*p != '\0') throw FormatError(path.string() + ": extra columns on line " + std::to_string(lineno));
    log.rows.push_back(obs);
  }
  return log;
}

double EffortTable::lookup(double target) const {
  if (targets.empty()) throw ConfigError("effort table is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < targets.size(); ++i) {
    if (std::abs(targets[i] - target) < std::abs(targets[best] - target)) best = i;
  }
  return dists[best];
}

void EffortTable::save_json(const std::filesystem::path& path) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < targets.size(); ++i) j[target_key(targets[i])] = dists[i];
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  out << std::setw(2) << j << '\n';
}

EffortTable EffortTable::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError(path.string() + ": effort table must be a JSON object");
  std::vector<std::pair<double, double>> entries;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number()) throw FormatError(path.string() + ": non-numeric effort for key " + it.key());
    entries.emplace_back(std::stod(it.key()), it.value().get<double>());
  }
  std::sort(entries.begin(), entries.end());
  EffortTable t;
  for (auto [k, v] : entries) {
    t.targets.push_back(k);
    t.dists.push_back(v);
  }
  return t;
}

std::pair<ObservationLog, EffortTable> generate_training_data(const hnsw::HnswGraph& g, const Dataset& queries,
                                                              const GroundTruth& gt, const hnsw::SearchParams& sp,
                                                              const GenerateParams& gp) {
  return generate(IndexKind::hnsw, sp.k, queries, gt, gp, [&](std::span<const float> q, auto& hook) {
    return hnsw::search_with_hook(g, q, sp, hook);
  });
}

std::pair<ObservationLog, EffortTable> generate_training_data(const ivf::IvfIndex& ix, const Dataset& queries,
                                                              const GroundTruth& gt, const ivf::SearchParams& sp,
                                                              const GenerateParams& gp) {
  return generate(IndexKind::ivf, sp.k, queries, gt, gp, [&](std::span<const float> q, auto& hook) {
    return ivf::search_with_hook(ix, q, sp, hook);
  });
}

}  // namespace darth::traindata
