// SPDX-License-Identifier: Apache-2.0
#include "darth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

namespace darth::eval {
namespace {

constexpr double kEps = 1e-12;

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

template <typename Search>
OptimalityTable optimal(const Dataset& queries, const GroundTruth& gt, std::size_t k, std::span<const double> targets,
                        std::size_t threads, Search&& search) {
  if (gt.count < queries.count() || gt.k < k) throw ArgumentError("ground truth does not cover the queries");
  if (!std::is_sorted(targets.begin(), targets.end())) throw ArgumentError("targets must be ascending");
  OptimalityTable t;
  t.targets.assign(targets.begin(), targets.end());
  t.rows.resize(queries.count());
  parallel_for(queries.count(), threads, [&](std::size_t qi) {
    OptimalityRow& row = t.rows[qi];
    row.query = qi;
    row.optimal.assign(targets.size(), 0);
    row.reached.assign(targets.size(), false);
    traindata::RecallTracker tracker(gt.ids_row(qi).subspan(0, k));
    std::size_t next = 0;
    auto hook = [&](const SearchState& st) {
      tracker.observe(st);
      while (next < targets.size() && tracker.recall() >= targets[next]) {
        row.optimal[next] = st.ndis;
        row.reached[next] = true;
        ++next;
      }
      return HookAction::proceed;
    };
    const QueryOutcome out = search(queries.row(qi), hook);
    row.natural_ndis = out.ndis;
    row.final_recall = tracker.recall();
    for (std::size_t i = next; i < targets.size(); ++i) row.optimal[i] = out.ndis;
  });
  return t;
}

}  // namespace

ErrorMode parse_error_mode(std::string_view name) {
  if (name == "one-sided") return ErrorMode::one_sided;
  if (name == "absolute") return ErrorMode::absolute;
  throw ArgumentError("unknown error mode '" + std::string(name) + "' (expected one-sided or absolute)");
}

std::string_view error_mode_name(ErrorMode m) { return m == ErrorMode::one_sided ? "one-sided" : "absolute"; }

double query_rde(std::span<const float> retrieved_sq, std::span<const float> truth_sq) {
  const std::size_t n = std::min(retrieved_sq.size(), truth_sq.size());
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dr = std::sqrt(static_cast<double>(retrieved_sq[i]));
    const double dt = std::sqrt(static_cast<double>(truth_sq[i]));
    s += (dr - dt) / std::max(dt, kEps);
  }
  return s / static_cast<double>(n);
}

double query_nrs(std::span<const idx_t> ids, std::span<const float> dists_sq, std::span<const idx_t> gt_ids,
                 std::span<const float> gt_dists_sq, std::size_t k) {
  if (ids.size() != dists_sq.size()) throw ArgumentError("ids and distances differ in length");
  const std::size_t depth = gt_ids.size();
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (i >= ids.size()) {
      rank_sum += static_cast<double>(depth + 1);
      continue;
    }
    const auto it = std::find(gt_ids.begin(), gt_ids.end(), ids[i]);
    if (it != gt_ids.end()) {
      rank_sum += static_cast<double>(it - gt_ids.begin() + 1);
    } else {
      const auto pos = std::upper_bound(gt_dists_sq.begin(), gt_dists_sq.end(), dists_sq[i]) - gt_dists_sq.begin();
      rank_sum += static_cast<double>(pos + 1);
    }
  }
  const double ideal = static_cast<double>(k) * static_cast<double>(k + 1) / 2.0;
  return ideal / rank_sum;
}

MetricReport compute_metrics(std::span<const QueryOutcome> outcomes, const GroundTruth& gt, std::size_t k,
                             double target, std::span<const QueryOutcome> plain, ErrorMode mode, std::string method) {
  if (k == 0) throw ArgumentError("k must be positive");
  if (outcomes.size() > gt.count) throw ArgumentError("more outcomes than ground-truth rows");
  if (gt.k < k) throw ArgumentError("ground truth narrower than k");
  if (!plain.empty() && plain.size() != outcomes.size()) throw ArgumentError("plain outcomes are not aligned");

  MetricReport r;
  r.method = std::move(method);
  r.target = target;
  r.k = k;
  r.queries = outcomes.size();
  r.rows.resize(outcomes.size());
  std::vector<double> errors(outcomes.size());
  std::vector<double> ndis(outcomes.size());
  double total_us = 0.0;
  std::size_t under = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const QueryOutcome& o = outcomes[i];
    if (o.ids.size() != o.dists.size() || o.ids.size() > k) throw ArgumentError("malformed outcome for query " + std::to_string(i));
    QueryMetrics& q = r.rows[i];
    q.query = i;
    q.recall = traindata::label_recall(o.ids, gt.ids_row(i).subspan(0, k));
    q.error = mode == ErrorMode::one_sided ? std::max(0.0, target - q.recall) : std::abs(target - q.recall);
    q.rde = query_rde(o.dists, gt.dists_row(i).subspan(0, k));
    q.nrs = query_nrs(o.ids, o.dists, gt.ids_row(i), gt.dists_row(i), k);
    q.ndis = o.ndis;
    q.nstep = o.nstep;
    q.predictor_calls = o.predictor_calls;
    q.terminated = o.terminated;
    q.elapsed_us = o.elapsed_us;

    r.recall += q.recall;
    r.rde += q.rde;
    r.nrs += q.nrs;
    r.mean_predictor_calls += static_cast<double>(q.predictor_calls);
    under += q.recall < target ? 1 : 0;
    errors[i] = q.error;
    ndis[i] = static_cast<double>(q.ndis);
    total_us += q.elapsed_us;
  }
  const double n = static_cast<double>(std::max<std::size_t>(outcomes.size(), 1));
  r.recall /= n;
  r.rde /= n;
  r.nrs /= n;
  r.inv_nrs = r.nrs > 0.0 ? 1.0 / r.nrs : 0.0;
  r.mean_predictor_calls /= n;
  r.rqut = static_cast<double>(under) / n;
  r.p99 = percentile(errors, 99.0);
  if (!errors.empty()) {
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const std::size_t worst = (sorted.size() + 99) / 100;
    r.worst1 = std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(worst), 0.0) /
               static_cast<double>(worst);
  }
  r.mean_ndis = std::accumulate(ndis.begin(), ndis.end(), 0.0) / n;
  r.median_ndis = percentile(ndis, 50.0);
  r.mean_time_us = total_us / n;
  r.qps = total_us > 0.0 ? static_cast<double>(outcomes.size()) / (total_us * 1e-6) : 0.0;

  if (plain.empty()) {
    r.speedup = std::numeric_limits<double>::quiet_NaN();
    r.ndis_speedup = std::numeric_limits<double>::quiet_NaN();
  } else {
    double plain_us = 0.0;
    double plain_ndis = 0.0;
    for (const auto& p : plain) {
      plain_us += p.elapsed_us;
      plain_ndis += static_cast<double>(p.ndis);
    }
    r.speedup = total_us > 0.0 ? plain_us / total_us : 1.0;
    const double own_ndis = r.mean_ndis * n;
    r.ndis_speedup = own_ndis > 0.0 ? plain_ndis / own_ndis : 1.0;
  }
  return r;
}

void write_summary_header(std::ostream& out) {
  out << "method,target,k,queries,recall,rde,rqut,nrs,inv_nrs,p99,worst1,mean_ndis,median_ndis,"
         "mean_predictor_calls,ndis_speedup,mean_time_us,qps,speedup\n";
}

void write_summary_row(std::ostream& out, const MetricReport& r) {
  out << r.method << ',' << fmt(r.target) << ',' << r.k << ',' << r.queries << ',' << fmt(r.recall) << ','
      << fmt(r.rde) << ',' << fmt(r.rqut) << ',' << fmt(r.nrs) << ',' << fmt(r.inv_nrs) << ',' << fmt(r.p99) << ','
      << fmt(r.worst1) << ',' << fmt(r.mean_ndis) << ',' << fmt(r.median_ndis) << ',' << fmt(r.mean_predictor_calls)
      << ',' << fmt(r.ndis_speedup) << ',' << fmt(r.mean_time_us) << ',' << fmt(r.qps) << ',' << fmt(r.speedup)
      << '\n';
}

void write_query_header(std::ostream& out) {
  out << "method,target,query_id,terminated,recall,error,rde,nrs,ndis,nstep,predictor_calls,elapsed_us\n";
}

void write_query_rows(std::ostream& out, const MetricReport& r) {
  for (const auto& q : r.rows) {
    out << r.method << ',' << fmt(r.target) << ',' << q.query << ',' << termination_name(q.terminated) << ','
        << fmt(q.recall) << ',' << fmt(q.error) << ',' << fmt(q.rde) << ',' << fmt(q.nrs) << ',' << q.ndis << ','
        << q.nstep << ',' << q.predictor_calls << ',' << fmt(q.elapsed_us) << '\n';
  }
}

void write_table(std::ostream& out, std::span<const MetricReport> reports) {
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %6s %8s %8s %6s %7s %7s %10s %9s %9s\n", "method", "R_t", "recall", "RDE",
                "RQUT", "NRS", "P99", "mean_ndis", "QPS", "speedup");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-10s %6.2f %8.4f %8.5f %6.3f %7.4f %7.4f %10.1f %9.1f %9.2f\n",
                  r.method.c_str(), r.target, r.recall, r.rde, r.rqut, r.nrs, r.p99, r.mean_ndis, r.qps, r.speedup);
    out << line;
  }
}

std::size_t OptimalityTable::target_index(double target) const {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (std::abs(targets[i] - target) < 1e-9) return i;
  }
  throw ArgumentError("target " + fmt(target) + " not in the optimality table");
}

void OptimalityTable::write_csv(std::ostream& out) const {
  out << "query_id,natural_ndis,final_recall";
  char buf[32];
  for (double t : targets) {
    std::snprintf(buf, sizeof(buf), "%.2f", t);
    out << ",opt_" << buf;
  }
  out << '\n';
  for (const auto& r : rows) {
    out << r.query << ',' << r.natural_ndis << ',' << fmt(r.final_recall);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      out << ',';
      if (r.reached[i]) out << r.optimal[i];
    }
    out << '\n';
  }
}

void OptimalityTable::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  write_csv(out);
}

OptimalityTable optimal_termination(const hnsw::HnswGraph& g, const Dataset& queries, const GroundTruth& gt,
                                    const hnsw::SearchParams& sp, std::span<const double> targets,
                                    std::size_t threads) {
  return optimal(queries, gt, sp.k, targets, threads, [&](std::span<const float> q, auto& hook) {
    return hnsw::search_with_hook(g, q, sp, hook);
  });
}

OptimalityTable optimal_termination(const ivf::IvfIndex& ix, const Dataset& queries, const GroundTruth& gt,
                                    const ivf::SearchParams& sp, std::span<const double> targets,
                                    std::size_t threads) {
  return optimal(queries, gt, sp.k, targets, threads, [&](std::span<const float> q, auto& hook) {
    return ivf::search_with_hook(ix, q, sp, hook);
  });
}

double optimality_ratio(const OptimalityTable& t, double target, std::span<const QueryOutcome> outcomes) {
  if (outcomes.size() != t.rows.size()) throw ArgumentError("outcomes are not aligned with the optimality table");
  const std::size_t ti = t.target_index(target);
  double actual = 0.0;
  double best = 0.0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!t.rows[i].reached[ti]) continue;
    actual += static_cast<double>(outcomes[i].ndis);
    best += static_cast<double>(t.rows[i].optimal[ti]);
  }
  if (best == 0.0) throw InfeasibleError("no query reached the target under plain search");
  return actual / best;
}

GridResult grid_search_intervals(const hnsw::HnswGraph& g, const gbdt::GbdtModel& model, const Dataset& valid,
                                 const GroundTruth& gt, std::size_t k, std::size_t ef_search, double target,
                                 std::span<const std::size_t> ipi_grid, std::span<const std::size_t> mpi_grid,
                                 IntervalMode mode) {
  if (ipi_grid.empty()) throw ArgumentError("ipi grid is empty");
  if (mode == IntervalMode::adaptive && mpi_grid.empty()) throw ArgumentError("mpi grid is empty");
  if (gt.count < valid.count() || gt.k < k) throw ArgumentError("ground truth does not cover the validation queries");

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t ipi : ipi_grid) {
    if (mode == IntervalMode::static_) {
      pairs.emplace_back(ipi, ipi);
      continue;
    }
    for (std::size_t mpi : mpi_grid) {
      if (mpi <= ipi) pairs.emplace_back(ipi, mpi);
    }
  }
  if (pairs.empty()) throw ArgumentError("no grid cell has mpi <= ipi");

  GridResult res;
  const double n = static_cast<double>(std::max<std::size_t>(valid.count(), 1));
  for (auto [ipi, mpi] : pairs) {
    et::EtConfig cfg;
    cfg.target_recall = target;
    cfg.k = k;
    cfg.intervals = {ipi, mpi};
    cfg.model = &model;
    cfg.width = ef_search;
    GridCell cell;
    cell.ipi = ipi;
    cell.mpi = mpi;
    for (std::size_t i = 0; i < valid.count(); ++i) {
      const QueryOutcome o = et::darth_search(g, valid.row(i), cfg);
      cell.mean_recall += traindata::label_recall(o.ids, gt.ids_row(i).subspan(0, k));
      cell.mean_time_us += o.elapsed_us;
      cell.mean_ndis += static_cast<double>(o.ndis);
      cell.mean_predictor_calls += static_cast<double>(o.predictor_calls);
    }
    cell.mean_recall /= n;
    cell.mean_time_us /= n;
    cell.mean_ndis /= n;
    cell.mean_predictor_calls /= n;
    cell.feasible = cell.mean_recall >= target;
    if (cell.feasible && (!res.best || cell.mean_time_us < res.best->mean_time_us)) res.best = cell;
    res.cells.push_back(cell);
  }
  return res;
}

void write_grid_csv(std::ostream& out, const GridResult& r) {
  out << "ipi,mpi,mean_recall,feasible,mean_ndis,mean_predictor_calls,mean_time_us\n";
  for (const auto& c : r.cells) {
    out << c.ipi << ',' << c.mpi << ',' << fmt(c.mean_recall) << ',' << (c.feasible ? 1 : 0) << ','
        << fmt(c.mean_ndis) << ',' << fmt(c.mean_predictor_calls) << ',' << fmt(c.mean_time_us) << '\n';
  }
}

PredictorMetrics predictor_metrics(std::span<const double> predicted, std::span<const double> labels) {
  if (labels.empty()) throw ArgumentError("predictor metrics need at least one row");
  if (predicted.size() != labels.size()) throw ArgumentError("predictions and labels differ in length");
  PredictorMetrics m;
  m.rows = labels.size();
  const double n = static_cast<double>(labels.size());
  const double mean = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double e = predicted[i] - labels[i];
    ss_res += e * e;
    m.mae += std::abs(e);
    ss_tot += (labels[i] - mean) * (labels[i] - mean);
  }
  m.mse = ss_res / n;
  m.mae /= n;
  if (ss_tot > 0.0) {
    m.r2 = 1.0 - ss_res / ss_tot;
  } else {
    m.r2_defined = false;
    m.r2 = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

PredictorMetrics predictor_metrics(const gbdt::GbdtModel& model, const traindata::ObservationLog& log) {
  const gbdt::Matrix x = log.matrix();
  return predictor_metrics(model.predict_batch(x), log.labels());
}

}  // namespace darth::eval
