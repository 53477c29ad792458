// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "darth/dataset.hpp"
#include "darth/etsearch.hpp"
#include "darth/gbdt.hpp"
#include "darth/hnsw.hpp"
#include "darth/ivf.hpp"
#include "darth/parallel.hpp"
#include "darth/search_state.hpp"
#include "darth/traindata.hpp"

namespace darth::eval {

/// How a query's recall shortfall is scored for P99 and worst-1%.
enum class ErrorMode {
  one_sided,  // max(0, target - recall)
  absolute,   // |target - recall|
};

ErrorMode parse_error_mode(std::string_view name);
std::string_view error_mode_name(ErrorMode m);

struct QueryMetrics {
  std::size_t query = 0;
  double recall = 0.0;
  double error = 0.0;
  double rde = 0.0;
  double nrs = 0.0;
  std::uint64_t ndis = 0;
  std::uint64_t nstep = 0;
  std::uint64_t predictor_calls = 0;
  Termination terminated = Termination::natural;
  double elapsed_us = 0.0;
};

struct MetricReport {
  std::string method;
  double target = 0.0;
  std::size_t k = 0;
  std::size_t queries = 0;
  double recall = 0.0;
  double rde = 0.0;
  double rqut = 0.0;
  double nrs = 0.0;
  double inv_nrs = 0.0;
  double p99 = 0.0;
  double worst1 = 0.0;
  double mean_ndis = 0.0;
  double median_ndis = 0.0;
  double mean_predictor_calls = 0.0;
  double mean_time_us = 0.0;
  double qps = 0.0;
  /// Plain mean time / policy mean time, and the same ratio for ndis. NaN
  /// when no plain reference was supplied.
  double speedup = 0.0;
  double ndis_speedup = 0.0;
  std::vector<QueryMetrics> rows;
};

/// Relative distance error of one query: mean over ranks i of
/// (d_ret(i) - d_true(i)) / max(d_true(i), 1e-12), on unsquared L2 distances.
/// Inputs are squared distances sorted ascending.
double query_rde(std::span<const float> retrieved_sq, std::span<const float> truth_sq);

/// Normalized rank sum of one query: (k(k+1)/2) / sum of the ground-truth
/// ranks of the retrieved ids. An id absent from the ground-truth row is
/// ranked 1 + the number of ground-truth distances <= its own; unfilled
/// result slots take rank depth + 1.
double query_nrs(std::span<const idx_t> ids, std::span<const float> dists_sq, std::span<const idx_t> gt_ids,
                 std::span<const float> gt_dists_sq, std::size_t k);

/// Aggregates policy outcomes (aligned with ground-truth rows) into a report.
/// `plain` may be empty; otherwise it must be aligned as well.
MetricReport compute_metrics(std::span<const QueryOutcome> outcomes, const GroundTruth& gt, std::size_t k,
                             double target, std::span<const QueryOutcome> plain = {},
                             ErrorMode mode = ErrorMode::one_sided, std::string method = {});

/// Summary CSV has one line per report; the per-query CSV one line per query
/// prefixed with method and target.
void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const MetricReport& r);
void write_query_header(std::ostream& out);
void write_query_rows(std::ostream& out, const MetricReport& r);
void write_table(std::ostream& out, std::span<const MetricReport> reports);

/// Per-query first ndis at which running plain-search recall reached each
/// target. Unreached targets are flagged (reached = false, optimal = natural
/// ndis).
struct OptimalityRow {
  std::size_t query = 0;
  std::uint64_t natural_ndis = 0;
  double final_recall = 0.0;
  std::vector<std::uint64_t> optimal;
  std::vector<bool> reached;
};

struct OptimalityTable {
  std::vector<double> targets;
  std::vector<OptimalityRow> rows;

  std::size_t target_index(double target) const;  // exact key match or ArgumentError
  void write_csv(std::ostream& out) const;
  void save_csv(const std::filesystem::path& path) const;
};

OptimalityTable optimal_termination(const hnsw::HnswGraph& g, const Dataset& queries, const GroundTruth& gt,
                                    const hnsw::SearchParams& sp, std::span<const double> targets,
                                    std::size_t threads = 0);
OptimalityTable optimal_termination(const ivf::IvfIndex& ix, const Dataset& queries, const GroundTruth& gt,
                                    const ivf::SearchParams& sp, std::span<const double> targets,
                                    std::size_t threads = 0);

/// Mean policy ndis divided by mean optimal ndis, over the queries whose
/// plain search reached `target`.
double optimality_ratio(const OptimalityTable& t, double target, std::span<const QueryOutcome> outcomes);

enum class IntervalMode { adaptive, static_ };

struct GridCell {
  std::size_t ipi = 0;
  std::size_t mpi = 0;
  double mean_recall = 0.0;
  double mean_time_us = 0.0;
  double mean_ndis = 0.0;
  double mean_predictor_calls = 0.0;
  bool feasible = false;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::optional<GridCell> best;  // empty: no cell met the target
};

/// Evaluates every (ipi, mpi) pair with mpi <= ipi (static mode: mpi = ipi
/// for each ipi, mpi_grid ignored) on the validation queries, one query at a
/// time on the calling thread so timings are comparable. The best cell has
/// the lowest mean search time among those with mean recall >= target.
GridResult grid_search_intervals(const hnsw::HnswGraph& g, const gbdt::GbdtModel& model, const Dataset& valid,
                                 const GroundTruth& gt, std::size_t k, std::size_t ef_search, double target,
                                 std::span<const std::size_t> ipi_grid, std::span<const std::size_t> mpi_grid,
                                 IntervalMode mode);

void write_grid_csv(std::ostream& out, const GridResult& r);

struct PredictorMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  bool r2_defined = true;  // false when labels have zero variance
  std::size_t rows = 0;
};

PredictorMetrics predictor_metrics(std::span<const double> predicted, std::span<const double> labels);
PredictorMetrics predictor_metrics(const gbdt::GbdtModel& model, const traindata::ObservationLog& log);

/// Runs `search` for every query on a pool of `threads` workers.
template <typename Search>
std::vector<QueryOutcome> run_queries(const Dataset& queries, std::size_t threads, Search&& search) {
  std::vector<QueryOutcome> out(queries.count());
  parallel_for(queries.count(), threads, [&](std::size_t i) { out[i] = search(queries.row(i)); });
  return out;
}

}  // namespace darth::eval
