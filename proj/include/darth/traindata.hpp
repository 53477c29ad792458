// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "darth/dataset.hpp"
#include "darth/features.hpp"
#include "darth/gbdt.hpp"
#include "darth/hnsw.hpp"
#include "darth/ivf.hpp"

namespace darth::traindata {

enum class IndexKind { hnsw, ivf };

std::string_view index_kind_name(IndexKind k);
IndexKind parse_index_kind(std::string_view name);

/// |topk ∩ gt_row| / |gt_row|.
double label_recall(std::span<const idx_t> topk, std::span<const idx_t> gt_row);

/// Running recall of a search, updated from hook callbacks. A true neighbor
/// that enters the working result set is never evicted and always ranks in
/// its top k, so recall only changes when one is inserted.
class RecallTracker {
 public:
  explicit RecallTracker(std::span<const idx_t> gt_row) : truth_(gt_row.begin(), gt_row.end()) {
    std::sort(truth_.begin(), truth_.end());
  }

  void observe(const SearchState& st) {
    if (st.last_inserted && std::binary_search(truth_.begin(), truth_.end(), st.last.id)) ++hits_;
  }

  double recall() const { return truth_.empty() ? 0.0 : static_cast<double>(hits_) / static_cast<double>(truth_.size()); }
  std::size_t hits() const { return hits_; }

 private:
  std::vector<idx_t> truth_;
  std::size_t hits_ = 0;
};

struct Observation {
  std::uint32_t query_id = 0;
  features::FeatureRow features;
  double recall = 0.0;
};

/// Labeled observations grouped by query in ascending query id, ndis
/// increasing within each query.
struct ObservationLog {
  IndexKind kind = IndexKind::hnsw;
  std::size_t k = 0;
  std::size_t stride = 1;
  std::vector<Observation> rows;

  gbdt::Matrix matrix() const;
  std::vector<double> labels() const;

  /// Observations whose query id is in [begin, end).
  ObservationLog filter_queries(std::uint32_t begin, std::uint32_t end) const;

  /// CSV: query_id,nstep,ndis,ninserts,firstNN,closestNN,furthestNN,avg,var,med,perc25,perc75,recall
  void write_csv(std::ostream& out) const;
  void save_csv(const std::filesystem::path& path) const;
  static ObservationLog load_csv(const std::filesystem::path& path);
};

/// Mean number of distance calculations training queries needed to first
/// reach each recall target. Queries that never reach a target contribute
/// their natural-termination count.
struct EffortTable {
  std::vector<double> targets;  // ascending
  std::vector<double> dists;

  /// Entry for the key nearest to `target`. Throws ConfigError when empty.
  double lookup(double target) const;

  void save_json(const std::filesystem::path& path) const;
  static EffortTable load_json(const std::filesystem::path& path);
};

/// 0.50, 0.55, ..., 0.95 plus 0.96 ... 1.00.
std::vector<double> default_targets();

struct GenerateParams {
  std::size_t stride = 1;
  std::size_t threads = 0;
  std::vector<double> targets = default_targets();
};

/// Runs every training query through the index with an observer that
/// records a labeled feature row every `stride` distance calculations
/// (rows are emitted only once the result set is non-empty).
std::pair<ObservationLog, EffortTable> generate_training_data(const hnsw::HnswGraph& g, const Dataset& queries,
                                                              const GroundTruth& gt, const hnsw::SearchParams& sp,
                                                              const GenerateParams& gp);

std::pair<ObservationLog, EffortTable> generate_training_data(const ivf::IvfIndex& ix, const Dataset& queries,
                                                              const GroundTruth& gt, const ivf::SearchParams& sp,
                                                              const GenerateParams& gp);

}  // namespace darth::traindata
