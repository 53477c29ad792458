// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "darth/gbdt.hpp"
#include "darth/hnsw.hpp"
#include "darth/ivf.hpp"

namespace darth::baselines {

inline constexpr std::uint64_t kUnlimited = std::numeric_limits<std::uint64_t>::max();

/// Plain search stopped once ndis reaches `budget`.
QueryOutcome baseline_search(const hnsw::HnswGraph& g, std::span<const float> q, std::size_t k, std::size_t ef_search,
                             std::uint64_t budget);
QueryOutcome baseline_search_ivf(const ivf::IvfIndex& ix, std::span<const float> q, std::size_t k, std::size_t nprobe,
                                 std::uint64_t budget);

/// Recall-to-width mapping: per target, the smallest ladder width (efSearch
/// or nprobe) whose mean validation recall reaches the target.
struct RemTable {
  struct Entry {
    double target = 0.0;
    std::size_t width = 0;
    double recall = 0.0;    // mean validation recall at `width`
    bool attained = false;  // false: ladder exhausted, width is the maximum
  };
  std::vector<std::size_t> ladder;
  std::vector<double> ladder_recall;
  std::vector<Entry> entries;

  const Entry& lookup(double target) const;  // nearest target key

  void save_json(const std::filesystem::path& path) const;
  static RemTable load_json(const std::filesystem::path& path);
};

/// Builds the table from one mean-recall measurement per ladder value.
RemTable rem_from_measurements(std::span<const std::size_t> ladder, std::span<const double> mean_recall,
                               std::span<const double> targets);

RemTable build_rem(const hnsw::HnswGraph& g, const Dataset& valid, const GroundTruth& gt, std::size_t k,
                   std::span<const std::size_t> ladder, std::span<const double> targets, std::size_t threads = 0);
RemTable build_rem_ivf(const ivf::IvfIndex& ix, const Dataset& valid, const GroundTruth& gt, std::size_t k,
                       std::span<const std::size_t> ladder, std::span<const double> targets, std::size_t threads = 0);

/// One-shot learned budget: at ndis == fixed_point the model predicts the
/// total distance calculations the query needs; the search then runs to
/// max(fixed_point, round(prediction * multiplier)).
struct LaetModel {
  gbdt::GbdtModel budget;
  std::uint64_t fixed_point = 1;
  double multiplier = 1.0;
};

struct LaetTrainingSet {
  gbdt::Matrix rows;
  std::vector<double> labels;  // ndis at which the final top-k was complete
};

/// Runs plain searches over the training queries, snapshotting features at
/// `fixed_point` and labeling each query with the ndis at which the last
/// member of its final top-k entered the result set. Queries that finish
/// before `fixed_point` are skipped.
LaetTrainingSet laet_training_set(const hnsw::HnswGraph& g, const Dataset& queries, const hnsw::SearchParams& sp,
                                  std::uint64_t fixed_point, std::size_t threads = 0);

LaetModel train_laet(const hnsw::HnswGraph& g, const Dataset& queries, const hnsw::SearchParams& sp,
                     std::uint64_t fixed_point, const gbdt::TrainConfig& cfg, std::size_t threads = 0);

QueryOutcome laet_search(const hnsw::HnswGraph& g, std::span<const float> q, std::size_t k, std::size_t ef_search,
                         const LaetModel& lm);

struct LaetTuning {
  double multiplier = 0.0;
  double mean_recall = 0.0;
  bool attained = false;  // false: no grid value reached the target
};

/// Mean validation recall of laet_search with the given multiplier.
double laet_mean_recall(const hnsw::HnswGraph& g, const LaetModel& lm, double multiplier, const Dataset& valid,
                        const GroundTruth& gt, std::size_t k, std::size_t ef_search, std::size_t threads = 0);

/// Smallest grid multiplier whose mean validation recall reaches `target`,
/// found by binary search over the ascending grid.
LaetTuning tune_laet(const hnsw::HnswGraph& g, const LaetModel& lm, const Dataset& valid, const GroundTruth& gt,
                     std::size_t k, std::size_t ef_search, double target, std::span<const double> grid,
                     std::size_t threads = 0);

/// 0.10, 0.15, ..., 3.00.
std::vector<double> default_multiplier_grid();

/// Persisted LAET tuning: the fixed point plus one tuned multiplier per
/// target, keyed by the target with two decimals.
struct LaetConfig {
  std::uint64_t fixed_point = 1;
  std::vector<double> targets;  // ascending
  std::vector<LaetTuning> tunings;

  /// Tuning for the key nearest to `target`. Throws ConfigError when empty.
  const LaetTuning& lookup(double target) const;

  void save_json(const std::filesystem::path& path) const;
  static LaetConfig load_json(const std::filesystem::path& path);
};

}  // namespace darth::baselines
