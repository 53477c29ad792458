// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "darth/features.hpp"
#include "darth/gbdt.hpp"
#include "darth/hnsw.hpp"
#include "darth/ivf.hpp"
#include "darth/traindata.hpp"

namespace darth::et {

struct Intervals {
  std::size_t ipi = 0;  // initial (and maximum) prediction interval
  std::size_t mpi = 0;  // minimum prediction interval
};

/// mpi + (ipi - mpi) * (target - predicted), rounded to the nearest integer
/// and clamped to [mpi, ipi].
std::size_t next_interval(std::size_t mpi, std::size_t ipi, double target, double predicted);

/// ipi = round(d / 2), mpi = max(1, round(d / 10)) where d is the mean
/// effort the training queries needed to reach `target`.
Intervals heuristic_params(const traindata::EffortTable& effort, double target);

/// A declarative-recall query: stop as soon as the predictor believes the
/// running search has reached `target_recall`.
struct EtConfig {
  double target_recall = 0.9;
  std::size_t k = 10;
  Intervals intervals;
  const gbdt::GbdtModel* model = nullptr;
  /// ef_search for HNSW, nprobe for IVF.
  std::size_t width = 0;

  void validate() const;
};

/// Hook that calls the recall predictor every `pi` distance calculations and
/// adapts `pi` after each call. Usable with any index's search_with_hook.
class DarthHook {
 public:
  explicit DarthHook(const EtConfig& cfg, std::vector<std::size_t>* interval_trace = nullptr);

  HookAction operator()(const SearchState& st);

  std::size_t predictor_calls() const { return calls_; }
  double last_prediction() const { return last_prediction_; }

 private:
  const EtConfig& cfg_;
  std::vector<std::size_t>* trace_;
  features::FeatureExtractor fx_;
  std::size_t pi_;
  std::size_t idis_ = 0;
  std::size_t calls_ = 0;
  double last_prediction_ = 0.0;
};

/// Early-terminating HNSW search. `interval_trace`, when non-null, receives
/// every prediction interval put into effect (the initial one included).
QueryOutcome darth_search(const hnsw::HnswGraph& g, std::span<const float> q, const EtConfig& cfg,
                          std::vector<std::size_t>* interval_trace = nullptr);

/// Early-terminating IVF search: firstNN is the nearest-centroid distance and
/// nstep the ordinal of the bucket being scanned.
QueryOutcome darth_search_ivf(const ivf::IvfIndex& ix, std::span<const float> q, const EtConfig& cfg,
                              std::vector<std::size_t>* interval_trace = nullptr);

}  // namespace darth::et
