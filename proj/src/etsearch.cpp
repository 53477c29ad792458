// SPDX-License-Identifier: Apache-2.0
#include "darth/etsearch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace darth::et {

std::size_t next_interval(std::size_t mpi, std::size_t ipi, double target, double predicted) {
  if (mpi > ipi) throw ArgumentError("mpi must not exceed ipi");
  const double lo = static_cast<double>(mpi);
  const double hi = static_cast<double>(ipi);
  const double pi = std::round(lo + (hi - lo) * (target - predicted));
  return static_cast<std::size_t>(std::clamp(pi, lo, hi));
}

Intervals heuristic_params(const traindata::EffortTable& effort, double target) {
  const double d = effort.lookup(target);
  Intervals iv;
  iv.ipi = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(d / 2.0)));
  iv.mpi = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(d / 10.0)));
  iv.mpi = std::min(iv.mpi, iv.ipi);
  return iv;
}

void EtConfig::validate() const {
  if (!(target_recall > 0.0 && target_recall <= 1.0)) throw ArgumentError("target recall must lie in (0, 1]");
  if (k == 0) throw ArgumentError("k must be positive");
  if (intervals.mpi < 1 || intervals.mpi > intervals.ipi) throw ArgumentError("intervals must satisfy 1 <= mpi <= ipi");
  if (model == nullptr) throw ArgumentError("a recall predictor is required");
  if (model->feature_count() != features::kFeatureCount) {
    throw ArgumentError("recall predictor expects " + std::to_string(model->feature_count()) + " features, not " +
                        std::to_string(features::kFeatureCount));
  }
}

DarthHook::DarthHook(const EtConfig& cfg, std::vector<std::size_t>* interval_trace)
    : cfg_(cfg), trace_(interval_trace), pi_(cfg.intervals.ipi) {
  if (trace_) trace_->push_back(pi_);
}

HookAction DarthHook::operator()(const SearchState& st) {
  ++idis_;
  // During IVF centroid ranking there is nothing to describe yet; the call
  // is deferred to the first observation with a non-empty result set.
  if (idis_ < pi_ || st.results.empty() || !st.has_first_nn) return HookAction::proceed;
  const features::FeatureRow row = fx_(st);
  last_prediction_ = cfg_.model->predict(row.span());
  ++calls_;
  if (last_prediction_ >= cfg_.target_recall) return HookAction::terminate;
  pi_ = next_interval(cfg_.intervals.mpi, cfg_.intervals.ipi, cfg_.target_recall, last_prediction_);
  if (trace_) trace_->push_back(pi_);
  idis_ = 0;
  return HookAction::proceed;
}

QueryOutcome darth_search(const hnsw::HnswGraph& g, std::span<const float> q, const EtConfig& cfg,
                          std::vector<std::size_t>* interval_trace) {
  cfg.validate();
  DarthHook hook(cfg, interval_trace);
  QueryOutcome out = hnsw::search_with_hook(g, q, hnsw::SearchParams{cfg.k, cfg.width, false}, hook);
  out.predictor_calls = hook.predictor_calls();
  return out;
}

QueryOutcome darth_search_ivf(const ivf::IvfIndex& ix, std::span<const float> q, const EtConfig& cfg,
                              std::vector<std::size_t>* interval_trace) {
  cfg.validate();
  DarthHook hook(cfg, interval_trace);
  QueryOutcome out = ivf::search_with_hook(ix, q, ivf::SearchParams{cfg.k, cfg.width, true}, hook);
  out.predictor_calls = hook.predictor_calls();
  return out;
}

}  // namespace darth::et
