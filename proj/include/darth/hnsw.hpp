// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <queue>
#include <span>
#include <vector>

#include "darth/dataset.hpp"
#include "darth/search_state.hpp"
#include "darth/simd/distance.hpp"
#include "darth/visited.hpp"

namespace darth::hnsw {

struct BuildParams {
  std::size_t M = 16;
  std::size_t ef_construction = 200;
  std::uint64_t seed = 100;
  /// 1 builds sequentially and is fully deterministic. More threads insert
  /// concurrently under per-node locks; the resulting graph then depends on
  /// scheduling.
  std::size_t threads = 1;
};

struct SearchParams {
  std::size_t k = 10;
  std::size_t ef_search = 100;
  /// Cap the working result set at k instead of max(k, ef_search).
  bool strict_k = false;
};

/// Multi-layer proximity graph over an externally owned base set. Immutable
/// after build/load; any number of threads may search it concurrently.
class HnswGraph {
 public:
  static HnswGraph build(std::shared_ptr<const Dataset> base, const BuildParams& params);

  void save(const std::filesystem::path& path) const;
  /// `base` must be the collection the graph was built on (count and dim are
  /// checked).
  static HnswGraph load(const std::filesystem::path& path, std::shared_ptr<const Dataset> base);

  const Dataset& base() const { return *base_; }
  std::size_t size() const { return levels_.size(); }
  std::size_t dim() const { return base_->dim(); }
  std::size_t M() const { return M_; }
  std::size_t max_degree(int layer) const { return layer == 0 ? 2 * M_ : M_; }
  std::size_t ef_construction() const { return ef_construction_; }
  idx_t entry_point() const { return entry_point_; }
  int max_level() const { return max_level_; }
  int level(idx_t node) const { return levels_[node]; }

  std::span<const idx_t> neighbors(idx_t node, int layer) const {
    if (layer == 0) return {links0_.data() + static_cast<std::size_t>(node) * 2 * M_, deg0_[node]};
    return upper_[node][static_cast<std::size_t>(layer) - 1];
  }

  /// Verifies the structural invariants (no self loops, no duplicates,
  /// degree bounds, entry point on the top layer). Throws StateError.
  void check_invariants() const;

 private:
  class Builder;

  std::shared_ptr<const Dataset> base_;
  std::size_t M_ = 0;
  std::size_t ef_construction_ = 0;
  idx_t entry_point_ = 0;
  int max_level_ = 0;
  std::vector<int> levels_;
  std::vector<idx_t> links0_;         // size() x 2M slots
  std::vector<std::uint32_t> deg0_;   // used slots per node at layer 0
  std::vector<std::vector<std::vector<idx_t>>> upper_;  // [node][layer-1]
};

namespace detail {

using Clock = std::chrono::steady_clock;

// Greedy width-1 descent through the upper layers followed by best-first
// expansion of the base layer. The hook sees every base-layer distance
// calculation, including the one for the base-layer entry node.
template <typename Hook>
QueryOutcome search(const HnswGraph& g, const float* q, const SearchParams& p, Hook&& hook) {
  constexpr bool kHook = hook_is_active<Hook>();
  const auto t0 = Clock::now();
  const auto dist = simd::kernels().l2_sqr;
  const std::size_t dim = g.dim();
  const Dataset& base = g.base();
  auto vec = [&](idx_t i) { return base.data() + static_cast<std::size_t>(i) * dim; };

  idx_t cur = g.entry_point();
  float cur_dist = dist(q, vec(cur), dim);
  for (int layer = g.max_level(); layer > 0; --layer) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (idx_t n : g.neighbors(cur, layer)) {
        const float d = dist(q, vec(n), dim);
        if (Neighbor{d, n} < Neighbor{cur_dist, cur}) {
          cur = n;
          cur_dist = d;
          changed = true;
        }
      }
    }
  }

  const std::size_t width = p.strict_k ? p.k : std::max(p.k, p.ef_search);
  VisitedSet visited(g.size());
  std::priority_queue<Neighbor, std::vector<Neighbor>, std::greater<>> candidates;
  std::vector<Neighbor> results;
  results.reserve(width + 1);

  QueryOutcome out;
  SearchState st;
  st.k = p.k;

  visited.insert(cur);
  candidates.push({cur_dist, cur});
  results.push_back({cur_dist, cur});
  out.ndis = 1;
  out.ninserts = 1;

  auto finish = [&](Termination why) {
    out.terminated = why;
    finalize_results(results, p.k, out);
    out.elapsed_us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
    return out;
  };

  if constexpr (kHook) {
    st.first_nn = cur_dist;
    st.has_first_nn = true;
    st.ndis = out.ndis;
    st.ninserts = out.ninserts;
    st.results = results;
    st.last = {cur_dist, cur};
    st.last_inserted = true;
    if (hook(static_cast<const SearchState&>(st)) == HookAction::terminate) return finish(Termination::early);
  }

  while (!candidates.empty()) {
    const Neighbor c = candidates.top();
    if (results.size() >= width && results.front() < c) break;
    candidates.pop();
    for (idx_t n : g.neighbors(c.id, 0)) {
      if (!visited.insert(n)) continue;
      const Neighbor nb{dist(q, vec(n), dim), n};
      ++out.ndis;
      bool inserted = false;
      if (results.size() < width || nb < results.front()) {
        candidates.push(nb);
        results.push_back(nb);
        std::push_heap(results.begin(), results.end());
        if (results.size() > width) {
          std::pop_heap(results.begin(), results.end());
          results.pop_back();
        }
        ++out.ninserts;
        inserted = true;
      }
      if constexpr (kHook) {
        st.ndis = out.ndis;
        st.nstep = out.nstep;
        st.ninserts = out.ninserts;
        st.results = results;
        st.last = nb;
        st.last_inserted = inserted;
        if (hook(static_cast<const SearchState&>(st)) == HookAction::terminate) return finish(Termination::early);
      } else {
        (void)inserted;
      }
    }
    ++out.nstep;
  }
  return finish(Termination::natural);
}

}  // namespace detail

/// Search with no early termination: stops when the closest unexpanded
/// candidate is worse than the worst member of a full result set.
QueryOutcome plain_search(const HnswGraph& g, std::span<const float> q, std::size_t k, std::size_t ef_search);
QueryOutcome plain_search(const HnswGraph& g, std::span<const float> q, const SearchParams& p);

/// Same traversal as plain_search; `hook(const SearchState&)` runs after each
/// base-layer distance calculation and may stop the search.
template <typename Hook>
QueryOutcome search_with_hook(const HnswGraph& g, std::span<const float> q, const SearchParams& p, Hook&& hook) {
  if (p.k == 0) throw ArgumentError("k must be positive");
  if (p.k > g.size()) throw ArgumentError("k exceeds the number of indexed vectors");
  if (q.size() != g.dim()) throw ArgumentError("query dimension does not match the index");
  return detail::search(g, q.data(), p, std::forward<Hook>(hook));
}

}  // namespace darth::hnsw
