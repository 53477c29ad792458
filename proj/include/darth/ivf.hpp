// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "darth/dataset.hpp"
#include "darth/search_state.hpp"
#include "darth/simd/distance.hpp"

namespace darth::ivf {

struct BuildParams {
  std::size_t nlist = 1000;
  std::size_t max_iters = 25;
  std::uint64_t seed = 1234;
  std::size_t threads = 0;
};

struct SearchParams {
  std::size_t k = 10;
  std::size_t nprobe = 10;
  /// Whether the nlist query-to-centroid distances count toward ndis (and
  /// are reported to hooks).
  bool count_centroid_distances = true;
};

/// Inverted-file index: k-means centroids plus one id bucket per centroid.
class IvfIndex {
 public:
  /// k-means++ seeding followed by Lloyd iterations until the assignment
  /// stops changing or max_iters is reached. If `objective` is non-null it
  /// receives the sum of squared point-to-centroid distances after every
  /// assignment step.
  static IvfIndex build(std::shared_ptr<const Dataset> base, const BuildParams& params,
                        std::vector<double>* objective = nullptr);

  void save(const std::filesystem::path& path) const;
  static IvfIndex load(const std::filesystem::path& path, std::shared_ptr<const Dataset> base);

  const Dataset& base() const { return *base_; }
  std::size_t nlist() const { return offsets_.size() - 1; }
  std::size_t dim() const { return base_->dim(); }
  std::size_t size() const { return base_->count(); }
  std::size_t iterations() const { return iterations_; }

  std::span<const float> centroid(std::size_t c) const { return {centroids_.data() + c * dim(), dim()}; }
  const std::vector<float>& centroids() const { return centroids_; }
  std::span<const idx_t> bucket(std::size_t c) const {
    return {ids_.data() + offsets_[c], static_cast<std::size_t>(offsets_[c + 1] - offsets_[c])};
  }

  /// Nearest centroid of vector `v` (ties to the lower centroid index).
  std::size_t assign(std::span<const float> v) const;

  /// Re-runs the assignment and checks every id sits in its nearest
  /// centroid's bucket exactly once. Throws StateError.
  void check_partition() const;

 private:
  std::shared_ptr<const Dataset> base_;
  std::vector<float> centroids_;
  std::vector<std::uint64_t> offsets_{0};
  std::vector<idx_t> ids_;
  std::size_t iterations_ = 0;
};

namespace detail {

template <typename Hook>
QueryOutcome search(const IvfIndex& ix, const float* q, const SearchParams& p, Hook&& hook) {
  constexpr bool kHook = hook_is_active<Hook>();
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const auto dist = simd::kernels().l2_sqr;
  const std::size_t dim = ix.dim();
  const std::size_t nlist = ix.nlist();
  const Dataset& base = ix.base();

  QueryOutcome out;
  SearchState st;
  st.k = p.k;
  std::vector<Neighbor> results;
  results.reserve(p.k + 1);

  auto finish = [&](Termination why) {
    out.terminated = why;
    finalize_results(results, p.k, out);
    out.elapsed_us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
    return out;
  };

  std::vector<Neighbor> ranked(nlist);
  st.ranking_centroids = true;
  for (std::size_t c = 0; c < nlist; ++c) {
    ranked[c] = {dist(q, ix.centroids().data() + c * dim, dim), static_cast<idx_t>(c)};
    if (p.count_centroid_distances) {
      ++out.ndis;
      if constexpr (kHook) {
        st.ndis = out.ndis;
        st.results = results;
        st.last = ranked[c];
        st.last_inserted = false;
        if (hook(static_cast<const SearchState&>(st)) == HookAction::terminate) return finish(Termination::early);
      }
    }
  }
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(p.nprobe), ranked.end());
  st.ranking_centroids = false;
  st.first_nn = ranked.front().dist;
  st.has_first_nn = true;

  for (std::size_t b = 0; b < p.nprobe; ++b) {
    out.nstep = b + 1;
    for (idx_t id : ix.bucket(ranked[b].id)) {
      const Neighbor nb{dist(q, base.data() + static_cast<std::size_t>(id) * dim, dim), id};
      ++out.ndis;
      bool inserted = false;
      if (results.size() < p.k || nb < results.front()) {
        results.push_back(nb);
        std::push_heap(results.begin(), results.end());
        if (results.size() > p.k) {
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
  }
  return finish(Termination::natural);
}

}  // namespace detail

/// Scans the nprobe buckets nearest to q, in centroid-distance order.
QueryOutcome plain_search(const IvfIndex& ix, std::span<const float> q, std::size_t k, std::size_t nprobe);

/// As plain_search; the hook runs after every distance calculation
/// (centroid ranking included when counted) and may stop the scan.
template <typename Hook>
QueryOutcome search_with_hook(const IvfIndex& ix, std::span<const float> q, const SearchParams& p, Hook&& hook) {
  if (p.k == 0) throw ArgumentError("k must be positive");
  if (p.nprobe == 0 || p.nprobe > ix.nlist()) throw ArgumentError("nprobe must lie in [1, nlist]");
  if (q.size() != ix.dim()) throw ArgumentError("query dimension does not match the index");
  return detail::search(ix, q.data(), p, std::forward<Hook>(hook));
}

}  // namespace darth::ivf
