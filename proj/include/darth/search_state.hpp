// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

#include "darth/common.hpp"

namespace darth {

enum class HookAction { proceed, terminate };

enum class Termination { natural, early };

std::string_view termination_name(Termination t);

/// Snapshot of a running search as seen by a hook. `results` aliases the
/// search's working result heap (a max-heap under Neighbor ordering) and is
/// only valid for the duration of the hook call.
struct SearchState {
  std::size_t k = 0;
  std::uint64_t ndis = 0;
  std::uint64_t nstep = 0;
  std::uint64_t ninserts = 0;
  float first_nn = 0.0f;
  bool has_first_nn = false;
  std::span<const Neighbor> results;
  /// Most recent distance calculation and whether it entered the result set.
  Neighbor last{};
  bool last_inserted = false;
  /// True while an IVF search is still ranking centroids.
  bool ranking_centroids = false;
};

/// Per-query result of any search policy. `ids`/`dists` hold at most k
/// entries sorted ascending by (distance, id).
struct QueryOutcome {
  std::vector<idx_t> ids;
  std::vector<float> dists;
  std::uint64_t ndis = 0;
  std::uint64_t nstep = 0;
  std::uint64_t ninserts = 0;
  std::uint64_t predictor_calls = 0;
  Termination terminated = Termination::natural;
  double elapsed_us = 0.0;
};

/// Hook that never fires. Searches instantiated with it skip all state
/// bookkeeping.
struct NoHook {
  static constexpr bool active = false;
  HookAction operator()(const SearchState&) const { return HookAction::proceed; }
};

template <typename H>
constexpr bool hook_is_active() {
  if constexpr (requires { std::remove_cvref_t<H>::active; }) {
    return std::remove_cvref_t<H>::active;
  } else {
    return true;
  }
}

/// Sorts a working heap ascending and keeps the first k entries.
void finalize_results(std::vector<Neighbor>& heap, std::size_t k, QueryOutcome& out);

}  // namespace darth
