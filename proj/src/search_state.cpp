// SPDX-License-Identifier: Apache-2.0
#include "darth/search_state.hpp"

#include <algorithm>

namespace darth {

std::string_view termination_name(Termination t) { return t == Termination::early ? "early" : "natural"; }

void finalize_results(std::vector<Neighbor>& heap, std::size_t k, QueryOutcome& out) {
  std::sort(heap.begin(), heap.end());
  const std::size_t n = std::min(k, heap.size());
  out.ids.resize(n);
  out.dists.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.ids[i] = heap[i].id;
    out.dists[i] = heap[i].dist;
  }
}

}  // namespace darth
