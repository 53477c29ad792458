// SPDX-License-Identifier: Apache-2.0
#include "darth/hnsw.hpp"

#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <string>
#include <unordered_set>

#include "binio.hpp"
#include "darth/parallel.hpp"

namespace darth::hnsw {
namespace {

constexpr char kMagic[8] = {'D', 'H', 'N', 'S', 'W', 'G', 'R', 'F'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

class HnswGraph::Builder {
 public:
  Builder(HnswGraph& g, const BuildParams& p) : g_(g), p_(p), locks_(g.size()) {}

  void insert(idx_t node) {
    const int level = g_.levels_[node];
    std::unique_lock global(global_);
    const int top = g_.max_level_;
    const idx_t entry = g_.entry_point_;
    if (level <= top) global.unlock();

    const float* q = vec(node);
    idx_t cur = entry;
    float cur_dist = dist(q, vec(cur));
    for (int layer = top; layer > level; --layer) {
      bool changed = true;
      while (changed) {
        changed = false;
        for (idx_t n : copy_neighbors(cur, layer)) {
          const float d = dist(q, vec(n));
          if (Neighbor{d, n} < Neighbor{cur_dist, cur}) {
            cur = n;
            cur_dist = d;
            changed = true;
          }
        }
      }
    }

    VisitedSet visited(g_.size());
    for (int layer = std::min(level, top); layer >= 0; --layer) {
      visited.clear();
      std::vector<Neighbor> found = search_layer(q, node, {cur_dist, cur}, layer, visited);
      std::sort(found.begin(), found.end());
      const std::vector<idx_t> selected = select_neighbors(found, p_.M);
      set_neighbors(node, layer, selected);
      for (idx_t s : selected) link(s, node, layer);
      cur = found.front().id;
      cur_dist = found.front().dist;
    }

    if (level > top) {
      g_.max_level_ = level;
      g_.entry_point_ = node;
    }
  }

 private:
  const float* vec(idx_t i) const { return g_.base_->data() + static_cast<std::size_t>(i) * g_.dim(); }
  float dist(const float* a, const float* b) const { return simd::kernels().l2_sqr(a, b, g_.dim()); }

  std::vector<idx_t> copy_neighbors(idx_t node, int layer) {
    std::lock_guard lock(locks_[node]);
    const auto n = g_.neighbors(node, layer);
    return {n.begin(), n.end()};
  }

  std::vector<Neighbor> search_layer(const float* q, idx_t self, Neighbor entry, int layer, VisitedSet& visited) {
    std::priority_queue<Neighbor, std::vector<Neighbor>, std::greater<>> candidates;
    std::vector<Neighbor> results;
    const std::size_t width = p_.ef_construction;
    visited.insert(entry.id);
    visited.insert(self);
    candidates.push(entry);
    results.push_back(entry);
    while (!candidates.empty()) {
      const Neighbor c = candidates.top();
      if (results.size() >= width && results.front() < c) break;
      candidates.pop();
      for (idx_t n : copy_neighbors(c.id, layer)) {
        if (!visited.insert(n)) continue;
        const Neighbor nb{dist(q, vec(n)), n};
        if (results.size() < width || nb < results.front()) {
          candidates.push(nb);
          results.push_back(nb);
          std::push_heap(results.begin(), results.end());
          if (results.size() > width) {
            std::pop_heap(results.begin(), results.end());
            results.pop_back();
          }
        }
      }
    }
    return results;
  }

  // Keeps a candidate only if it is closer to the query than to every
  // neighbor already kept. `sorted` must be ascending.
  std::vector<idx_t> select_neighbors(const std::vector<Neighbor>& sorted, std::size_t limit) const {
    std::vector<idx_t> kept;
    kept.reserve(limit);
    for (const Neighbor& c : sorted) {
      if (kept.size() >= limit) break;
      bool good = true;
      for (idx_t s : kept) {
        if (dist(vec(c.id), vec(s)) < c.dist) {
          good = false;
          break;
        }
      }
      if (good) kept.push_back(c.id);
    }
    return kept;
  }

  void set_neighbors(idx_t node, int layer, const std::vector<idx_t>& ids) {
    std::lock_guard lock(locks_[node]);
    write_list(node, layer, ids);
  }

  void write_list(idx_t node, int layer, const std::vector<idx_t>& ids) {
    if (layer == 0) {
      std::copy(ids.begin(), ids.end(), g_.links0_.begin() + static_cast<std::ptrdiff_t>(node * 2 * g_.M_));
      g_.deg0_[node] = static_cast<std::uint32_t>(ids.size());
    } else {
      g_.upper_[node][static_cast<std::size_t>(layer) - 1] = ids;
    }
  }

  // Adds `node` to the list of `target`, re-running the selection heuristic
  // when the list is full.
  void link(idx_t target, idx_t node, int layer) {
    std::lock_guard lock(locks_[target]);
    const auto current = g_.neighbors(target, layer);
    if (std::find(current.begin(), current.end(), node) != current.end()) return;
    const std::size_t cap = g_.max_degree(layer);
    std::vector<idx_t> ids(current.begin(), current.end());
    if (ids.size() < cap) {
      ids.push_back(node);
      write_list(target, layer, ids);
      return;
    }
    std::vector<Neighbor> cands;
    cands.reserve(ids.size() + 1);
    const float* t = vec(target);
    for (idx_t n : ids) cands.push_back({dist(t, vec(n)), n});
    cands.push_back({dist(t, vec(node)), node});
    std::sort(cands.begin(), cands.end());
    write_list(target, layer, select_neighbors(cands, cap));
  }

  HnswGraph& g_;
  const BuildParams& p_;
  std::vector<std::mutex> locks_;
  std::mutex global_;
};

HnswGraph HnswGraph::build(std::shared_ptr<const Dataset> base, const BuildParams& params) {
  if (!base || base->empty()) throw ArgumentError("cannot build an HNSW graph over an empty base set");
  if (params.M < 2) throw ArgumentError("M must be at least 2");
  if (params.ef_construction < params.M) throw ArgumentError("ef_construction must be at least M");
  if (base->count() > std::numeric_limits<idx_t>::max()) throw ArgumentError("base set too large for 32-bit ids");

  HnswGraph g;
  g.base_ = std::move(base);
  g.M_ = params.M;
  g.ef_construction_ = params.ef_construction;
  const std::size_t n = g.base_->count();

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double mult = 1.0 / std::log(static_cast<double>(params.M));
  g.levels_.resize(n);
  for (auto& l : g.levels_) l = static_cast<int>(std::floor(-std::log(1.0 - uni(rng)) * mult));

  g.links0_.assign(n * 2 * params.M, 0);
  g.deg0_.assign(n, 0);
  g.upper_.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.upper_[i].resize(static_cast<std::size_t>(g.levels_[i]));
  g.entry_point_ = 0;
  g.max_level_ = g.levels_[0];

  Builder builder(g, params);
  if (params.threads <= 1) {
    for (std::size_t i = 1; i < n; ++i) builder.insert(static_cast<idx_t>(i));
  } else {
    parallel_for(n - 1, params.threads, [&](std::size_t i) { builder.insert(static_cast<idx_t>(i + 1)); });
  }
  return g;
}

void HnswGraph::check_invariants() const {
  const std::size_t n = size();
  if (entry_point_ >= n) throw StateError("entry point out of range");
  if (levels_[entry_point_] != max_level_) throw StateError("entry point is not on the top layer");
  for (std::size_t i = 0; i < n; ++i) {
    if (levels_[i] < 0 || levels_[i] > max_level_) throw StateError("node level out of range");
    for (int layer = 0; layer <= levels_[i]; ++layer) {
      const auto nb = neighbors(static_cast<idx_t>(i), layer);
      if (nb.size() > max_degree(layer)) {
        throw StateError("degree bound violated at node " + std::to_string(i) + " layer " + std::to_string(layer));
      }
      std::unordered_set<idx_t> seen;
      for (idx_t v : nb) {
        if (v == i) throw StateError("self loop at node " + std::to_string(i));
        if (v >= n) throw StateError("neighbor id out of range at node " + std::to_string(i));
        if (levels_[v] < layer) throw StateError("edge to a node absent from layer " + std::to_string(layer));
        if (!seen.insert(v).second) throw StateError("duplicate neighbor at node " + std::to_string(i));
      }
    }
  }
}

void HnswGraph::save(const std::filesystem::path& path) const {
  binio::Writer w(path);
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(dim());
  w.put<std::uint64_t>(size());
  w.put<std::uint64_t>(M_);
  w.put<std::uint64_t>(ef_construction_);
  w.put<std::uint32_t>(entry_point_);
  w.put<std::int32_t>(max_level_);
  std::vector<std::int32_t> lv(levels_.begin(), levels_.end());
  w.put_array(lv);
  for (int layer = 0; layer <= max_level_; ++layer) {
    std::vector<std::uint64_t> offsets(size() + 1, 0);
    std::vector<std::uint32_t> ids;
    for (std::size_t i = 0; i < size(); ++i) {
      if (levels_[i] >= layer) {
        const auto nb = neighbors(static_cast<idx_t>(i), layer);
        ids.insert(ids.end(), nb.begin(), nb.end());
      }
      offsets[i + 1] = ids.size();
    }
    w.put_array(offsets);
    w.put_array(ids);
  }
}

HnswGraph HnswGraph::load(const std::filesystem::path& path, std::shared_ptr<const Dataset> base) {
  binio::Reader r(path);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError(path.string() + ": not an HNSW graph file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError(path.string() + ": unsupported graph version " + std::to_string(version));
  const auto dim = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  if (!base || base->dim() != dim || base->count() != count) {
    throw FormatError(path.string() + ": graph was built over a different base set");
  }
  HnswGraph g;
  g.base_ = std::move(base);
  g.M_ = r.get<std::uint64_t>();
  g.ef_construction_ = r.get<std::uint64_t>();
  g.entry_point_ = r.get<std::uint32_t>();
  g.max_level_ = r.get<std::int32_t>();
  if (g.M_ < 2 || g.max_level_ < 0 || g.entry_point_ >= count) throw FormatError(path.string() + ": corrupt header");
  auto lv = r.get_array<std::int32_t>(count);
  g.levels_.assign(lv.begin(), lv.end());
  g.links0_.assign(count * 2 * g.M_, 0);
  g.deg0_.assign(count, 0);
  g.upper_.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (g.levels_[i] < 0 || g.levels_[i] > g.max_level_) throw FormatError(path.string() + ": corrupt level array");
    g.upper_[i].resize(static_cast<std::size_t>(g.levels_[i]));
  }
  for (int layer = 0; layer <= g.max_level_; ++layer) {
    const auto offsets = r.get_array<std::uint64_t>(count + 1);
    const auto ids = r.get_array<std::uint32_t>(offsets.back());
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t b = offsets[i];
      const std::uint64_t e = offsets[i + 1];
      if (e < b || e > ids.size() || e - b > g.max_degree(layer)) {
        throw FormatError(path.string() + ": corrupt adjacency at layer " + std::to_string(layer));
      }
      if (e == b) continue;
      if (g.levels_[i] < layer) throw FormatError(path.string() + ": adjacency for a node absent from its layer");
      if (layer == 0) {
        std::copy(ids.begin() + static_cast<std::ptrdiff_t>(b), ids.begin() + static_cast<std::ptrdiff_t>(e),
                  g.links0_.begin() + static_cast<std::ptrdiff_t>(i * 2 * g.M_));
        g.deg0_[i] = static_cast<std::uint32_t>(e - b);
      } else {
        g.upper_[i][static_cast<std::size_t>(layer) - 1].assign(ids.begin() + static_cast<std::ptrdiff_t>(b),
                                                                 ids.begin() + static_cast<std::ptrdiff_t>(e));
      }
    }
  }
  r.expect_end();
  g.check_invariants();
  return g;
}

QueryOutcome plain_search(const HnswGraph& g, std::span<const float> q, std::size_t k, std::size_t ef_search) {
  return plain_search(g, q, SearchParams{k, ef_search, false});
}

QueryOutcome plain_search(const HnswGraph& g, std::span<const float> q, const SearchParams& p) {
  return search_with_hook(g, q, p, NoHook{});
}

}  // namespace darth::hnsw
