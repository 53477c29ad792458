// SPDX-License-Identifier: Apache-2.0
#include "darth/ivf.hpp"

#include <cstring>
#include <limits>
#include <random>
#include <string>

#include "binio.hpp"
#include "darth/parallel.hpp"

namespace darth::ivf {
namespace {

constexpr char kMagic[8] = {'D', 'I', 'V', 'F', 'I', 'N', 'D', 'X'};
constexpr std::uint32_t kVersion = 1;

struct Nearest {
  std::uint32_t centroid;
  float dist;
};

Nearest nearest_centroid(const float* v, const std::vector<float>& centroids, std::size_t nlist, std::size_t dim,
                         std::vector<float>& scratch) {
  scratch.resize(nlist);
  simd::l2_sqr_batch(v, centroids.data(), nlist, dim, scratch.data());
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < nlist; ++c) {
    if (scratch[c] < scratch[best]) best = c;
  }
  return {best, scratch[best]};
}

// k-means++: first center uniform, then each next center drawn with
// probability proportional to its squared distance to the nearest chosen
// center.
std::vector<float> seed_centers(const Dataset& data, std::size_t nlist, std::mt19937_64& rng) {
  const std::size_t n = data.count();
  const std::size_t dim = data.dim();
  std::vector<float> centers;
  centers.reserve(nlist * dim);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < nlist; ++c) {
    const auto row = data.row(pick);
    centers.insert(centers.end(), row.begin(), row.end());
    if (c + 1 == nlist) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = simd::l2_sqr(data.row(i), row);
      if (d < min_d[i]) min_d[i] = d;
      total += min_d[i];
    }
    if (total <= 0.0) {
      // Every point coincides with a chosen center; fall back to the first
      // point not yet used so centers stay distinct ids.
      pick = (pick + 1) % n;
      continue;
    }
    double target = uni(rng) * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= min_d[i];
      if (target < 0.0 && min_d[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

}  // namespace

IvfIndex IvfIndex::build(std::shared_ptr<const Dataset> base, const BuildParams& params, std::vector<double>* objective) {
  if (!base || base->empty()) throw ArgumentError("cannot build an IVF index over an empty base set");
  if (params.nlist == 0) throw ArgumentError("nlist must be positive");
  if (params.nlist > base->count()) {
    throw ArgumentError("nlist=" + std::to_string(params.nlist) + " exceeds base size " + std::to_string(base->count()));
  }
  const Dataset& data = *base;
  const std::size_t n = data.count();
  const std::size_t dim = data.dim();
  const std::size_t nlist = params.nlist;

  std::mt19937_64 rng(params.seed);
  std::vector<float> centers = seed_centers(data, nlist, rng);
  std::vector<std::uint32_t> assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<float> assign_dist(n, 0.0f);

  auto assign_all = [&]() {
    std::vector<std::uint32_t> next(n);
    const std::size_t chunk = 256;
    const std::size_t chunks = (n + chunk - 1) / chunk;
    parallel_for(chunks, params.threads, [&](std::size_t ci) {
      std::vector<float> scratch;
      const std::size_t end = std::min(n, (ci + 1) * chunk);
      for (std::size_t i = ci * chunk; i < end; ++i) {
        const Nearest nc = nearest_centroid(data.row(i).data(), centers, nlist, dim, scratch);
        next[i] = nc.centroid;
        assign_dist[i] = nc.dist;
      }
    });
    const bool changed = next != assign;
    assign = std::move(next);
    if (objective) {
      double obj = 0.0;
      for (float d : assign_dist) obj += d;
      objective->push_back(obj);
    }
    return changed;
  };

  IvfIndex ix;
  bool converged = false;
  for (std::size_t it = 0; it < std::max<std::size_t>(params.max_iters, 1); ++it) {
    ix.iterations_ = it + 1;
    if (!assign_all()) {
      converged = true;
      break;
    }
    std::vector<double> sums(nlist * dim, 0.0);
    std::vector<std::size_t> counts(nlist, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = data.row(i);
      double* s = sums.data() + assign[i] * dim;
      for (std::size_t j = 0; j < dim; ++j) s[j] += row[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < nlist; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        centers[c * dim + j] = static_cast<float>(sums[c * dim + j] / static_cast<double>(counts[c]));
      }
    }
    // Empty clusters take over the member of the largest cluster that lies
    // farthest from its centroid.
    for (std::size_t c = 0; c < nlist; ++c) {
      if (counts[c] != 0) continue;
      const std::size_t largest = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      float far_d = -1.0f;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != largest) continue;
        const float d = simd::l2_sqr(data.row(i), std::span<const float>(centers.data() + largest * dim, dim));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n || counts[largest] < 2) continue;
      std::copy_n(data.row(far).data(), dim, centers.begin() + static_cast<std::ptrdiff_t>(c * dim));
      assign[far] = static_cast<std::uint32_t>(c);
      --counts[largest];
      ++counts[c];
    }
  }
  if (!converged) assign_all();

  ix.base_ = std::move(base);
  ix.centroids_ = std::move(centers);
  ix.offsets_.assign(nlist + 1, 0);
  for (std::uint32_t a : assign) ++ix.offsets_[a + 1];
  for (std::size_t c = 0; c < nlist; ++c) ix.offsets_[c + 1] += ix.offsets_[c];
  ix.ids_.resize(n);
  std::vector<std::uint64_t> fill(ix.offsets_.begin(), ix.offsets_.end() - 1);
  for (std::size_t i = 0; i < n; ++i) ix.ids_[fill[assign[i]]++] = static_cast<idx_t>(i);
  return ix;
}

std::size_t IvfIndex::assign(std::span<const float> v) const {
  std::vector<float> scratch;
  return nearest_centroid(v.data(), centroids_, nlist(), dim(), scratch).centroid;
}

void IvfIndex::check_partition() const {
  std::vector<int> seen(size(), 0);
  std::size_t total = 0;
  for (std::size_t c = 0; c < nlist(); ++c) {
    for (idx_t id : bucket(c)) {
      if (id >= size()) throw StateError("bucket id out of range");
      if (seen[id]++) throw StateError("id " + std::to_string(id) + " appears in more than one bucket");
      if (assign(base_->row(id)) != c) {
        throw StateError("id " + std::to_string(id) + " is not in its nearest centroid's bucket");
      }
      ++total;
    }
  }
  if (total != size()) throw StateError("bucket sizes do not sum to the collection size");
}

void IvfIndex::save(const std::filesystem::path& path) const {
  binio::Writer w(path);
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(dim());
  w.put<std::uint64_t>(size());
  w.put<std::uint64_t>(nlist());
  w.put<std::uint64_t>(iterations_);
  w.put_array(centroids_);
  w.put_array(offsets_);
  std::vector<std::uint32_t> ids(ids_.begin(), ids_.end());
  w.put_array(ids);
}

IvfIndex IvfIndex::load(const std::filesystem::path& path, std::shared_ptr<const Dataset> base) {
  binio::Reader r(path);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError(path.string() + ": not an IVF index file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError(path.string() + ": unsupported IVF version " + std::to_string(version));
  const auto dim = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  if (!base || base->dim() != dim || base->count() != count) {
    throw FormatError(path.string() + ": index was built over a different base set");
  }
  const auto nlist = r.get<std::uint64_t>();
  if (nlist == 0 || nlist > count) throw FormatError(path.string() + ": corrupt nlist");
  IvfIndex ix;
  ix.base_ = std::move(base);
  ix.iterations_ = r.get<std::uint64_t>();
  ix.centroids_ = r.get_array<float>(nlist * dim);
  ix.offsets_ = r.get_array<std::uint64_t>(nlist + 1);
  if (ix.offsets_.front() != 0 || ix.offsets_.back() != count || !std::is_sorted(ix.offsets_.begin(), ix.offsets_.end())) {
    throw FormatError(path.string() + ": corrupt bucket offsets");
  }
  const auto ids = r.get_array<std::uint32_t>(count);
  ix.ids_.assign(ids.begin(), ids.end());
  for (idx_t id : ix.ids_) {
    if (id >= count) throw FormatError(path.string() + ": bucket id out of range");
  }
  r.expect_end();
  return ix;
}

QueryOutcome plain_search(const IvfIndex& ix, std::span<const float> q, std::size_t k, std::size_t nprobe) {
  return search_with_hook(ix, q, SearchParams{k, nprobe, true}, NoHook{});
}

}  // namespace darth::ivf
