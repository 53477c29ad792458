// SPDX-License-Identifier: Apache-2.0
#include "darth/vectors_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "darth/parallel.hpp"
#include "darth/simd/distance.hpp"

namespace darth::io {
namespace {

static_assert(std::endian::native == std::endian::little, "vector file I/O assumes a little-endian host");

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> bytes(size);
  if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size))) {
    throw FormatError("short read on " + path.string());
  }
  return bytes;
}

std::size_t element_size(VecFormat f) { return f == VecFormat::bvecs ? 1 : 4; }

// Walks the record framing shared by all three formats and hands each
// payload to `emit`. Returns (dim, count).
template <typename Emit>
std::pair<std::size_t, std::size_t> walk_records(const std::vector<char>& bytes, VecFormat fmt,
                                                 const std::filesystem::path& path, Emit&& emit) {
  const std::size_t esz = element_size(fmt);
  std::size_t off = 0;
  std::size_t dim = 0;
  std::size_t count = 0;
  while (off < bytes.size()) {
    const std::size_t record = count + 1;
    if (bytes.size() - off < 4) {
      throw FormatError(path.string() + ": truncated dimension header of record " + std::to_string(record) +
                        " at byte offset " + std::to_string(off));
    }
    std::int32_t d = 0;
    std::memcpy(&d, bytes.data() + off, 4);
    if (d <= 0) {
      throw FormatError(path.string() + ": record " + std::to_string(record) + " declares invalid dimension " +
                        std::to_string(d) + " at byte offset " + std::to_string(off));
    }
    if (count == 0) {
      dim = static_cast<std::size_t>(d);
    } else if (static_cast<std::size_t>(d) != dim) {
      throw FormatError(path.string() + ": dimension mismatch at record " + std::to_string(record) + " (declares " +
                        std::to_string(d) + ", expected " + std::to_string(dim) + ")");
    }
    const std::size_t payload = dim * esz;
    if (bytes.size() - off - 4 < payload) {
      throw FormatError(path.string() + ": truncated payload of record " + std::to_string(record) +
                        " at byte offset " + std::to_string(off + 4));
    }
    emit(bytes.data() + off + 4, dim);
    off += 4 + payload;
    ++count;
  }
  return {dim, count};
}

void write_or_throw(std::ofstream& out, const void* p, std::size_t n, const std::filesystem::path& path) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw FormatError("write failed on " + path.string());
}

}  // namespace

VecFormat parse_format(std::string_view name) {
  if (name == "fvecs") return VecFormat::fvecs;
  if (name == "ivecs") return VecFormat::ivecs;
  if (name == "bvecs") return VecFormat::bvecs;
  throw ArgumentError("unknown vector format '" + std::string(name) + "'");
}

VecFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext.size() < 2) throw ArgumentError("cannot infer vector format of " + path.string());
  return parse_format(ext.substr(1));
}

Dataset load_vectors(const std::filesystem::path& path, VecFormat format, Role role) {
  const auto bytes = read_file(path);
  std::vector<float> values;
  const auto [dim, count] = walk_records(bytes, format, path, [&](const char* p, std::size_t d) {
    const std::size_t start = values.size();
    values.resize(start + d);
    float* dst = values.data() + start;
    switch (format) {
      case VecFormat::fvecs:
        std::memcpy(dst, p, d * 4);
        break;
      case VecFormat::ivecs:
        for (std::size_t i = 0; i < d; ++i) {
          std::int32_t v;
          std::memcpy(&v, p + 4 * i, 4);
          dst[i] = static_cast<float>(v);
        }
        break;
      case VecFormat::bvecs:
        for (std::size_t i = 0; i < d; ++i) dst[i] = static_cast<float>(static_cast<unsigned char>(p[i]));
        break;
    }
  });
  (void)count;
  return Dataset(dim, std::move(values), role);
}

void save_vectors(const std::filesystem::path& path, const Dataset& data, VecFormat format) {
  if (format == VecFormat::ivecs) throw ArgumentError("use save_ivecs for integer matrices");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  const auto d = static_cast<std::int32_t>(data.dim());
  std::vector<unsigned char> bytes(data.dim());
  for (std::size_t i = 0; i < data.count(); ++i) {
    write_or_throw(out, &d, 4, path);
    const auto row = data.row(i);
    if (format == VecFormat::fvecs) {
      write_or_throw(out, row.data(), row.size() * 4, path);
    } else {
      for (std::size_t j = 0; j < row.size(); ++j) {
        bytes[j] = static_cast<unsigned char>(std::clamp(std::lround(row[j]), 0L, 255L));
      }
      write_or_throw(out, bytes.data(), bytes.size(), path);
    }
  }
}

IntMatrix load_ivecs(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  IntMatrix m;
  const auto [dim, count] = walk_records(bytes, VecFormat::ivecs, path, [&](const char* p, std::size_t d) {
    const std::size_t start = m.values.size();
    m.values.resize(start + d);
    std::memcpy(m.values.data() + start, p, d * 4);
  });
  m.dim = dim;
  m.count = count;
  return m;
}

void save_ivecs(const std::filesystem::path& path, const IntMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  const auto d = static_cast<std::int32_t>(m.dim);
  for (std::size_t i = 0; i < m.count; ++i) {
    write_or_throw(out, &d, 4, path);
    write_or_throw(out, m.values.data() + i * m.dim, m.dim * 4, path);
  }
}

void save_ground_truth(const std::filesystem::path& prefix, const GroundTruth& gt) {
  IntMatrix ids;
  ids.dim = gt.k;
  ids.count = gt.count;
  ids.values.assign(gt.ids.begin(), gt.ids.end());
  save_ivecs(std::filesystem::path(prefix.string() + ".ivecs"), ids);
  save_vectors(std::filesystem::path(prefix.string() + ".fvecs"), Dataset(gt.k, gt.dists, Role::query));
}

GroundTruth load_ground_truth(const std::filesystem::path& prefix) {
  const auto ids = load_ivecs(std::filesystem::path(prefix.string() + ".ivecs"));
  const auto dists = load_vectors(std::filesystem::path(prefix.string() + ".fvecs"), VecFormat::fvecs);
  if (ids.count != dists.count() || ids.dim != dists.dim()) {
    throw FormatError("ground truth id/distance files disagree in shape for " + prefix.string());
  }
  GroundTruth gt;
  gt.k = ids.dim;
  gt.count = ids.count;
  gt.ids.reserve(ids.values.size());
  for (std::int32_t v : ids.values) {
    if (v < 0) throw FormatError("negative id in ground truth " + prefix.string());
    gt.ids.push_back(static_cast<idx_t>(v));
  }
  gt.dists = dists.values();
  return gt;
}

GroundTruth brute_force_knn(const Dataset& base, const Dataset& queries, std::size_t k, std::size_t threads) {
  if (k == 0) throw ArgumentError("k must be positive");
  if (k > base.count()) {
    throw ArgumentError("k=" + std::to_string(k) + " exceeds base size " + std::to_string(base.count()));
  }
  if (!queries.empty() && queries.dim() != base.dim()) throw ArgumentError("query and base dimensions differ");

  GroundTruth gt;
  gt.k = k;
  gt.count = queries.count();
  gt.ids.resize(gt.count * k);
  gt.dists.resize(gt.count * k);
  const std::size_t n = base.count();
  parallel_for(queries.count(), threads, [&](std::size_t qi) {
    std::vector<float> dist(n);
    simd::l2_sqr_batch(queries.row(qi).data(), base.data(), n, base.dim(), dist.data());
    std::vector<Neighbor> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = {dist[i], static_cast<idx_t>(i)};
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    for (std::size_t j = 0; j < k; ++j) {
      gt.ids[qi * k + j] = all[j].id;
      gt.dists[qi * k + j] = all[j].dist;
    }
  });
  return gt;
}

NoiseRule parse_noise_rule(std::string_view name) {
  if (name == "variance-of-norm") return NoiseRule::variance_of_norm;
  if (name == "stddev-of-norm") return NoiseRule::stddev_of_norm;
  if (name == "variance-of-norm-sq") return NoiseRule::variance_of_norm_sq;
  throw ArgumentError("unknown noise rule '" + std::string(name) + "'");
}

Dataset add_gaussian_noise(const Dataset& queries, double noise_pct, std::uint64_t seed, NoiseRule rule) {
  if (!(noise_pct >= 0.0)) throw ArgumentError("noise_pct must be non-negative");
  std::vector<float> out = queries.values();
  if (noise_pct == 0.0) return Dataset(queries.dim(), std::move(out), queries.role());

  const std::size_t dim = queries.dim();
  for (std::size_t i = 0; i < queries.count(); ++i) {
    const auto row = queries.row(i);
    double norm_sq = 0.0;
    for (float v : row) norm_sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(norm_sq);
    double sigma = 0.0;
    switch (rule) {
      case NoiseRule::variance_of_norm:
        sigma = std::sqrt(noise_pct * norm);
        break;
      case NoiseRule::stddev_of_norm:
        sigma = noise_pct * norm;
        break;
      case NoiseRule::variance_of_norm_sq:
        sigma = std::sqrt(noise_pct * norm_sq);
        break;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] += static_cast<float>(sigma * gauss(rng));
  }
  return Dataset(dim, std::move(out), queries.role());
}

std::pair<Dataset, Dataset> split_learn_queries(const Dataset& learn, std::size_t n_train, std::size_t n_valid,
                                                std::uint64_t seed) {
  if (n_train + n_valid > learn.count()) {
    throw ArgumentError("requested " + std::to_string(n_train) + "+" + std::to_string(n_valid) +
                        " queries from a learn set of " + std::to_string(learn.count()));
  }
  std::vector<idx_t> order(learn.count());
  std::iota(order.begin(), order.end(), idx_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::span<const idx_t> all(order);
  return {learn.subset(all.subspan(0, n_train), Role::query), learn.subset(all.subspan(n_train, n_valid), Role::query)};
}

}  // namespace darth::io
