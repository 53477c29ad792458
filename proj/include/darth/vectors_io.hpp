// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "darth/dataset.hpp"

namespace darth::io {

enum class VecFormat { fvecs, ivecs, bvecs };

/// Parses "fvecs" | "ivecs" | "bvecs". Throws ArgumentError otherwise.
VecFormat parse_format(std::string_view name);

/// Picks the format from the file extension.
VecFormat format_from_path(const std::filesystem::path& path);

/// Reads a whole .fvecs/.ivecs/.bvecs file. Integer and byte payloads are
/// widened to float. An empty file yields an empty dataset with dim 0.
Dataset load_vectors(const std::filesystem::path& path, VecFormat format, Role role = Role::base);

/// Writes fvecs or bvecs (components rounded and clamped to [0,255]).
void save_vectors(const std::filesystem::path& path, const Dataset& data, VecFormat format = VecFormat::fvecs);

struct IntMatrix {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::vector<std::int32_t> values;
};

IntMatrix load_ivecs(const std::filesystem::path& path);
void save_ivecs(const std::filesystem::path& path, const IntMatrix& m);

/// Ground truth is persisted as `<prefix>.ivecs` (ids) + `<prefix>.fvecs`
/// (squared distances).
void save_ground_truth(const std::filesystem::path& prefix, const GroundTruth& gt);
GroundTruth load_ground_truth(const std::filesystem::path& prefix);

/// Exact k-NN by full scan, parallel across queries.
GroundTruth brute_force_knn(const Dataset& base, const Dataset& queries, std::size_t k, std::size_t threads = 0);

/// How the per-query noise level relates to the query norm.
enum class NoiseRule {
  variance_of_norm,     // sigma^2 = pct * ||q||
  stddev_of_norm,       // sigma   = pct * ||q||
  variance_of_norm_sq,  // sigma^2 = pct * ||q||^2
};

NoiseRule parse_noise_rule(std::string_view name);

/// Adds i.i.d. Gaussian noise to every component of every query. Each query
/// draws from its own generator seeded by (seed, row), so the output does
/// not depend on evaluation order.
Dataset add_gaussian_noise(const Dataset& queries, double noise_pct, std::uint64_t seed,
                           NoiseRule rule = NoiseRule::variance_of_norm);

/// Two disjoint random subsets of `learn`, of sizes n_train and n_valid.
std::pair<Dataset, Dataset> split_learn_queries(const Dataset& learn, std::size_t n_train, std::size_t n_valid,
                                                std::uint64_t seed);

}  // namespace darth::io
