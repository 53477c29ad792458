// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "darth/search_state.hpp"

namespace darth::features {

inline constexpr std::size_t kFeatureCount = 11;

/// Column order of a feature row. This order is part of the training-log
/// and model-file contracts; do not reorder.
enum class Feature : std::size_t {
  nstep = 0,
  ndis,
  ninserts,
  first_nn,
  closest_nn,
  furthest_nn,
  avg,
  var,
  med,
  perc25,
  perc75,
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "nstep", "ndis", "ninserts", "firstNN", "closestNN", "furthestNN", "avg", "var", "med", "perc25", "perc75"};

/// One observation of a running search.
struct FeatureRow {
  std::array<double, kFeatureCount> values{};

  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  std::span<const double> span() const { return values; }

  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

/// Computes the observation for `state`. Distance features are squared L2;
/// statistics use the k best entries of the working result set, population
/// variance, and linearly interpolated percentiles. Throws StateError when
/// the result set is empty or firstNN has not been recorded.
///
/// Reuses internal buffers, so one extractor per thread.
class FeatureExtractor {
 public:
  FeatureRow operator()(const SearchState& state);

 private:
  std::vector<float> dists_;
  std::vector<float> cand_;
  std::vector<float> top_;
  std::vector<unsigned char> filled_;
};

FeatureRow extract_features(const SearchState& state);

/// Percentile of an ascending sequence by linear interpolation between the
/// closest ranks (p in [0,1]).
double interpolated_percentile(std::span<const float> sorted, double p);

}  // namespace darth::features
