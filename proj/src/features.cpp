// SPDX-License-Identifier: Apache-2.0
#include "darth/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace darth::features {

double interpolated_percentile(std::span<const float> sorted, double p) {
  if (sorted.empty()) throw StateError("percentile of an empty sequence");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) + frac * (static_cast<double>(sorted[hi]) - static_cast<double>(sorted[lo]));
}

namespace {

// Writes the k smallest of v[0, n) to out in ascending order. Runs a few times
// per query on data the branch predictor has never seen, so it filters by a
// sampled pivot and ranks the survivors by counting instead of sorting.
// cand needs n + 8 slots.
void smallest_sorted(const float* v, std::size_t n, std::size_t k, float* out, float* cand, unsigned char* filled) {
  constexpr std::size_t kSample = 24;
  std::size_t c = n;
  std::copy(v, v + n, cand);
  if (n > 2 * kSample && k < n / 2) {
    float s[kSample];
    const std::size_t step = n / kSample;
    for (std::size_t i = 0; i < kSample; ++i) s[i] = v[i * step];
    std::sort(s, s + kSample);
    for (std::size_t at = k * kSample / n + 2; at < kSample; at += 2) {
      const float pivot = s[at];
      std::size_t m = 0;
      for (std::size_t i = 0; i < n; ++i) {
        cand[m] = v[i];
        m += v[i] <= pivot;
      }
      if (m >= k) {
        c = m;
        break;
      }
      std::copy(v, v + n, cand);
    }
  }
  // Every value below a candidate is itself a candidate, so counting within
  // cand gives the global rank. Equal values share a rank; the gaps they
  // leave are filled from the left.
  const std::size_t padded = (c + 7) & ~std::size_t{7};
  std::fill(cand + c, cand + padded, std::numeric_limits<float>::infinity());
  std::fill(filled, filled + k, 0);
  for (std::size_t i = 0; i < c; ++i) {
    const float x = cand[i];
    std::int32_t r = 0;
    for (std::size_t j = 0; j < padded; ++j) r += cand[j] < x;
    if (static_cast<std::size_t>(r) < k) {
      out[r] = x;
      filled[r] = 1;
    }
  }
  for (std::size_t p = 1; p < k; ++p) {
    if (!filled[p]) out[p] = out[p - 1];
  }
}

}  // namespace

FeatureRow FeatureExtractor::operator()(const SearchState& state) {
  if (state.results.empty()) throw StateError("feature extraction needs a non-empty result set");
  if (!state.has_first_nn) throw StateError("feature extraction before firstNN was recorded");

  const std::size_t size = state.results.size();
  dists_.resize(size);
  for (std::size_t i = 0; i < size; ++i) dists_[i] = state.results[i].dist;
  const std::size_t n = std::min(state.k, size);
  cand_.resize(size + 8);
  top_.resize(n);
  filled_.resize(n);
  smallest_sorted(dists_.data(), size, n, top_.data(), cand_.data(), filled_.data());
  const std::span<const float> top(top_.data(), n);

  double sum = 0.0;
  for (float d : top) sum += d;
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (float d : top) sq += (d - mean) * (d - mean);

  FeatureRow row;
  row[Feature::nstep] = static_cast<double>(state.nstep);
  row[Feature::ndis] = static_cast<double>(state.ndis);
  row[Feature::ninserts] = static_cast<double>(state.ninserts);
  row[Feature::first_nn] = state.first_nn;
  row[Feature::closest_nn] = top.front();
  row[Feature::furthest_nn] = top.back();
  row[Feature::avg] = mean;
  row[Feature::var] = sq / static_cast<double>(n);
  row[Feature::med] = interpolated_percentile(top, 0.5);
  row[Feature::perc25] = interpolated_percentile(top, 0.25);
  row[Feature::perc75] = interpolated_percentile(top, 0.75);
  return row;
}

FeatureRow extract_features(const SearchState& state) {
  FeatureExtractor fx;
  return fx(state);
}

}  // namespace darth::features
