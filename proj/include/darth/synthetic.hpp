// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "darth/dataset.hpp"

namespace darth::io {

/// Gaussian mixture where each component lives near an affine subspace of
/// moderate dimension. The defaults give SIFT-like magnitudes (norms in the
/// hundreds) and roughly SIFT-like difficulty at 100K points: HNSW with M=16
/// needs efSearch well above k=50 to reach recall 0.9, and additive query
/// noise makes queries measurably harder.
struct SyntheticConfig {
  std::size_t dim = 128;
  std::size_t clusters = 16;
  std::size_t latent_dim = 80;
  float center_range = 60.0f;   // centers uniform in [0, center_range]^dim
  float spread = 0.7f;          // std-dev of the latent basis entries
  float isotropic_noise = 1.0f;
  std::uint64_t seed = 42;
};

class SyntheticMixture {
 public:
  explicit SyntheticMixture(const SyntheticConfig& cfg);

  const SyntheticConfig& config() const { return cfg_; }

  /// n i.i.d. draws. Distinct seeds give independent samples of the same
  /// distribution.
  Dataset sample(std::size_t n, std::uint64_t seed, Role role) const;

  /// Out-of-distribution draws: every center is translated by a shared
  /// random offset of norm `shift` times the typical in-cluster radius, and
  /// cluster weights are skewed toward a subset of components.
  Dataset sample_ood(std::size_t n, std::uint64_t seed, double shift, Role role = Role::query) const;

 private:
  void draw(std::size_t n, std::uint64_t seed, const std::vector<float>& centers, const std::vector<double>& weights,
            std::vector<float>& out) const;

  SyntheticConfig cfg_;
  std::vector<float> centers_;  // clusters x dim
  std::vector<float> bases_;    // clusters x dim x latent
};

}  // namespace darth::io
