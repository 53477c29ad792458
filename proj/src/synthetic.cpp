// SPDX-License-Identifier: Apache-2.0
#include "darth/synthetic.hpp"

#include <cmath>
#include <random>

namespace darth::io {

SyntheticMixture::SyntheticMixture(const SyntheticConfig& cfg) : cfg_(cfg) {
  if (cfg.dim == 0 || cfg.clusters == 0 || cfg.latent_dim == 0) {
    throw ArgumentError("synthetic mixture needs positive dim, clusters and latent_dim");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<float> uni(0.0f, cfg.center_range);
  std::normal_distribution<float> gauss(0.0f, cfg.spread);
  centers_.resize(cfg.clusters * cfg.dim);
  for (float& c : centers_) c = uni(rng);
  bases_.resize(cfg.clusters * cfg.dim * cfg.latent_dim);
  for (float& b : bases_) b = gauss(rng);
}

void SyntheticMixture::draw(std::size_t n, std::uint64_t seed, const std::vector<float>& centers,
                            const std::vector<double>& weights, std::vector<float>& out) const {
  const std::size_t dim = cfg_.dim;
  const std::size_t latent = cfg_.latent_dim;
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<float> unit(0.0f, 1.0f);
  std::vector<float> z(latent);
  out.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pick(rng);
    for (float& v : z) v = unit(rng);
    const float* center = centers.data() + c * dim;
    const float* basis = bases_.data() + c * dim * latent;
    float* dst = out.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      float v = center[j];
      const float* brow = basis + j * latent;
      for (std::size_t l = 0; l < latent; ++l) v += brow[l] * z[l];
      dst[j] = v + cfg_.isotropic_noise * unit(rng);
    }
  }
}

Dataset SyntheticMixture::sample(std::size_t n, std::uint64_t seed, Role role) const {
  std::vector<float> out;
  draw(n, seed, centers_, std::vector<double>(cfg_.clusters, 1.0), out);
  return Dataset(cfg_.dim, std::move(out), role);
}

Dataset SyntheticMixture::sample_ood(std::size_t n, std::uint64_t seed, double shift, Role role) const {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> dir(cfg_.dim);
  double norm = 0.0;
  for (double& d : dir) {
    d = unit(rng);
    norm += d * d;
  }
  norm = std::sqrt(norm);
  const double radius = cfg_.spread * std::sqrt(static_cast<double>(cfg_.dim * cfg_.latent_dim));
  std::vector<float> centers = centers_;
  for (std::size_t c = 0; c < cfg_.clusters; ++c) {
    for (std::size_t j = 0; j < cfg_.dim; ++j) {
      centers[c * cfg_.dim + j] += static_cast<float>(shift * radius * dir[j] / norm);
    }
  }
  // Skew the component weights so the query mix differs from the base mix.
  std::vector<double> weights(cfg_.clusters);
  for (std::size_t c = 0; c < cfg_.clusters; ++c) weights[c] = (c % 4 == 0) ? 4.0 : 1.0;
  std::vector<float> out;
  draw(n, seed, centers, weights, out);
  return Dataset(cfg_.dim, std::move(out), role);
}

}  // namespace darth::io
