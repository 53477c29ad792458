// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "darth/common.hpp"

namespace darth {

enum class Role { base, query, learn };

std::string_view role_name(Role r);

/// Dense row-major collection of float vectors. Immutable once built; every
/// component is finite.
class Dataset {
 public:
  Dataset() = default;

  /// Takes ownership of `values` (count*dim floats). Throws DataError on a
  /// non-finite component and ArgumentError when the length is not a
  /// multiple of dim.
  Dataset(std::size_t dim, std::vector<float> values, Role role = Role::base);

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  bool empty() const { return count_ == 0; }
  Role role() const { return role_; }
  void set_role(Role r) { role_ = r; }

  std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  const float* data() const { return values_.data(); }
  const std::vector<float>& values() const { return values_; }

  /// Rows `ids` in the given order.
  Dataset subset(std::span<const idx_t> ids, Role role) const;

  /// Rows [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;

 private:
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<float> values_;
  Role role_ = Role::base;
};

/// Exact k nearest neighbors of a query set. Row i holds the ids of the
/// query's k nearest base vectors sorted by ascending squared L2 distance,
/// ties broken by lower id.
struct GroundTruth {
  std::size_t k = 0;
  std::size_t count = 0;
  std::vector<idx_t> ids;
  std::vector<float> dists;

  std::span<const idx_t> ids_row(std::size_t i) const { return {ids.data() + i * k, k}; }
  std::span<const float> dists_row(std::size_t i) const { return {dists.data() + i * k, k}; }

  /// First `k` columns of every row. Throws ArgumentError if k > this->k.
  GroundTruth truncated(std::size_t k) const;
  GroundTruth rows(std::span<const idx_t> which) const;
};

}  // namespace darth
