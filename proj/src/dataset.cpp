// SPDX-License-Identifier: Apache-2.0
#include "darth/dataset.hpp"

#include <cmath>
#include <string>

namespace darth {

std::string_view role_name(Role r) {
  switch (r) {
    case Role::base:
      return "base";
    case Role::query:
      return "query";
    case Role::learn:
      return "learn";
  }
  return "unknown";
}

Dataset::Dataset(std::size_t dim, std::vector<float> values, Role role) : dim_(dim), values_(std::move(values)), role_(role) {
  if (dim_ == 0) {
    if (!values_.empty()) throw ArgumentError("dataset with dim 0 must be empty");
    count_ = 0;
    return;
  }
  if (values_.size() % dim_ != 0) {
    throw ArgumentError("dataset length " + std::to_string(values_.size()) + " is not a multiple of dim " +
                        std::to_string(dim_));
  }
  count_ = values_.size() / dim_;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw DataError("non-finite component in row " + std::to_string(i / dim_) + ", column " +
                      std::to_string(i % dim_));
    }
  }
}

Dataset Dataset::subset(std::span<const idx_t> ids, Role role) const {
  std::vector<float> out;
  out.reserve(ids.size() * dim_);
  for (idx_t id : ids) {
    if (id >= count_) throw ArgumentError("subset id " + std::to_string(id) + " out of range");
    const auto r = row(id);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Dataset(dim_, std::move(out), role);
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > count_) throw ArgumentError("slice out of range");
  return Dataset(dim_, std::vector<float>(values_.begin() + begin * dim_, values_.begin() + end * dim_), role_);
}

GroundTruth GroundTruth::truncated(std::size_t new_k) const {
  if (new_k > k) {
    throw ArgumentError("ground truth has width " + std::to_string(k) + ", cannot truncate to " + std::to_string(new_k));
  }
  GroundTruth out;
  out.k = new_k;
  out.count = count;
  out.ids.reserve(count * new_k);
  out.dists.reserve(count * new_k);
  for (std::size_t i = 0; i < count; ++i) {
    out.ids.insert(out.ids.end(), ids.begin() + i * k, ids.begin() + i * k + new_k);
    out.dists.insert(out.dists.end(), dists.begin() + i * k, dists.begin() + i * k + new_k);
  }
  return out;
}

GroundTruth GroundTruth::rows(std::span<const idx_t> which) const {
  GroundTruth out;
  out.k = k;
  out.count = which.size();
  for (idx_t r : which) {
    if (r >= count) throw ArgumentError("ground truth row " + std::to_string(r) + " out of range");
    out.ids.insert(out.ids.end(), ids.begin() + r * k, ids.begin() + (r + 1) * k);
    out.dists.insert(out.dists.end(), dists.begin() + r * k, dists.begin() + (r + 1) * k);
  }
  return out;
}

}  // namespace darth
