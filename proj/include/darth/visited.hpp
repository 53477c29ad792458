// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "darth/common.hpp"

namespace darth {

/// Dense visited bitmap sized to the collection.
class VisitedSet {
 public:
  explicit VisitedSet(std::size_t n) : words_((n + 63) / 64, 0) {}

  bool test(idx_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }

  /// Marks i; returns true when it was not marked before.
  bool insert(idx_t i) {
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    std::uint64_t& w = words_[i >> 6];
    const bool fresh = (w & bit) == 0;
    w |= bit;
    return fresh;
  }

  void clear() { std::fill(words_.begin(), words_.end(), 0); }

 private:
  std::vector<std::uint64_t> words_;
};

}  // namespace darth
