// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "darth/common.hpp"

namespace darth::gbdt {

/// Row-major dense feature matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  void append(std::span<const double> r);
};

struct TrainConfig {
  std::size_t n_estimators = 100;
  double learning_rate = 0.1;
  std::size_t max_depth = 6;
  std::size_t min_samples_leaf = 20;
  /// Split candidates per feature. 0 selects exact mode: every midpoint
  /// between consecutive distinct values is a candidate.
  std::size_t max_bins = 256;
  double subsample_rows = 1.0;
  std::uint64_t seed = 7;
  std::size_t threads = 0;

  void validate() const;
};

/// Internal nodes route a row left when !(x[feature] > threshold), so NaN
/// goes left. Leaves carry the learning-rate-scaled value.
struct Node {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
  double gain = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const {
    std::int32_t i = 0;
    while (!nodes[i].is_leaf()) {
      const Node& n = nodes[i];
      i = row[static_cast<std::size_t>(n.feature)] > n.threshold ? n.right : n.left;
    }
    return nodes[i].value;
  }

  std::size_t depth() const;
};

struct Importance {
  std::vector<double> shares;  // sums to 1 unless degenerate
  bool degenerate = false;     // no split anywhere in the model
};

/// Additive ensemble of regression trees over a fixed-width feature row.
class GbdtModel {
 public:
  GbdtModel() = default;
  GbdtModel(std::size_t feature_count, double learning_rate, double base_score, std::vector<Tree> trees);

  std::size_t feature_count() const { return feature_count_; }
  std::size_t n_estimators() const { return trees_.size(); }
  double learning_rate() const { return learning_rate_; }
  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }

  /// Unclamped ensemble output. Throws ArgumentError on a width mismatch.
  double predict_raw(std::span<const double> row) const;

  /// Ensemble output clamped to [0, 1] (recall prediction).
  double predict(std::span<const double> row) const;

  std::vector<double> predict_batch(const Matrix& rows) const;

  /// Split gain accumulated per feature, normalized to sum to 1.
  Importance feature_importance() const;

  void save(const std::filesystem::path& path) const;
  static GbdtModel load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
  static GbdtModel read(std::istream& in);

 private:
  // Inference copy of the trees: 16-byte nodes in preorder, so a left
  // child always sits right after its parent. Leaves hold their value in
  // `v`, splits their threshold.
  struct Packed {
    double v;
    std::int32_t feature;  // -1 for a leaf
    std::uint32_t right;
  };

  void pack();

  std::size_t feature_count_ = 0;
  double learning_rate_ = 0.1;
  double base_score_ = 0.0;
  std::vector<Tree> trees_;
  std::vector<Packed> packed_;
  std::vector<std::uint32_t> roots_;
};

/// Least-squares gradient boosting with histogram split finding. Labels must
/// lie in [0, 1]. `train_mse`, if given, receives the training MSE after each
/// round (index 0 is the base-score-only model).
GbdtModel train(const Matrix& rows, std::span<const double> labels, const TrainConfig& cfg,
                std::vector<double>* train_mse = nullptr);

/// Same as train() without the [0, 1] label restriction.
GbdtModel train_regressor(const Matrix& rows, std::span<const double> labels, const TrainConfig& cfg,
                          std::vector<double>* train_mse = nullptr);

}  // namespace darth::gbdt
