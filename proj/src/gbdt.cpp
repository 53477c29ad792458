// SPDX-License-Identifier: Apache-2.0
#include "darth/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "darth/parallel.hpp"

namespace darth::gbdt {
namespace {

constexpr double kMinGain = 1e-12;
constexpr std::string_view kHeader = "darth-gbdt-model";
constexpr int kFormatVersion = 1;

struct Binned {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<double>> cuts;  // per feature, ascending
  std::vector<std::uint16_t> bins;        // column-major
  std::vector<std::size_t> offset;        // histogram offset per feature
  std::size_t hist_size = 0;

  std::uint16_t bin(std::size_t f, std::size_t i) const { return bins[f * rows + i]; }
};

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m >= b ? a : m;
}

std::vector<double> feature_cuts(std::vector<double> col, std::size_t max_bins) {
  std::sort(col.begin(), col.end());
  std::vector<double> distinct;
  std::vector<std::size_t> counts;
  for (double v : col) {
    if (distinct.empty() || v != distinct.back()) {
      distinct.push_back(v);
      counts.push_back(1);
    } else {
      ++counts.back();
    }
  }
  std::vector<double> cuts;
  if (distinct.size() < 2) return cuts;
  if (max_bins == 0 || distinct.size() <= max_bins) {
    cuts.reserve(distinct.size() - 1);
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) cuts.push_back(midpoint(distinct[i], distinct[i + 1]));
    return cuts;
  }
  // Equal-frequency boundaries, never splitting a run of equal values.
  const double per_bin = static_cast<double>(col.size()) / static_cast<double>(max_bins);
  std::size_t cumulative = 0;
  std::size_t next_boundary = 1;
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    cumulative += counts[i];
    if (static_cast<double>(cumulative) >= per_bin * static_cast<double>(next_boundary)) {
      cuts.push_back(midpoint(distinct[i], distinct[i + 1]));
      while (static_cast<double>(cumulative) >= per_bin * static_cast<double>(next_boundary)) ++next_boundary;
      if (cuts.size() + 1 >= max_bins) break;
    }
  }
  return cuts;
}

Binned bin_matrix(const Matrix& x, std::size_t max_bins, std::size_t threads) {
  Binned b;
  b.rows = x.rows;
  b.cols = x.cols;
  b.cuts.resize(x.cols);
  b.bins.resize(x.rows * x.cols);
  parallel_for(x.cols, threads, [&](std::size_t f) {
    std::vector<double> col(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) col[i] = x.values[i * x.cols + f];
    b.cuts[f] = feature_cuts(col, max_bins);
    if (b.cuts[f].size() >= std::numeric_limits<std::uint16_t>::max()) {
      throw ArgumentError("feature " + std::to_string(f) + " has too many distinct values for exact split mode");
    }
    const auto& cuts = b.cuts[f];
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double v = col[i];
      b.bins[f * x.rows + i] =
          static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
    }
  });
  b.offset.resize(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    b.offset[f] = b.hist_size;
    b.hist_size += b.cuts[f].size() + 1;
  }
  return b;
}

struct HistBin {
  double sum = 0.0;
  std::uint32_t count = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Binned& data, const std::vector<double>& residual, const TrainConfig& cfg)
      : data_(data), residual_(residual), cfg_(cfg) {}

  Tree build(std::vector<std::uint32_t>& rows) {
    std::vector<HistBin> hist(data_.hist_size);
    fill_histogram(rows, hist);
    grow(rows, hist, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    std::size_t feature = 0;
    std::size_t bin = 0;
    double gain = 0.0;
    bool found = false;
  };

  void fill_histogram(std::span<const std::uint32_t> rows, std::vector<HistBin>& hist) const {
    std::fill(hist.begin(), hist.end(), HistBin{});
    const std::size_t work = rows.size() * data_.cols;
    const std::size_t threads = work > (1u << 16) ? cfg_.threads : 1;
    parallel_for(data_.cols, threads, [&](std::size_t f) {
      HistBin* h = hist.data() + data_.offset[f];
      const std::uint16_t* col = data_.bins.data() + f * data_.rows;
      for (std::uint32_t r : rows) {
        HistBin& hb = h[col[r]];
        hb.sum += residual_[r];
        ++hb.count;
      }
    });
  }

  Split best_split(const std::vector<HistBin>& hist, double total, std::size_t n) const {
    Split best;
    const double parent = total * total / static_cast<double>(n);
    for (std::size_t f = 0; f < data_.cols; ++f) {
      const std::size_t nbins = data_.cuts[f].size() + 1;
      const HistBin* h = hist.data() + data_.offset[f];
      double left_sum = 0.0;
      std::size_t left_n = 0;
      for (std::size_t b = 0; b + 1 < nbins; ++b) {
        left_sum += h[b].sum;
        left_n += h[b].count;
        const std::size_t right_n = n - left_n;
        if (left_n < cfg_.min_samples_leaf) continue;
        if (right_n < cfg_.min_samples_leaf) break;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(left_n) +
                            right_sum * right_sum / static_cast<double>(right_n) - parent;
        if (gain > kMinGain && (!best.found || gain > best.gain)) {
          best = {f, b, gain, true};
        }
      }
    }
    return best;
  }

  std::int32_t grow(std::span<std::uint32_t> rows, std::vector<HistBin>& hist, std::size_t depth) {
    const auto idx = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double total = 0.0;
    for (std::uint32_t r : rows) total += residual_[r];
    const std::size_t n = rows.size();

    Split split;
    if (depth < cfg_.max_depth && n >= 2 * std::max<std::size_t>(cfg_.min_samples_leaf, 1)) {
      split = best_split(hist, total, n);
    }
    if (!split.found) {
      tree_.nodes[idx].value = cfg_.learning_rate * total / static_cast<double>(n);
      return idx;
    }

    const std::uint16_t* col = data_.bins.data() + split.feature * data_.rows;
    const auto mid = std::stable_partition(rows.begin(), rows.end(), [&](std::uint32_t r) { return col[r] <= split.bin; });
    const auto n_left = static_cast<std::size_t>(mid - rows.begin());
    std::span<std::uint32_t> left = rows.subspan(0, n_left);
    std::span<std::uint32_t> right = rows.subspan(n_left);

    // Build the smaller child's histogram directly, derive the other by
    // subtraction from the parent.
    std::vector<HistBin> small_hist(data_.hist_size);
    const bool left_small = left.size() <= right.size();
    fill_histogram(left_small ? left : right, small_hist);
    for (std::size_t i = 0; i < hist.size(); ++i) {
      hist[i].sum -= small_hist[i].sum;
      hist[i].count -= small_hist[i].count;
    }
    std::vector<HistBin>& left_hist = left_small ? small_hist : hist;
    std::vector<HistBin>& right_hist = left_small ? hist : small_hist;

    const std::int32_t l = grow(left, left_hist, depth + 1);
    const std::int32_t r = grow(right, right_hist, depth + 1);
    Node& node = tree_.nodes[idx];
    node.feature = static_cast<std::int32_t>(split.feature);
    node.threshold = data_.cuts[split.feature][split.bin];
    node.gain = split.gain;
    node.left = l;
    node.right = r;
    return idx;
  }

  const Binned& data_;
  const std::vector<double>& residual_;
  const TrainConfig& cfg_;
  Tree tree_;
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size()) {
    throw FormatError("model line " + std::to_string(line) + ": bad number '" + tok + "'");
  }
  return v;
}

}  // namespace

void Matrix::append(std::span<const double> r) {
  if (rows == 0 && values.empty()) cols = r.size();
  if (r.size() != cols) throw ArgumentError("row width does not match matrix");
  values.insert(values.end(), r.begin(), r.end());
  ++rows;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ArgumentError("learning_rate must lie in (0, 1]");
  if (max_bins == 1) throw ArgumentError("max_bins must be 0 (exact) or at least 2");
  if (!(subsample_rows > 0.0 && subsample_rows <= 1.0)) throw ArgumentError("subsample_rows must lie in (0, 1]");
}

std::size_t Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[i].is_leaf()) {
      stack.push_back({nodes[i].left, d + 1});
      stack.push_back({nodes[i].right, d + 1});
    }
  }
  return deepest;
}

GbdtModel::GbdtModel(std::size_t feature_count, double learning_rate, double base_score, std::vector<Tree> trees)
    : feature_count_(feature_count), learning_rate_(learning_rate), base_score_(base_score), trees_(std::move(trees)) {
  for (const Tree& t : trees_) {
    if (t.nodes.empty()) throw FormatError("tree without nodes");
    for (const Node& n : t.nodes) {
      if (n.is_leaf()) continue;
      if (static_cast<std::size_t>(n.feature) >= feature_count_) throw FormatError("split feature out of range");
      const auto size = static_cast<std::int32_t>(t.nodes.size());
      if (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size) throw FormatError("bad child index");
    }
  }
  pack();
}

void GbdtModel::pack() {
  packed_.clear();
  roots_.clear();
  for (const Tree& t : trees_) {
    roots_.push_back(static_cast<std::uint32_t>(packed_.size()));
    std::vector<std::pair<std::int32_t, std::int64_t>> stack{{0, -1}};  // node, packed parent awaiting `right`
    std::size_t visited = 0;
    while (!stack.empty()) {
      const auto [i, parent] = stack.back();
      stack.pop_back();
      if (++visited > t.nodes.size()) throw FormatError("tree nodes do not form a tree");
      const auto at = static_cast<std::uint32_t>(packed_.size());
      if (parent >= 0) packed_[static_cast<std::size_t>(parent)].right = at;
      const Node& n = t.nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) {
        packed_.push_back({n.value, -1, 0});
      } else {
        packed_.push_back({n.threshold, n.feature, 0});
        stack.push_back({n.right, at});
        stack.push_back({n.left, -1});
      }
    }
  }
}

double GbdtModel::predict_raw(std::span<const double> row) const {
  if (row.size() != feature_count_) {
    throw ArgumentError("model expects " + std::to_string(feature_count_) + " features, got " +
                        std::to_string(row.size()));
  }
  double s = base_score_;
  const Packed* nodes = packed_.data();
  // Walk several trees in lockstep so their cache misses overlap; the model
  // is usually cold when called from inside a search.
  constexpr std::size_t kLanes = 16;
  const std::size_t count = roots_.size();
  std::size_t t = 0;
  for (; t + kLanes <= count; t += kLanes) {
    std::uint32_t at[kLanes];
    for (std::size_t l = 0; l < kLanes; ++l) at[l] = roots_[t + l];
    bool busy = true;
    while (busy) {
      busy = false;
      for (std::size_t l = 0; l < kLanes; ++l) {
        const Packed& n = nodes[at[l]];
        if (n.feature < 0) continue;
        at[l] = row[static_cast<std::size_t>(n.feature)] > n.v ? n.right : at[l] + 1;
        busy = true;
      }
    }
    for (std::size_t l = 0; l < kLanes; ++l) s += nodes[at[l]].v;
  }
  for (; t < count; ++t) {
    std::uint32_t i = roots_[t];
    while (nodes[i].feature >= 0) {
      const Packed& n = nodes[i];
      i = row[static_cast<std::size_t>(n.feature)] > n.v ? n.right : i + 1;
    }
    s += nodes[i].v;
  }
  return s;
}

double GbdtModel::predict(std::span<const double> row) const { return std::clamp(predict_raw(row), 0.0, 1.0); }

std::vector<double> GbdtModel::predict_batch(const Matrix& rows) const {
  std::vector<double> out(rows.rows);
  for (std::size_t i = 0; i < rows.rows; ++i) out[i] = predict(rows.row(i));
  return out;
}

Importance GbdtModel::feature_importance() const {
  Importance imp;
  imp.shares.assign(feature_count_, 0.0);
  double total = 0.0;
  for (const Tree& t : trees_) {
    for (const Node& n : t.nodes) {
      if (n.is_leaf()) continue;
      imp.shares[static_cast<std::size_t>(n.feature)] += n.gain;
      total += n.gain;
    }
  }
  if (total <= 0.0) {
    imp.degenerate = true;
    std::fill(imp.shares.begin(), imp.shares.end(), 0.0);
    return imp;
  }
  for (double& s : imp.shares) s /= total;
  return imp;
}

void GbdtModel::write(std::ostream& out) const {
  out << kHeader << ' ' << kFormatVersion << '\n';
  out << "feature_count " << feature_count_ << '\n';
  out << "n_estimators " << trees_.size() << '\n';
  out << "learning_rate " << format_double(learning_rate_) << '\n';
  out << "base_score " << format_double(base_score_) << '\n';
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const auto& nodes = trees_[t].nodes;
    out << "tree " << t << ' ' << nodes.size() << '\n';
    // Preorder: a split line is followed by its left subtree, then its right.
    std::vector<std::int32_t> stack{0};
    while (!stack.empty()) {
      const Node& n = nodes[stack.back()];
      stack.pop_back();
      if (n.is_leaf()) {
        out << "L " << format_double(n.value) << '\n';
      } else {
        out << "N " << n.feature << ' ' << format_double(n.threshold) << ' ' << format_double(n.gain) << '\n';
        stack.push_back(n.right);
        stack.push_back(n.left);
      }
    }
  }
  out << "end\n";
}

GbdtModel GbdtModel::read(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_tokens = [&]() {
    if (!std::getline(in, line)) throw FormatError("model truncated after line " + std::to_string(lineno));
    ++lineno;
    std::istringstream ss(line);
    std::vector<std::string> toks;
    for (std::string t; ss >> t;) toks.push_back(t);
    return toks;
  };
  auto expect_key = [&](std::string_view key) {
    auto toks = next_tokens();
    if (toks.size() != 2 || toks[0] != key) {
      throw FormatError("model line " + std::to_string(lineno) + ": expected '" + std::string(key) + "'");
    }
    return toks[1];
  };

  auto head = next_tokens();
  if (head.size() != 2 || head[0] != kHeader) throw FormatError("not a darth GBDT model file");
  if (head[1] != std::to_string(kFormatVersion)) throw FormatError("unsupported model version " + head[1]);
  const auto feature_count = static_cast<std::size_t>(parse_double(expect_key("feature_count"), lineno));
  const auto n_trees = static_cast<std::size_t>(parse_double(expect_key("n_estimators"), lineno));
  const double lr = parse_double(expect_key("learning_rate"), lineno);
  const double base = parse_double(expect_key("base_score"), lineno);

  std::vector<Tree> trees(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    auto th = next_tokens();
    if (th.size() != 3 || th[0] != "tree" || th[1] != std::to_string(t)) {
      throw FormatError("model line " + std::to_string(lineno) + ": expected tree " + std::to_string(t));
    }
    const auto n_nodes = static_cast<std::size_t>(parse_double(th[2], lineno));
    auto& nodes = trees[t].nodes;
    nodes.reserve(n_nodes);
    // Rebuild child links from the preorder listing. `open` holds split
    // nodes still waiting for a child.
    std::vector<std::int32_t> open;
    for (std::size_t k = 0; k < n_nodes; ++k) {
      auto toks = next_tokens();
      Node n;
      if (toks.size() == 2 && toks[0] == "L") {
        n.value = parse_double(toks[1], lineno);
      } else if (toks.size() == 4 && toks[0] == "N") {
        n.feature = static_cast<std::int32_t>(parse_double(toks[1], lineno));
        n.threshold = parse_double(toks[2], lineno);
        n.gain = parse_double(toks[3], lineno);
        if (n.feature < 0) throw FormatError("model line " + std::to_string(lineno) + ": negative feature index");
      } else {
        throw FormatError("model line " + std::to_string(lineno) + ": malformed node");
      }
      const auto idx = static_cast<std::int32_t>(nodes.size());
      if (idx > 0) {
        if (open.empty()) throw FormatError("model line " + std::to_string(lineno) + ": node outside any tree");
        Node& parent = nodes[open.back()];
        if (parent.left < 0) {
          parent.left = idx;
        } else {
          parent.right = idx;
          open.pop_back();
        }
      }
      nodes.push_back(n);
      if (!n.is_leaf()) open.push_back(idx);
    }
    if (!open.empty() || nodes.empty()) throw FormatError("tree " + std::to_string(t) + " is incomplete");
  }
  auto tail = next_tokens();
  if (tail.size() != 1 || tail[0] != "end") throw FormatError("model line " + std::to_string(lineno) + ": expected 'end'");
  return GbdtModel(feature_count, lr, base, std::move(trees));
}

void GbdtModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  write(out);
  if (!out) throw FormatError("write failed on " + path.string());
}

GbdtModel GbdtModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return read(in);
}

GbdtModel train_regressor(const Matrix& rows, std::span<const double> labels, const TrainConfig& cfg,
                          std::vector<double>* train_mse) {
  cfg.validate();
  if (rows.rows == 0) throw ArgumentError("empty training set");
  if (rows.rows != labels.size()) throw ArgumentError("row and label counts differ");
  if (rows.rows > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("training set too large");
  for (std::size_t i = 0; i < rows.values.size(); ++i) {
    if (!std::isfinite(rows.values[i])) throw DataError("non-finite feature in training row " + std::to_string(i / rows.cols));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(labels[i])) throw DataError("non-finite label in training row " + std::to_string(i));
  }

  const std::size_t n = rows.rows;
  const double base = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(n);
  const Binned binned = bin_matrix(rows, cfg.max_bins, cfg.threads);

  std::vector<double> pred(n, base);
  std::vector<double> residual(n);
  auto mse = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (labels[i] - pred[i]) * (labels[i] - pred[i]);
    return s / static_cast<double>(n);
  };
  if (train_mse) train_mse->push_back(mse());

  std::vector<Tree> trees;
  trees.reserve(cfg.n_estimators);
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  const auto sample_n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.subsample_rows * n)));

  for (std::size_t t = 0; t < cfg.n_estimators; ++t) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = labels[i] - pred[i];
    std::vector<std::uint32_t> sample = all;
    if (sample_n < n) {
      std::mt19937_64 rng(cfg.seed + t);
      for (std::size_t i = 0; i < sample_n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(sample[i], sample[pick(rng)]);
      }
      sample.resize(sample_n);
      std::sort(sample.begin(), sample.end());
    }
    TreeBuilder builder(binned, residual, cfg);
    trees.push_back(builder.build(sample));
    const Tree& tree = trees.back();
    for (std::size_t i = 0; i < n; ++i) pred[i] += tree.predict(rows.row(i));
    if (train_mse) train_mse->push_back(mse());
  }
  return GbdtModel(rows.cols, cfg.learning_rate, base, std::move(trees));
}

GbdtModel train(const Matrix& rows, std::span<const double> labels, const TrainConfig& cfg,
                std::vector<double>* train_mse) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(labels[i] >= 0.0 && labels[i] <= 1.0)) {
      throw DataError("label of row " + std::to_string(i) + " is outside [0, 1]");
    }
  }
  return train_regressor(rows, labels, cfg, train_mse);
}

}  // namespace darth::gbdt
