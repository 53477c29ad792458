// SPDX-License-Identifier: Apache-2.0
#include "darth/baselines.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <string>

#include <json.hpp>

#include "darth/features.hpp"
#include "darth/parallel.hpp"
#include "darth/traindata.hpp"

namespace darth::baselines {
namespace {

struct BudgetHook {
  std::uint64_t budget;
  HookAction operator()(const SearchState& st) const {
    return st.ndis >= budget ? HookAction::terminate : HookAction::proceed;
  }
};

std::string key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", t);
  return buf;
}

template <typename Search>
double mean_recall(const Dataset& valid, const GroundTruth& gt, std::size_t k, std::size_t threads, Search&& search) {
  if (gt.count < valid.count() || gt.k < k) throw ArgumentError("ground truth does not cover the validation queries");
  std::vector<double> recall(valid.count());
  parallel_for(valid.count(), threads, [&](std::size_t i) {
    const QueryOutcome out = search(valid.row(i));
    recall[i] = traindata::label_recall(out.ids, gt.ids_row(i).subspan(0, k));
  });
  double s = 0.0;
  for (double r : recall) s += r;
  return valid.count() ? s / static_cast<double>(valid.count()) : 0.0;
}

}  // namespace

QueryOutcome baseline_search(const hnsw::HnswGraph& g, std::span<const float> q, std::size_t k, std::size_t ef_search,
                             std::uint64_t budget) {
  if (budget == 0) throw ArgumentError("budget must be at least 1");
  return hnsw::search_with_hook(g, q, hnsw::SearchParams{k, ef_search, false}, BudgetHook{budget});
}

QueryOutcome baseline_search_ivf(const ivf::IvfIndex& ix, std::span<const float> q, std::size_t k, std::size_t nprobe,
                                 std::uint64_t budget) {
  if (budget == 0) throw ArgumentError("budget must be at least 1");
  return ivf::search_with_hook(ix, q, ivf::SearchParams{k, nprobe, true}, BudgetHook{budget});
}

const RemTable::Entry& RemTable::lookup(double target) const {
  if (entries.empty()) throw ConfigError("REM table is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (std::abs(entries[i].target - target) < std::abs(entries[best].target - target)) best = i;
  }
  return entries[best];
}

RemTable rem_from_measurements(std::span<const std::size_t> ladder, std::span<const double> mean_recall,
                               std::span<const double> targets) {
  if (ladder.empty()) throw ArgumentError("REM ladder is empty");
  if (ladder.size() != mean_recall.size()) throw ArgumentError("one recall measurement per ladder value is required");
  if (!std::is_sorted(ladder.begin(), ladder.end())) throw ArgumentError("REM ladder must be ascending");
  RemTable t;
  t.ladder.assign(ladder.begin(), ladder.end());
  t.ladder_recall.assign(mean_recall.begin(), mean_recall.end());
  for (double target : targets) {
    RemTable::Entry e;
    e.target = target;
    e.width = ladder.back();
    e.recall = mean_recall.back();
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      if (mean_recall[i] >= target) {
        e.width = ladder[i];
        e.recall = mean_recall[i];
        e.attained = true;
        break;
      }
    }
    t.entries.push_back(e);
  }
  return t;
}

RemTable build_rem(const hnsw::HnswGraph& g, const Dataset& valid, const GroundTruth& gt, std::size_t k,
                   std::span<const std::size_t> ladder, std::span<const double> targets, std::size_t threads) {
  if (ladder.empty()) throw ArgumentError("REM ladder is empty");
  std::vector<double> recall;
  for (std::size_t ef : ladder) {
    recall.push_back(mean_recall(valid, gt, k, threads, [&](std::span<const float> q) {
      return hnsw::plain_search(g, q, k, ef);
    }));
  }
  return rem_from_measurements(ladder, recall, targets);
}

RemTable build_rem_ivf(const ivf::IvfIndex& ix, const Dataset& valid, const GroundTruth& gt, std::size_t k,
                       std::span<const std::size_t> ladder, std::span<const double> targets, std::size_t threads) {
  if (ladder.empty()) throw ArgumentError("REM ladder is empty");
  std::vector<double> recall;
  for (std::size_t nprobe : ladder) {
    recall.push_back(mean_recall(valid, gt, k, threads, [&](std::span<const float> q) {
      return ivf::plain_search(ix, q, k, nprobe);
    }));
  }
  return rem_from_measurements(ladder, recall, targets);
}

void RemTable::save_json(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["ladder"] = ladder;
  j["ladder_recall"] = ladder_recall;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& e : entries) {
    m[key(e.target)] = {{"width", e.width}, {"recall", e.recall}, {"attained", e.attained}};
  }
  j["targets"] = m;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  out << std::setw(2) << j << '\n';
}

RemTable RemTable::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  RemTable t;
  try {
    nlohmann::json j;
    in >> j;
    t.ladder = j.at("ladder").get<std::vector<std::size_t>>();
    t.ladder_recall = j.at("ladder_recall").get<std::vector<double>>();
    for (auto it = j.at("targets").begin(); it != j.at("targets").end(); ++it) {
      Entry e;
      e.target = std::stod(it.key());
      e.width = it.value().at("width").get<std::size_t>();
      e.recall = it.value().at("recall").get<double>();
      e.attained = it.value().at("attained").get<bool>();
      t.entries.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::sort(t.entries.begin(), t.entries.end(), [](const Entry& a, const Entry& b) { return a.target < b.target; });
  return t;
}

LaetTrainingSet laet_training_set(const hnsw::HnswGraph& g, const Dataset& queries, const hnsw::SearchParams& sp,
                                  std::uint64_t fixed_point, std::size_t threads) {
  if (fixed_point == 0) throw ArgumentError("fixed_point must be at least 1");
  struct Sample {
    bool valid = false;
    features::FeatureRow row;
    double label = 0.0;
  };
  std::vector<Sample> samples(queries.count());
  parallel_for(queries.count(), threads, [&](std::size_t qi) {
    Sample& s = samples[qi];
    features::FeatureExtractor fx;
    std::vector<std::pair<idx_t, std::uint64_t>> inserted;
    auto hook = [&](const SearchState& st) {
      if (st.last_inserted) inserted.emplace_back(st.last.id, st.ndis);
      if (st.ndis == fixed_point) {
        s.row = fx(st);
        s.valid = true;
      }
      return HookAction::proceed;
    };
    const QueryOutcome out = hnsw::search_with_hook(g, queries.row(qi), sp, hook);
    if (!s.valid) return;
    std::sort(inserted.begin(), inserted.end());
    std::uint64_t complete = 0;
    for (idx_t id : out.ids) {
      const auto it = std::lower_bound(inserted.begin(), inserted.end(), std::make_pair(id, std::uint64_t{0}));
      complete = std::max(complete, it->second);
    }
    s.label = static_cast<double>(complete);
  });
  LaetTrainingSet set;
  set.rows = gbdt::Matrix(0, features::kFeatureCount);
  for (const Sample& s : samples) {
    if (!s.valid) continue;
    set.rows.append(s.row.span());
    set.labels.push_back(s.label);
  }
  return set;
}

LaetModel train_laet(const hnsw::HnswGraph& g, const Dataset& queries, const hnsw::SearchParams& sp,
                     std::uint64_t fixed_point, const gbdt::TrainConfig& cfg, std::size_t threads) {
  const LaetTrainingSet set = laet_training_set(g, queries, sp, fixed_point, threads);
  if (set.labels.empty()) throw DataError("no training query reached the LAET fixed point");
  LaetModel lm;
  lm.budget = gbdt::train_regressor(set.rows, set.labels, cfg);
  lm.fixed_point = fixed_point;
  return lm;
}

QueryOutcome laet_search(const hnsw::HnswGraph& g, std::span<const float> q, std::size_t k, std::size_t ef_search,
                         const LaetModel& lm) {
  if (!(lm.multiplier > 0.0)) throw ArgumentError("LAET multiplier must be positive");
  std::uint64_t limit = kUnlimited;
  std::uint64_t calls = 0;
  features::FeatureExtractor fx;
  auto hook = [&](const SearchState& st) {
    if (st.ndis == lm.fixed_point) {
      const double predicted = lm.budget.predict_raw(fx(st).span());
      ++calls;
      const double scaled = std::round(std::max(predicted, 0.0) * lm.multiplier);
      limit = scaled >= 1.8e19 ? kUnlimited : std::max(lm.fixed_point, static_cast<std::uint64_t>(scaled));
    }
    return st.ndis >= limit ? HookAction::terminate : HookAction::proceed;
  };
  QueryOutcome out = hnsw::search_with_hook(g, q, hnsw::SearchParams{k, ef_search, false}, hook);
  out.predictor_calls = calls;
  return out;
}

double laet_mean_recall(const hnsw::HnswGraph& g, const LaetModel& lm, double multiplier, const Dataset& valid,
                        const GroundTruth& gt, std::size_t k, std::size_t ef_search, std::size_t threads) {
  LaetModel m = lm;
  m.multiplier = multiplier;
  return mean_recall(valid, gt, k, threads, [&](std::span<const float> q) { return laet_search(g, q, k, ef_search, m); });
}

LaetTuning tune_laet(const hnsw::HnswGraph& g, const LaetModel& lm, const Dataset& valid, const GroundTruth& gt,
                     std::size_t k, std::size_t ef_search, double target, std::span<const double> grid,
                     std::size_t threads) {
  if (grid.empty()) throw ArgumentError("multiplier grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end())) throw ArgumentError("multiplier grid must be ascending");
  auto eval = [&](std::size_t i) { return laet_mean_recall(g, lm, grid[i], valid, gt, k, ef_search, threads); };
  // Recall is non-decreasing in the multiplier, so the feasible grid values
  // form a suffix.
  std::size_t lo = 0;
  std::size_t hi = grid.size();
  double hi_recall = 0.0;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const double r = eval(mid);
    if (r >= target) {
      hi = mid;
      hi_recall = r;
    } else {
      lo = mid + 1;
    }
  }
  if (lo == grid.size()) return {grid.back(), eval(grid.size() - 1), false};
  return {grid[lo], hi_recall, true};
}

std::vector<double> default_multiplier_grid() {
  std::vector<double> g;
  for (int i = 10; i <= 300; i += 5) g.push_back(i / 100.0);
  return g;
}

const LaetTuning& LaetConfig::lookup(double target) const {
  if (targets.empty()) throw ConfigError("LAET config has no tuned targets");
  std::size_t best = 0;
  for (std::size_t i = 1; i < targets.size(); ++i) {
    if (std::abs(targets[i] - target) < std::abs(targets[best] - target)) best = i;
  }
  return tunings[best];
}

void LaetConfig::save_json(const std::filesystem::path& path) const {
  if (targets.size() != tunings.size()) throw ArgumentError("one tuning per target is required");
  nlohmann::ordered_json j;
  j["fixed_point"] = fixed_point;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    m[key(targets[i])] = {{"multiplier", tunings[i].multiplier},
                          {"recall", tunings[i].mean_recall},
                          {"attained", tunings[i].attained}};
  }
  j["multipliers"] = m;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  out << std::setw(2) << j << '\n';
}

LaetConfig LaetConfig::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  LaetConfig c;
  std::vector<std::pair<double, LaetTuning>> entries;
  try {
    nlohmann::json j;
    in >> j;
    c.fixed_point = j.at("fixed_point").get<std::uint64_t>();
    for (auto it = j.at("multipliers").begin(); it != j.at("multipliers").end(); ++it) {
      LaetTuning t;
      t.multiplier = it.value().at("multiplier").get<double>();
      t.mean_recall = it.value().at("recall").get<double>();
      t.attained = it.value().at("attained").get<bool>();
      entries.emplace_back(std::stod(it.key()), t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [t, tuning] : entries) {
    if (!(tuning.multiplier > 0.0)) throw FormatError(path.string() + ": multipliers must be positive");
    c.targets.push_back(t);
    c.tunings.push_back(tuning);
  }
  return c;
}

}  // namespace darth::baselines
