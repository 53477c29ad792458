// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "config.hpp"
#include "darth/baselines.hpp"
#include "darth/cli.hpp"
#include "darth/etsearch.hpp"
#include "darth/eval.hpp"
#include "darth/gbdt.hpp"
#include "darth/synthetic.hpp"
#include "darth/vectors_io.hpp"

namespace darth::cli {
namespace {

using Clock = std::chrono::steady_clock;
using traindata::IndexKind;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  out << std::setw(2) << j << '\n';
}

std::ofstream open_out(const fs::path& path) {
  prepare_output(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  return out;
}

void check_target(double t) {
  if (!(t > 0.0 && t <= 1.0)) throw ArgumentError("recall target " + fmt(t) + " outside (0, 1]");
}

void check_targets(std::vector<double>& targets) {
  if (targets.empty()) throw ArgumentError("at least one recall target is required");
  for (double t : targets) check_target(t);
  std::sort(targets.begin(), targets.end());
}

std::size_t width_for(const LoadedIndex& li, std::size_t ef_search, std::size_t nprobe) {
  return li.kind == IndexKind::hnsw ? ef_search : nprobe;
}

void check_width(const LoadedIndex& li, std::size_t k, std::size_t width) {
  if (k == 0 || k > li.size()) throw ArgumentError("k must lie in [1, " + std::to_string(li.size()) + "]");
  if (li.kind == IndexKind::ivf && (width == 0 || width > li.ivf->nlist())) {
    throw ArgumentError("nprobe must lie in [1, " + std::to_string(li.ivf->nlist()) + "]");
  }
}

gbdt::GbdtModel load_model(const fs::path& path) {
  require_artifact(path, "recall predictor", "train");
  return gbdt::GbdtModel::load(path);
}

traindata::EffortTable load_effort(const fs::path& path) {
  require_artifact(path, "effort table", "gentrain");
  return traindata::EffortTable::load_json(path);
}

QueryOutcome plain(const LoadedIndex& li, std::span<const float> q, std::size_t k, std::size_t width) {
  return li.kind == IndexKind::hnsw ? hnsw::plain_search(*li.hnsw, q, k, width) : ivf::plain_search(*li.ivf, q, k, width);
}

QueryOutcome darth(const LoadedIndex& li, std::span<const float> q, const et::EtConfig& cfg) {
  return li.kind == IndexKind::hnsw ? et::darth_search(*li.hnsw, q, cfg) : et::darth_search_ivf(*li.ivf, q, cfg);
}

QueryOutcome budgeted(const LoadedIndex& li, std::span<const float> q, std::size_t k, std::size_t width,
                      std::uint64_t budget) {
  return li.kind == IndexKind::hnsw ? baselines::baseline_search(*li.hnsw, q, k, width, budget)
                                    : baselines::baseline_search_ivf(*li.ivf, q, k, width, budget);
}

/// Options shared by commands that search an existing index.
struct IndexArgs {
  std::string index;
  std::string base;
  std::size_t k = 10;
  std::size_t ef_search = 100;
  std::size_t nprobe = 100;

  void add(CLI::App* cmd) {
    cmd->add_option("--index", index, "Index file written by `darth build`")->required();
    cmd->add_option("--base", base, "Base vectors the index was built over")->required();
    cmd->add_option("--k", k, "Neighbors per query")->capture_default_str();
    cmd->add_option("--ef-search", ef_search, "HNSW candidate-list width")->capture_default_str();
    cmd->add_option("--nprobe", nprobe, "IVF buckets scanned")->capture_default_str();
  }
};

struct Runner {
  explicit Runner(std::ostream& o) : out(o) {}

  std::ostream& out;
  std::size_t threads = 0;
  std::string error_mode = "one-sided";

  // ---------------------------------------------------------------- synth
  struct SynthArgs {
    io::SyntheticConfig cfg;
    std::string out_dir;
    std::size_t base = 100000;
    std::size_t queries = 1000;
    std::size_t learn = 3000;
    std::uint64_t sample_seed = 1;
    double ood_shift = 0.0;
  } synth;

  void add_synth(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "Sample base, query and learn sets from a synthetic mixture");
    c->add_option("--out-dir", synth.out_dir, "Directory for base.fvecs, query.fvecs, learn.fvecs")->required();
    c->add_option("--dim", synth.cfg.dim)->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--clusters", synth.cfg.clusters)->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--latent-dim", synth.cfg.latent_dim)->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--center-range", synth.cfg.center_range)->capture_default_str();
    c->add_option("--spread", synth.cfg.spread, "Std-dev of the latent basis entries")->capture_default_str();
    c->add_option("--isotropic-noise", synth.cfg.isotropic_noise)->capture_default_str();
    c->add_option("--base", synth.base, "Base vectors")->capture_default_str();
    c->add_option("--queries", synth.queries, "Test queries")->capture_default_str();
    c->add_option("--learn", synth.learn, "Learn queries (split later into train/valid)")->capture_default_str();
    c->add_option("--seed", synth.cfg.seed, "Mixture seed")->capture_default_str();
    c->add_option("--sample-seed", synth.sample_seed, "Seed for the first sample; later sets use +1, +2")
        ->capture_default_str();
    c->add_option("--ood-shift", synth.ood_shift, "Draw test queries out of distribution with this shift")
        ->capture_default_str();
    c->callback([this, c] {
      const fs::path dir(synth.out_dir);
      fs::create_directories(dir);
      const io::SyntheticMixture mix(synth.cfg);
      io::save_vectors(dir / "base.fvecs", mix.sample(synth.base, synth.sample_seed, Role::base));
      const Dataset q = synth.ood_shift > 0.0 ? mix.sample_ood(synth.queries, synth.sample_seed + 1, synth.ood_shift)
                                              : mix.sample(synth.queries, synth.sample_seed + 1, Role::query);
      io::save_vectors(dir / "query.fvecs", q);
      io::save_vectors(dir / "learn.fvecs", mix.sample(synth.learn, synth.sample_seed + 2, Role::learn));
      write_resolved_config(*c, dir / "synth.config.json");
      out << "wrote " << synth.base << " base, " << synth.queries << " query, " << synth.learn << " learn vectors to "
          << dir.string() << '\n';
    });
  }

  // ---------------------------------------------------------------- split
  struct SplitArgs {
    std::string learn, out_dir;
    std::size_t train = 2000, valid = 1000;
    std::uint64_t seed = 7;
  } split;

  void add_split(CLI::App& app) {
    auto* c = app.add_subcommand("split", "Split learn vectors into disjoint train and validation query sets");
    c->add_option("--learn", split.learn, "Learn vectors")->required();
    c->add_option("--out-dir", split.out_dir, "Directory for train.fvecs and valid.fvecs")->required();
    c->add_option("--train", split.train)->capture_default_str();
    c->add_option("--valid", split.valid)->capture_default_str();
    c->add_option("--seed", split.seed)->capture_default_str();
    c->callback([this, c] {
      const auto learn = load_dataset(split.learn, Role::learn, "synth");
      auto [tr, va] = io::split_learn_queries(*learn, split.train, split.valid, split.seed);
      const fs::path dir(split.out_dir);
      fs::create_directories(dir);
      io::save_vectors(dir / "train.fvecs", tr);
      io::save_vectors(dir / "valid.fvecs", va);
      write_resolved_config(*c, dir / "split.config.json");
      out << "wrote " << tr.count() << " train and " << va.count() << " validation queries\n";
    });
  }

  // ---------------------------------------------------------------- gt
  struct GtArgs {
    std::string base, queries, out;
    std::size_t k = 100;
  } gt;

  void add_gt(CLI::App& app) {
    auto* c = app.add_subcommand("gt", "Exact k-NN ground truth by brute force");
    c->add_option("--base", gt.base)->required();
    c->add_option("--queries", gt.queries)->required();
    c->add_option("--out", gt.out, "Output prefix; writes PREFIX.ivecs and PREFIX.fvecs")->required();
    c->add_option("--k", gt.k)->capture_default_str()->check(CLI::PositiveNumber);
    c->callback([this, c] {
      const auto base = load_dataset(gt.base, Role::base, "synth");
      const auto q = load_dataset(gt.queries, Role::query, "synth");
      if (gt.k > base->count()) throw ArgumentError("k exceeds the base size");
      const auto t0 = Clock::now();
      const GroundTruth g = io::brute_force_knn(*base, *q, gt.k, threads);
      prepare_output(gt.out);
      io::save_ground_truth(gt.out, g);
      write_resolved_config(*c, gt.out + ".config.json");
      out << "ground truth for " << g.count << " queries (k=" << g.k << ") in " << fmt(seconds_since(t0)) << " s\n";
    });
  }

  // ---------------------------------------------------------------- noise
  struct NoiseArgs {
    std::string queries, out, rule = "variance-of-norm";
    double pct = 0.0;
    std::uint64_t seed = 11;
  } noise;

  void add_noise(CLI::App& app) {
    auto* c = app.add_subcommand("noise", "Harden queries with per-query Gaussian noise");
    c->add_option("--queries", noise.queries)->required();
    c->add_option("--out", noise.out)->required();
    c->add_option("--pct", noise.pct, "Noise level as a fraction of the query norm")->required()->check(CLI::NonNegativeNumber);
    c->add_option("--seed", noise.seed)->capture_default_str();
    c->add_option("--rule", noise.rule, "variance-of-norm | stddev-of-norm | variance-of-norm-sq")->capture_default_str();
    c->callback([this, c] {
      const auto rule = io::parse_noise_rule(noise.rule);
      const auto q = load_dataset(noise.queries, Role::query, "synth");
      const Dataset noisy = io::add_gaussian_noise(*q, noise.pct, noise.seed, rule);
      prepare_output(noise.out);
      io::save_vectors(noise.out, noisy, io::format_from_path(noise.out));
      write_resolved_config(*c, noise.out + ".config.json");
      out << "wrote " << noisy.count() << " noisy queries to " << noise.out << '\n';
    });
  }

  // ---------------------------------------------------------------- build
  struct BuildArgs {
    std::string kind = "hnsw", base, out;
    hnsw::BuildParams hp;
    ivf::BuildParams ip;
    std::uint64_t seed = 100;
  } build;

  void add_build(CLI::App& app) {
    auto* c = app.add_subcommand("build", "Build an HNSW or IVF index over base vectors");
    c->add_option("--index-type", build.kind, "hnsw | ivf")->capture_default_str()->check(CLI::IsMember({"hnsw", "ivf"}));
    c->add_option("--base", build.base)->required();
    c->add_option("--out", build.out, "Index file")->required();
    c->add_option("--m", build.hp.M, "HNSW out-degree")->capture_default_str();
    c->add_option("--ef-construction", build.hp.ef_construction)->capture_default_str();
    c->add_option("--nlist", build.ip.nlist, "IVF bucket count")->capture_default_str();
    c->add_option("--max-iters", build.ip.max_iters, "k-means iteration cap")->capture_default_str();
    c->add_option("--seed", build.seed)->capture_default_str();
    c->add_option("--build-threads", build.hp.threads, "HNSW insertion threads; 1 is deterministic")
        ->capture_default_str();
    c->callback([this, c] {
      const auto base = load_dataset(build.base, Role::base, "synth");
      nlohmann::ordered_json stats;
      stats["index_type"] = build.kind;
      stats["base"] = build.base;
      stats["count"] = base->count();
      stats["dim"] = base->dim();
      const auto t0 = Clock::now();
      prepare_output(build.out);
      if (build.kind == "hnsw") {
        if (build.hp.M < 2) throw ArgumentError("--m must be at least 2");
        if (build.hp.ef_construction < 1) throw ArgumentError("--ef-construction must be positive");
        build.hp.seed = build.seed;
        const auto g = hnsw::HnswGraph::build(base, build.hp);
        stats["build_seconds"] = seconds_since(t0);
        g.save(build.out);
        stats["M"] = build.hp.M;
        stats["ef_construction"] = build.hp.ef_construction;
        stats["seed"] = build.seed;
        stats["max_level"] = g.max_level();
      } else {
        if (build.ip.nlist < 1 || build.ip.nlist > base->count()) {
          throw ArgumentError("--nlist must lie in [1, " + std::to_string(base->count()) + "]");
        }
        build.ip.seed = build.seed;
        build.ip.threads = threads;
        const auto ix = ivf::IvfIndex::build(base, build.ip);
        stats["build_seconds"] = seconds_since(t0);
        ix.save(build.out);
        stats["nlist"] = build.ip.nlist;
        stats["kmeans_iterations"] = ix.iterations();
        stats["seed"] = build.seed;
      }
      stats["index_bytes"] = fs::file_size(build.out);
      write_json(build.out + ".build.json", stats);
      write_resolved_config(*c, build.out + ".config.json");
      out << build.kind << " index over " << base->count() << " vectors built in "
          << fmt(stats["build_seconds"].get<double>()) << " s\n";
    });
  }

  // ---------------------------------------------------------------- gentrain
  struct GentrainArgs {
    IndexArgs ix;
    std::string queries, gt, out_log, out_effort;
    std::size_t stride = 1;
  } gentrain;

  void add_gentrain(CLI::App& app) {
    auto* c = app.add_subcommand("gentrain", "Log labeled feature rows from instrumented searches");
    gentrain.ix.add(c);
    c->add_option("--queries", gentrain.queries, "Training queries")->required();
    c->add_option("--gt", gentrain.gt, "Ground-truth prefix for the training queries")->required();
    c->add_option("--stride", gentrain.stride, "Log every N distance calculations")->capture_default_str()
        ->check(CLI::PositiveNumber);
    c->add_option("--out-log", gentrain.out_log, "Observation CSV")->required();
    c->add_option("--out-effort", gentrain.out_effort, "Effort table JSON")->required();
    c->callback([this, c] {
      const auto li = load_index(gentrain.ix.index, gentrain.ix.base);
      const auto q = load_dataset(gentrain.queries, Role::learn, "split");
      const GroundTruth g = load_gt(gentrain.gt, "gt");
      const std::size_t k = gentrain.ix.k;
      const std::size_t width = width_for(li, gentrain.ix.ef_search, gentrain.ix.nprobe);
      check_width(li, k, width);
      traindata::GenerateParams gp;
      gp.stride = gentrain.stride;
      gp.threads = threads;
      const auto t0 = Clock::now();
      auto [log, effort] =
          li.kind == IndexKind::hnsw
              ? traindata::generate_training_data(*li.hnsw, *q, g, hnsw::SearchParams{k, width, false}, gp)
              : traindata::generate_training_data(*li.ivf, *q, g, ivf::SearchParams{k, width, true}, gp);
      prepare_output(gentrain.out_log);
      prepare_output(gentrain.out_effort);
      log.save_csv(gentrain.out_log);
      effort.save_json(gentrain.out_effort);
      write_resolved_config(*c, gentrain.out_log + ".config.json");
      out << log.rows.size() << " observations from " << q->count() << " queries in " << fmt(seconds_since(t0))
          << " s\n";
    });
  }

  // ---------------------------------------------------------------- train
  struct TrainArgs {
    std::string log, out, valid_log;
    gbdt::TrainConfig cfg;
  } train;

  void add_gbdt_options(CLI::App* c, gbdt::TrainConfig& cfg) {
    c->add_option("--n-estimators", cfg.n_estimators)->capture_default_str();
    c->add_option("--learning-rate", cfg.learning_rate)->capture_default_str();
    c->add_option("--max-depth", cfg.max_depth)->capture_default_str();
    c->add_option("--min-samples-leaf", cfg.min_samples_leaf)->capture_default_str();
    c->add_option("--max-bins", cfg.max_bins, "0 selects exact split search")->capture_default_str();
    c->add_option("--subsample", cfg.subsample_rows)->capture_default_str();
    c->add_option("--gbdt-seed", cfg.seed)->capture_default_str();
  }

  void add_train(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Fit the recall predictor on an observation log");
    c->add_option("--log", train.log, "Observation CSV from `darth gentrain`")->required();
    c->add_option("--out", train.out, "Model file")->required();
    c->add_option("--valid-log", train.valid_log, "Held-out observation CSV for predictor metrics");
    add_gbdt_options(c, train.cfg);
    c->callback([this, c] {
      train.cfg.threads = threads;
      train.cfg.validate();
      require_artifact(train.log, "observation log", "gentrain");
      const auto log = traindata::ObservationLog::load_csv(train.log);
      if (log.rows.empty()) throw DataError(train.log + " has no observations");
      const auto t0 = Clock::now();
      const auto model = gbdt::train(log.matrix(), log.labels(), train.cfg);
      const double secs = seconds_since(t0);
      prepare_output(train.out);
      model.save(train.out);

      nlohmann::ordered_json report;
      report["rows"] = log.rows.size();
      report["train_seconds"] = secs;
      const auto imp = model.feature_importance();
      nlohmann::ordered_json shares = nlohmann::ordered_json::object();
      for (std::size_t f = 0; f < features::kFeatureCount; ++f) {
        shares[std::string(features::kFeatureNames[f])] = imp.shares[f];
      }
      report["importance"] = shares;
      report["importance_degenerate"] = imp.degenerate;
      if (!train.valid_log.empty()) {
        require_artifact(train.valid_log, "validation observation log", "gentrain");
        const auto m = eval::predictor_metrics(model, traindata::ObservationLog::load_csv(train.valid_log));
        report["valid_mse"] = m.mse;
        report["valid_mae"] = m.mae;
        report["valid_r2"] = m.r2_defined ? nlohmann::ordered_json(m.r2) : nlohmann::ordered_json(nullptr);
        out << "validation MSE " << fmt(m.mse) << " MAE " << fmt(m.mae) << " R2 "
            << (m.r2_defined ? fmt(m.r2) : "undefined") << '\n';
      }
      write_json(train.out + ".report.json", report);
      write_resolved_config(*c, train.out + ".config.json");
      out << "trained " << model.n_estimators() << " trees on " << log.rows.size() << " rows in " << fmt(secs)
          << " s\n";
    });
  }

  // ---------------------------------------------------------------- search
  struct SearchArgs {
    IndexArgs ix;
    std::string queries, model, effort, gt, out;
    double target = 0.9;
    std::size_t ipi = 0, mpi = 0;
  } search;

  et::Intervals intervals_for(const std::string& effort_path, double target, std::size_t ipi, std::size_t mpi) {
    if (ipi > 0 || mpi > 0) {
      if (ipi == 0 || mpi == 0) throw ArgumentError("--ipi and --mpi must be given together");
      return {ipi, mpi};
    }
    if (effort_path.empty()) throw ArgumentError("either --effort or both --ipi and --mpi are required");
    return et::heuristic_params(load_effort(effort_path), target);
  }

  void add_search(CLI::App& app) {
    auto* c = app.add_subcommand("search", "Declarative-recall search with early termination");
    search.ix.add(c);
    c->add_option("--queries", search.queries)->required();
    c->add_option("--model", search.model, "Recall predictor from `darth train`")->required();
    c->add_option("--effort", search.effort, "Effort table for heuristic intervals");
    c->add_option("--ipi", search.ipi, "Initial prediction interval (overrides the heuristic)");
    c->add_option("--mpi", search.mpi, "Minimum prediction interval (overrides the heuristic)");
    c->add_option("--target", search.target, "Recall target")->capture_default_str();
    c->add_option("--gt", search.gt, "Ground-truth prefix; adds a recall column");
    c->add_option("--out", search.out, "Per-query CSV")->required();
    c->callback([this, c] {
      check_target(search.target);
      const auto li = load_index(search.ix.index, search.ix.base);
      const auto q = load_dataset(search.queries, Role::query, "synth");
      const auto model = load_model(search.model);
      std::optional<GroundTruth> g;
      if (!search.gt.empty()) g = load_gt(search.gt, "gt");
      et::EtConfig cfg;
      cfg.target_recall = search.target;
      cfg.k = search.ix.k;
      cfg.model = &model;
      cfg.width = width_for(li, search.ix.ef_search, search.ix.nprobe);
      cfg.intervals = intervals_for(search.effort, search.target, search.ipi, search.mpi);
      check_width(li, cfg.k, cfg.width);
      cfg.validate();
      if (g && (g->count < q->count() || g->k < cfg.k)) throw ArgumentError("ground truth does not cover the queries");
      const auto outcomes = eval::run_queries(*q, threads, [&](std::span<const float> v) { return darth(li, v, cfg); });
      auto f = open_out(search.out);
      f << "query_id,terminated,ndis,nstep,predictor_calls,elapsed_us" << (g ? ",recall" : "") << ",ids\n";
      double recall = 0.0;
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        f << i << ',' << termination_name(o.terminated) << ',' << o.ndis << ',' << o.nstep << ',' << o.predictor_calls
          << ',' << fmt(o.elapsed_us);
        if (g) {
          const double r = traindata::label_recall(o.ids, g->ids_row(i).subspan(0, cfg.k));
          recall += r;
          f << ',' << fmt(r);
        }
        f << ',';
        for (std::size_t j = 0; j < o.ids.size(); ++j) f << (j ? " " : "") << o.ids[j];
        f << '\n';
      }
      write_resolved_config(*c, search.out + ".config.json");
      out << outcomes.size() << " queries searched (ipi=" << cfg.intervals.ipi << ", mpi=" << cfg.intervals.mpi << ")";
      if (g && !outcomes.empty()) out << ", mean recall " << fmt(recall / static_cast<double>(outcomes.size()));
      out << '\n';
    });
  }

  // ---------------------------------------------------------------- bench
  struct BenchArgs {
    IndexArgs ix;
    std::string queries, gt, model, effort, rem, laet, out_dir;
    std::vector<double> targets{0.8, 0.85, 0.9, 0.95};
    std::vector<std::string> methods{"plain", "darth", "baseline", "rem", "laet"};
    bool optimal = false;
  } bench;

  void add_bench(CLI::App& app) {
    auto* c = app.add_subcommand("bench", "Compare termination policies across recall targets");
    bench.ix.add(c);
    c->add_option("--queries", bench.queries)->required();
    c->add_option("--gt", bench.gt, "Ground-truth prefix for the queries")->required();
    c->add_option("--targets", bench.targets)->delimiter(',')->capture_default_str();
    c->add_option("--methods", bench.methods, "Subset of plain,darth,baseline,rem,laet")->delimiter(',')
        ->capture_default_str()
        ->check(CLI::IsMember({"plain", "darth", "baseline", "rem", "laet"}));
    c->add_option("--model", bench.model, "Recall predictor (darth)");
    c->add_option("--effort", bench.effort, "Effort table (darth intervals, baseline budgets)");
    c->add_option("--rem", bench.rem, "REM table from `darth tune-rem`");
    c->add_option("--laet", bench.laet, "LAET config from `darth tune-laet`");
    c->add_option("--error-mode", error_mode, "one-sided | absolute")->capture_default_str();
    c->add_flag("--optimal", bench.optimal, "Also write per-target overhead against the optimal termination point");
    c->add_option("--out-dir", bench.out_dir)->required();
    c->callback([this, c] { run_bench(*c); });
  }

  void run_bench(const CLI::App& c) {
    const auto mode = eval::parse_error_mode(error_mode);
    check_targets(bench.targets);
    auto has = [&](std::string_view m) { return std::find(bench.methods.begin(), bench.methods.end(), m) != bench.methods.end(); };
    const auto li = load_index(bench.ix.index, bench.ix.base);
    const auto q = load_dataset(bench.queries, Role::query, "synth");
    const GroundTruth g = load_gt(bench.gt, "gt");
    const std::size_t k = bench.ix.k;
    const std::size_t width = width_for(li, bench.ix.ef_search, bench.ix.nprobe);
    check_width(li, k, width);
    if (g.count < q->count() || g.k < k) throw ArgumentError("ground truth does not cover the queries");

    std::optional<gbdt::GbdtModel> model;
    std::optional<traindata::EffortTable> effort;
    std::optional<baselines::RemTable> rem;
    std::optional<baselines::LaetConfig> laet_cfg;
    std::optional<baselines::LaetModel> laet;
    if (has("darth")) model = load_model(bench.model);
    if (has("darth") || has("baseline")) effort = load_effort(bench.effort);
    if (has("rem")) {
      require_artifact(bench.rem, "REM table", "tune-rem");
      rem = baselines::RemTable::load_json(bench.rem);
    }
    if (has("laet")) {
      if (li.kind != IndexKind::hnsw) throw ArgumentError("laet is only defined for HNSW indexes");
      require_artifact(bench.laet, "LAET config", "tune-laet");
      require_artifact(bench.laet + ".model", "LAET budget model", "tune-laet");
      laet_cfg = baselines::LaetConfig::load_json(bench.laet);
      laet.emplace();
      laet->budget = gbdt::GbdtModel::load(bench.laet + ".model");
      laet->fixed_point = laet_cfg->fixed_point;
    }

    const fs::path dir(bench.out_dir);
    fs::create_directories(dir);
    const auto plain_out =
        eval::run_queries(*q, threads, [&](std::span<const float> v) { return plain(li, v, k, width); });

    std::optional<eval::OptimalityTable> opt;
    if (bench.optimal) {
      opt = li.kind == IndexKind::hnsw
                ? eval::optimal_termination(*li.hnsw, *q, g, hnsw::SearchParams{k, width, false}, bench.targets, threads)
                : eval::optimal_termination(*li.ivf, *q, g, ivf::SearchParams{k, width, true}, bench.targets, threads);
      opt->save_csv(dir / "optimal.csv");
    }

    std::vector<eval::MetricReport> reports;
    std::ofstream optimality;
    if (opt) {
      optimality.open(dir / "optimality.csv", std::ios::trunc);
      optimality << "method,target,ndis_over_optimal\n";
    }
    for (double t : bench.targets) {
      for (const auto& m : bench.methods) {
        std::vector<QueryOutcome> outs;
        if (m == "plain") {
          outs = plain_out;
        } else if (m == "darth") {
          et::EtConfig cfg;
          cfg.target_recall = t;
          cfg.k = k;
          cfg.model = &*model;
          cfg.width = width;
          cfg.intervals = et::heuristic_params(*effort, t);
          cfg.validate();
          outs = eval::run_queries(*q, threads, [&](std::span<const float> v) { return darth(li, v, cfg); });
        } else if (m == "baseline") {
          const auto budget = static_cast<std::uint64_t>(std::max(1.0, std::round(effort->lookup(t))));
          outs = eval::run_queries(*q, threads, [&](std::span<const float> v) { return budgeted(li, v, k, width, budget); });
        } else if (m == "rem") {
          const std::size_t w = rem->lookup(t).width;
          check_width(li, k, w);
          outs = eval::run_queries(*q, threads, [&](std::span<const float> v) { return plain(li, v, k, w); });
        } else {
          baselines::LaetModel lm = *laet;
          lm.multiplier = laet_cfg->lookup(t).multiplier;
          outs = eval::run_queries(*q, threads,
                                   [&](std::span<const float> v) { return baselines::laet_search(*li.hnsw, v, k, width, lm); });
        }
        reports.push_back(eval::compute_metrics(outs, g, k, t, plain_out, mode, m));
        if (opt) optimality << m << ',' << fmt(t) << ',' << fmt(eval::optimality_ratio(*opt, t, outs)) << '\n';
      }
    }

    std::ofstream summary(dir / "summary.csv", std::ios::trunc);
    eval::write_summary_header(summary);
    for (const auto& r : reports) eval::write_summary_row(summary, r);
    std::ofstream per_query(dir / "queries.csv", std::ios::trunc);
    eval::write_query_header(per_query);
    for (const auto& r : reports) eval::write_query_rows(per_query, r);
    std::ofstream table(dir / "table.txt", std::ios::trunc);
    eval::write_table(table, reports);
    eval::write_table(out, reports);
    write_resolved_config(c, dir / "bench.config.json");
  }

  // ---------------------------------------------------------------- tune-rem
  struct TuneRemArgs {
    IndexArgs ix;
    std::string valid, gt, out;
    std::vector<std::size_t> ladder;
    std::vector<double> targets = traindata::default_targets();
  } tune_rem;

  void add_tune_rem(CLI::App& app) {
    auto* c = app.add_subcommand("tune-rem", "Map each recall target to the smallest sufficient search width");
    tune_rem.ix.add(c);
    c->add_option("--valid", tune_rem.valid, "Validation queries")->required();
    c->add_option("--gt", tune_rem.gt, "Ground-truth prefix for the validation queries")->required();
    c->add_option("--ladder", tune_rem.ladder, "Ascending efSearch (HNSW) or nprobe (IVF) values")->delimiter(',');
    c->add_option("--targets", tune_rem.targets)->delimiter(',')->capture_default_str();
    c->add_option("--out", tune_rem.out, "REM table JSON")->required();
    c->callback([this, c] {
      check_targets(tune_rem.targets);
      const auto li = load_index(tune_rem.ix.index, tune_rem.ix.base);
      const auto v = load_dataset(tune_rem.valid, Role::learn, "split");
      const GroundTruth g = load_gt(tune_rem.gt, "gt");
      const std::size_t k = tune_rem.ix.k;
      std::vector<std::size_t> ladder = tune_rem.ladder;
      if (ladder.empty()) ladder = default_ladder(li, k);
      for (std::size_t w : ladder) check_width(li, k, w);
      const auto table = li.kind == IndexKind::hnsw
                             ? baselines::build_rem(*li.hnsw, *v, g, k, ladder, tune_rem.targets, threads)
                             : baselines::build_rem_ivf(*li.ivf, *v, g, k, ladder, tune_rem.targets, threads);
      prepare_output(tune_rem.out);
      table.save_json(tune_rem.out);
      write_resolved_config(*c, tune_rem.out + ".config.json");
      for (const auto& e : table.entries) {
        out << "R_t=" << fmt(e.target) << " width=" << e.width << " recall=" << fmt(e.recall)
            << (e.attained ? "" : " (unattained)") << '\n';
      }
    });
  }

  static std::vector<std::size_t> default_ladder(const LoadedIndex& li, std::size_t k) {
    std::vector<std::size_t> l;
    if (li.kind == IndexKind::hnsw) {
      for (std::size_t w = 10; w <= 1000; w += w < 100 ? 10 : 50) {
        if (w >= k) l.push_back(w);
      }
      if (l.empty() || l.front() != k) l.insert(l.begin(), k);
    } else {
      for (std::size_t w : {1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50, 60, 80, 100, 120, 150, 200}) {
        if (w <= li.ivf->nlist()) l.push_back(w);
      }
    }
    return l;
  }

  // ---------------------------------------------------------------- tune-laet
  struct TuneLaetArgs {
    IndexArgs ix;
    std::string train_queries, valid, gt, effort, out;
    std::uint64_t fixed_point = 0;
    std::vector<double> targets{0.8, 0.85, 0.9, 0.95};
    std::vector<double> grid = baselines::default_multiplier_grid();
    gbdt::TrainConfig cfg;
  } tune_laet;

  void add_tune_laet(CLI::App& app) {
    auto* c = app.add_subcommand("tune-laet", "Train the LAET budget predictor and tune its multipliers");
    tune_laet.ix.add(c);
    c->add_option("--train-queries", tune_laet.train_queries, "Queries for the budget predictor")->required();
    c->add_option("--valid", tune_laet.valid, "Validation queries for multiplier tuning")->required();
    c->add_option("--gt", tune_laet.gt, "Ground-truth prefix for the validation queries")->required();
    c->add_option("--effort", tune_laet.effort, "Effort table; its 0.50 entry is the default fixed point");
    c->add_option("--fixed-point", tune_laet.fixed_point, "ndis at which the budget is predicted");
    c->add_option("--targets", tune_laet.targets)->delimiter(',')->capture_default_str();
    c->add_option("--grid", tune_laet.grid, "Ascending multiplier grid")->delimiter(',');
    c->add_option("--out", tune_laet.out, "LAET config JSON; the model goes to OUT.model")->required();
    add_gbdt_options(c, tune_laet.cfg);
    c->callback([this, c] {
      check_targets(tune_laet.targets);
      tune_laet.cfg.threads = threads;
      tune_laet.cfg.validate();
      const auto li = load_index(tune_laet.ix.index, tune_laet.ix.base);
      if (li.kind != IndexKind::hnsw) throw ArgumentError("tune-laet requires an HNSW index");
      std::uint64_t fp = tune_laet.fixed_point;
      if (fp == 0) {
        if (tune_laet.effort.empty()) throw ArgumentError("either --fixed-point or --effort is required");
        fp = static_cast<std::uint64_t>(std::max(1.0, std::round(load_effort(tune_laet.effort).lookup(0.5))));
      }
      const auto tq = load_dataset(tune_laet.train_queries, Role::learn, "split");
      const auto v = load_dataset(tune_laet.valid, Role::learn, "split");
      const GroundTruth g = load_gt(tune_laet.gt, "gt");
      const std::size_t k = tune_laet.ix.k;
      const std::size_t ef = tune_laet.ix.ef_search;
      check_width(li, k, ef);
      const auto lm = baselines::train_laet(*li.hnsw, *tq, hnsw::SearchParams{k, ef, false}, fp, tune_laet.cfg, threads);
      baselines::LaetConfig lc;
      lc.fixed_point = fp;
      for (double t : tune_laet.targets) {
        lc.targets.push_back(t);
        lc.tunings.push_back(baselines::tune_laet(*li.hnsw, lm, *v, g, k, ef, t, tune_laet.grid, threads));
        const auto& r = lc.tunings.back();
        out << "R_t=" << fmt(t) << " multiplier=" << fmt(r.multiplier) << " recall=" << fmt(r.mean_recall)
            << (r.attained ? "" : " (unattained)") << '\n';
      }
      prepare_output(tune_laet.out);
      lm.budget.save(tune_laet.out + ".model");
      lc.save_json(tune_laet.out);
      write_resolved_config(*c, tune_laet.out + ".config.json");
    });
  }

  // ---------------------------------------------------------------- grid-intervals
  struct GridArgs {
    IndexArgs ix;
    std::string valid, gt, model, out, mode = "adaptive";
    double target = 0.9;
    std::vector<std::size_t> ipi_grid, mpi_grid;
  } grid;

  void add_grid(CLI::App& app) {
    auto* c = app.add_subcommand("grid-intervals", "Grid-search the prediction intervals on validation queries");
    grid.ix.add(c);
    c->add_option("--valid", grid.valid)->required();
    c->add_option("--gt", grid.gt, "Ground-truth prefix for the validation queries")->required();
    c->add_option("--model", grid.model)->required();
    c->add_option("--target", grid.target)->capture_default_str();
    c->add_option("--ipi-grid", grid.ipi_grid)->delimiter(',')->required();
    c->add_option("--mpi-grid", grid.mpi_grid, "Ignored in static mode")->delimiter(',');
    c->add_option("--mode", grid.mode, "adaptive | static")->capture_default_str()->check(CLI::IsMember({"adaptive", "static"}));
    c->add_option("--out", grid.out, "Grid CSV; the best cell goes to OUT.best.json")->required();
    c->callback([this, c] {
      check_target(grid.target);
      const auto li = load_index(grid.ix.index, grid.ix.base);
      if (li.kind != IndexKind::hnsw) throw ArgumentError("grid-intervals requires an HNSW index");
      const auto v = load_dataset(grid.valid, Role::learn, "split");
      const GroundTruth g = load_gt(grid.gt, "gt");
      const auto model = load_model(grid.model);
      check_width(li, grid.ix.k, grid.ix.ef_search);
      const auto mode = grid.mode == "static" ? eval::IntervalMode::static_ : eval::IntervalMode::adaptive;
      const auto res = eval::grid_search_intervals(*li.hnsw, model, *v, g, grid.ix.k, grid.ix.ef_search, grid.target,
                                                   grid.ipi_grid, grid.mpi_grid, mode);
      auto f = open_out(grid.out);
      eval::write_grid_csv(f, res);
      write_resolved_config(*c, grid.out + ".config.json");
      if (!res.best) throw InfeasibleError("no grid cell reached mean recall " + fmt(grid.target));
      nlohmann::ordered_json best{{"ipi", res.best->ipi},
                                  {"mpi", res.best->mpi},
                                  {"mean_recall", res.best->mean_recall},
                                  {"mean_time_us", res.best->mean_time_us},
                                  {"mean_ndis", res.best->mean_ndis}};
      write_json(grid.out + ".best.json", best);
      out << "best ipi=" << res.best->ipi << " mpi=" << res.best->mpi << " recall=" << fmt(res.best->mean_recall)
          << " time_us=" << fmt(res.best->mean_time_us) << '\n';
    });
  }

  // ---------------------------------------------------------------- report
  struct ReportArgs {
    std::vector<std::string> summaries;
    std::string model, log;
  } report;

  void add_report(CLI::App& app) {
    auto* c = app.add_subcommand("report", "Print benchmark tables and predictor diagnostics");
    c->add_option("--summary", report.summaries, "summary.csv files from `darth bench`");
    c->add_option("--model", report.model, "Recall predictor for importance and metrics");
    c->add_option("--log", report.log, "Observation CSV to score the model on");
    c->callback([this] {
      if (report.summaries.empty() && report.model.empty()) throw ArgumentError("nothing to report: pass --summary or --model");
      for (const auto& s : report.summaries) print_summary(s);
      if (!report.model.empty()) {
        const auto model = load_model(report.model);
        const auto imp = model.feature_importance();
        out << "feature importance" << (imp.degenerate ? " (no splits)" : "") << '\n';
        for (std::size_t f = 0; f < features::kFeatureCount; ++f) {
          char line[64];
          std::snprintf(line, sizeof(line), "  %-11s %.4f\n", std::string(features::kFeatureNames[f]).c_str(),
                        imp.shares[f]);
          out << line;
        }
        if (!report.log.empty()) {
          require_artifact(report.log, "observation log", "gentrain");
          const auto m = eval::predictor_metrics(model, traindata::ObservationLog::load_csv(report.log));
          out << "MSE " << fmt(m.mse) << " MAE " << fmt(m.mae) << " R2 " << (m.r2_defined ? fmt(m.r2) : "undefined")
              << " over " << m.rows << " rows\n";
        }
      }
    });
  }

  void print_summary(const std::string& path) {
    require_artifact(path, "benchmark summary", "bench");
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("method,target", 0) != 0) throw FormatError(path + ": not a summary CSV");
    std::vector<std::string> header;
    {
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
    }
    std::vector<eval::MetricReport> reports;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::vector<std::string> cells;
      for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
      if (cells.size() != header.size()) throw FormatError(path + ": ragged row");
      eval::MetricReport r;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::string& h = header[i];
        if (h == "method") r.method = cells[i];
        else if (h == "target") r.target = std::stod(cells[i]);
        else if (h == "recall") r.recall = std::stod(cells[i]);
        else if (h == "rde") r.rde = std::stod(cells[i]);
        else if (h == "rqut") r.rqut = std::stod(cells[i]);
        else if (h == "nrs") r.nrs = std::stod(cells[i]);
        else if (h == "p99") r.p99 = std::stod(cells[i]);
        else if (h == "mean_ndis") r.mean_ndis = std::stod(cells[i]);
        else if (h == "qps") r.qps = std::stod(cells[i]);
        else if (h == "speedup") r.speedup = std::stod(cells[i]);
      }
      reports.push_back(std::move(r));
    }
    out << path << '\n';
    eval::write_table(out, reports);
  }
};

int exit_code_for(const Error& e) {
  if (dynamic_cast<const InfeasibleError*>(&e)) return kExitInfeasible;
  if (dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  return kExitData;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Declarative-recall nearest-neighbor search toolkit", "darth"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI file with per-subcommand sections");
  Runner r(out);
  app.add_option("--threads", r.threads, "Worker threads (0 = all cores)")->capture_default_str();
  r.add_synth(app);
  r.add_split(app);
  r.add_gt(app);
  r.add_noise(app);
  r.add_build(app);
  r.add_gentrain(app);
  r.add_train(app);
  r.add_search(app);
  r.add_bench(app);
  r.add_tune_rem(app);
  r.add_tune_laet(app);
  r.add_grid(app);
  r.add_report(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace darth::cli
