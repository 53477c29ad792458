#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "darth/etsearch.hpp"
#include "darth/vectors_io.hpp"
#include "helpers.hpp"

using namespace darth;

namespace {

struct Fixture {
  std::shared_ptr<const Dataset> base = std::make_shared<const Dataset>(testutil::gaussian(4000, 16, 1));
  hnsw::HnswGraph g = hnsw::HnswGraph::build(base, {});
  ivf::IvfIndex ix = ivf::IvfIndex::build(base, {40, 25, 1, 1});
  Dataset train = testutil::gaussian(200, 16, 2, 1.0f, Role::learn);
  Dataset q = testutil::gaussian(60, 16, 3, 1.0f, Role::query);
  GroundTruth gt_train = io::brute_force_knn(*base, train, 10);
  GroundTruth gt_q = io::brute_force_knn(*base, q, 10);
  gbdt::GbdtModel model;
  traindata::EffortTable effort;

  Fixture() {
    traindata::GenerateParams gp;
    gp.stride = 2;
    auto [log, eff] = traindata::generate_training_data(g, train, gt_train, {10, 80, false}, gp);
    gbdt::TrainConfig cfg;
    cfg.n_estimators = 40;
    model = gbdt::train(log.matrix(), log.labels(), cfg);
    effort = eff;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

gbdt::GbdtModel constant_model(double v) { return gbdt::GbdtModel(features::kFeatureCount, 0.1, v, {}); }

}  // namespace

TEST_CASE("interval formula") {
  CHECK(et::next_interval(100, 1000, 0.9, 0.9) == 100);
  CHECK(et::next_interval(100, 1000, 0.9, 0.4) == 550);
  CHECK(et::next_interval(100, 1000, 0.8, 0.0) == 820);
  CHECK(et::next_interval(100, 1000, 0.8, 1.0) == 100);
  CHECK(et::next_interval(5, 5, 0.9, 0.1) == 5);
  CHECK_THROWS_AS(et::next_interval(10, 5, 0.9, 0.1), ArgumentError);
}

TEST_CASE("interval formula against a direct evaluation") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> ui(1, 5000);
  std::uniform_real_distribution<double> ur(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    std::size_t a = ui(rng), b = ui(rng);
    if (a > b) std::swap(a, b);
    const double t = ur(rng), p = ur(rng);
    const std::size_t pi = et::next_interval(a, b, t, p);
    CHECK(pi >= a);
    CHECK(pi <= b);
    const double raw = double(a) + double(b - a) * (t - p);
    if (raw >= double(a) && raw <= double(b)) CHECK(std::abs(double(pi) - raw) <= 0.5);
    const double p2 = std::min(1.0, p + ur(rng) * 0.2);
    CHECK(et::next_interval(a, b, t, p2) <= pi);
  }
}

TEST_CASE("heuristic parameters") {
  traindata::EffortTable e{{0.8, 0.9}, {7.0, 5000.0}};
  auto a = et::heuristic_params(e, 0.9);
  CHECK(a.ipi == 2500);
  CHECK(a.mpi == 500);
  auto b = et::heuristic_params(e, 0.8);
  CHECK(b.ipi == 4);
  CHECK(b.mpi == 1);
  CHECK_THROWS_AS(et::heuristic_params(traindata::EffortTable{}, 0.9), ConfigError);
}

TEST_CASE("configuration validation") {
  auto m = constant_model(0.5);
  et::EtConfig c{0.9, 10, {50, 10}, &m, 80};
  CHECK_NOTHROW(c.validate());
  c.intervals = {5, 10};
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.intervals = {5, 0};
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.intervals = {50, 10};
  c.model = nullptr;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  gbdt::GbdtModel narrow(3, 0.1, 0.5, {});
  c.model = &narrow;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.model = &m;
  c.target_recall = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("always-confident model stops at the first check") {
  auto& f = fixture();
  auto one = constant_model(1.0);
  for (std::size_t i = 0; i < 10; ++i) {
    et::EtConfig c{0.9, 10, {30, 5}, &one, 80};
    auto r = et::darth_search(f.g, f.q.row(i), c);
    CHECK(r.ndis == 30);
    CHECK(r.predictor_calls == 1);
    CHECK(r.terminated == Termination::early);
  }
}

TEST_CASE("never-confident model reproduces plain search") {
  auto& f = fixture();
  auto zero = constant_model(0.0);
  for (std::size_t i = 0; i < f.q.count(); ++i) {
    et::EtConfig c{0.9, 10, {20, 3}, &zero, 80};
    auto r = et::darth_search(f.g, f.q.row(i), c);
    auto p = hnsw::plain_search(f.g, f.q.row(i), 10, 80);
    CHECK(r.ids == p.ids);
    CHECK(r.ndis == p.ndis);
    CHECK(r.terminated == Termination::natural);
    CHECK(r.predictor_calls > 0);

    et::EtConfig ci{0.9, 10, {20, 3}, &zero, 5};
    auto ri = et::darth_search_ivf(f.ix, f.q.row(i), ci);
    auto pi = ivf::plain_search(f.ix, f.q.row(i), 10, 5);
    CHECK(ri.ids == pi.ids);
    CHECK(ri.ndis == pi.ndis);
  }
}

TEST_CASE("ivf with a single probe never leaves the first bucket") {
  auto& f = fixture();
  auto zero = constant_model(0.0);
  et::EtConfig c{0.9, 10, {10, 2}, &zero, 1};
  auto r = et::darth_search_ivf(f.ix, f.q.row(0), c);
  CHECK(r.nstep <= 1);
  CHECK(r.ndis <= 40 + f.ix.bucket(f.ix.assign(f.q.row(0))).size());
}

TEST_CASE("interval trace stays within bounds and calls are counted") {
  auto& f = fixture();
  for (double target : {0.7, 0.9, 0.99}) {
    auto iv = et::heuristic_params(f.effort, target);
    for (std::size_t i = 0; i < f.q.count(); ++i) {
      std::vector<std::size_t> trace;
      et::EtConfig c{target, 10, iv, &f.model, 80};
      auto r = et::darth_search(f.g, f.q.row(i), c, &trace);
      REQUIRE(!trace.empty());
      CHECK(trace.front() == iv.ipi);
      for (std::size_t pi : trace) {
        CHECK(pi >= iv.mpi);
        CHECK(pi <= iv.ipi);
      }
      // One interval per unsuccessful call, plus the initial one.
      const std::size_t unsuccessful = r.terminated == Termination::early ? r.predictor_calls - 1 : r.predictor_calls;
      CHECK(trace.size() == unsuccessful + 1);
      std::uint64_t sum = 0;
      for (std::size_t j = 0; j < r.predictor_calls; ++j) sum += trace[j];
      if (r.terminated == Termination::early) CHECK(r.ndis == sum);
    }
  }
}

TEST_CASE("early results never beat natural ones") {
  auto& f = fixture();
  for (double target : {0.8, 0.95}) {
    auto iv = et::heuristic_params(f.effort, target);
    for (std::size_t i = 0; i < f.q.count(); ++i) {
      et::EtConfig c{target, 10, iv, &f.model, 80};
      auto r = et::darth_search(f.g, f.q.row(i), c);
      auto p = hnsw::plain_search(f.g, f.q.row(i), 10, 80);
      CHECK(r.ndis <= p.ndis);
      CHECK(traindata::label_recall(r.ids, f.gt_q.ids_row(i)) <= traindata::label_recall(p.ids, f.gt_q.ids_row(i)));
    }
  }
}

TEST_CASE("mean effort grows with the target") {
  auto& f = fixture();
  double prev = 0;
  for (double target : {0.8, 0.9, 0.99}) {
    auto iv = et::heuristic_params(f.effort, target);
    double ndis = 0;
    for (std::size_t i = 0; i < f.q.count(); ++i) {
      et::EtConfig c{target, 10, iv, &f.model, 80};
      ndis += double(et::darth_search(f.g, f.q.row(i), c).ndis);
    }
    CHECK(ndis >= prev);
    prev = ndis;
  }
}
