#include <doctest.h>

#include <algorithm>
#include <memory>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include "darth/hnsw.hpp"
#include "darth/traindata.hpp"
#include "darth/vectors_io.hpp"
#include "helpers.hpp"

using namespace darth;

namespace {

std::shared_ptr<const Dataset> make_base(std::size_t n, std::size_t dim, std::uint64_t seed) {
  return std::make_shared<const Dataset>(testutil::gaussian(n, dim, seed));
}

struct CountingHook {
  std::uint64_t calls = 0;
  std::uint64_t last_ndis = 0;
  bool monotone = true;
  HookAction operator()(const SearchState& st) {
    ++calls;
    if (st.ndis != last_ndis + 1) monotone = false;
    last_ndis = st.ndis;
    return HookAction::proceed;
  }
};

}  // namespace

TEST_CASE("single-node graph") {
  auto base = make_base(1, 4, 1);
  auto g = hnsw::HnswGraph::build(base, {});
  g.check_invariants();
  auto r = hnsw::plain_search(g, base->row(0), 1, 10);
  REQUIRE(r.ids.size() == 1);
  CHECK(r.ids[0] == 0);
  CHECK(r.ndis == 1);
}

TEST_CASE("structural invariants and degree bounds") {
  auto base = make_base(2000, 16, 2);
  auto g = hnsw::HnswGraph::build(base, {8, 64, 5, 1});
  g.check_invariants();
  CHECK(g.size() == 2000);
  CHECK(g.level(g.entry_point()) == g.max_level());
  for (idx_t i = 0; i < g.size(); ++i) {
    for (int l = 0; l <= g.level(i); ++l) {
      auto nb = g.neighbors(i, l);
      CHECK(nb.size() <= g.max_degree(l));
      std::set<idx_t> s(nb.begin(), nb.end());
      CHECK(s.size() == nb.size());
      CHECK(!s.contains(i));
      for (idx_t j : nb) CHECK(g.level(j) >= l);
    }
  }
}

TEST_CASE("level distribution is roughly geometric") {
  auto base = make_base(4000, 4, 3);
  auto g = hnsw::HnswGraph::build(base, {16, 32, 7, 1});
  std::size_t above = 0;
  for (idx_t i = 0; i < g.size(); ++i) above += g.level(i) > 0;
  // P(level > 0) = 1/M.
  CHECK(double(above) / 4000.0 == doctest::Approx(1.0 / 16).epsilon(0.3));
}

TEST_CASE("exhaustive width on a small set is exact") {
  auto base = make_base(100, 8, 4);
  auto g = hnsw::HnswGraph::build(base, {});
  auto q = testutil::gaussian(20, 8, 5, 1.0f, Role::query);
  auto gt = io::brute_force_knn(*base, q, 100);
  for (std::size_t i = 0; i < q.count(); ++i) {
    auto r = hnsw::plain_search(g, q.row(i), 100, 100);
    CHECK(traindata::label_recall(r.ids, gt.ids_row(i)) == 1.0);
  }
}

TEST_CASE("self queries return themselves first") {
  auto base = make_base(1000, 16, 6);
  auto g = hnsw::HnswGraph::build(base, {});
  for (idx_t i = 0; i < 1000; i += 37) {
    auto r = hnsw::plain_search(g, base->row(i), 1, 50);
    CHECK(r.ids[0] == i);
    CHECK(r.dists[0] == 0.0f);
  }
}

TEST_CASE("results are sorted and sized") {
  auto base = make_base(500, 8, 7);
  auto g = hnsw::HnswGraph::build(base, {});
  auto q = testutil::gaussian(10, 8, 8, 1.0f, Role::query);
  for (std::size_t i = 0; i < q.count(); ++i) {
    auto r = hnsw::plain_search(g, q.row(i), 10, 40);
    REQUIRE(r.ids.size() == 10);
    for (std::size_t j = 1; j < 10; ++j) CHECK(Neighbor{r.dists[j - 1], r.ids[j - 1]} < Neighbor{r.dists[j], r.ids[j]});
    for (std::size_t j = 0; j < 10; ++j)
      CHECK(r.dists[j] == doctest::Approx(testutil::sq_dist(q.row(i), base->row(r.ids[j]))).epsilon(1e-5));
    CHECK(r.terminated == Termination::natural);
  }
}

TEST_CASE("hook observes every distance and the identity hook changes nothing") {
  auto base = make_base(1500, 12, 9);
  auto g = hnsw::HnswGraph::build(base, {});
  auto q = testutil::gaussian(15, 12, 10, 1.0f, Role::query);
  for (std::size_t i = 0; i < q.count(); ++i) {
    auto plain = hnsw::plain_search(g, q.row(i), 10, 64);
    CountingHook h;
    auto hooked = hnsw::search_with_hook(g, q.row(i), {10, 64, false}, h);
    CHECK(hooked.ids == plain.ids);
    CHECK(hooked.dists == plain.dists);
    CHECK(hooked.ndis == plain.ndis);
    CHECK(h.calls == hooked.ndis);
    CHECK(h.monotone);
  }
}

TEST_CASE("hook state exposes running search") {
  auto base = make_base(800, 8, 11);
  auto g = hnsw::HnswGraph::build(base, {});
  auto q = testutil::gaussian(1, 8, 12, 1.0f, Role::query);
  bool ok = true;
  float first = -1;
  std::uint64_t inserts = 0;
  auto r = hnsw::search_with_hook(g, q.row(0), {5, 30, false}, [&](const SearchState& st) {
    if (st.ndis == 1) first = st.first_nn;
    ok = ok && st.has_first_nn && st.first_nn == first && !st.results.empty() && st.k == 5;
    if (st.last_inserted) ++inserts;
    ok = ok && st.ninserts == inserts && st.results.size() <= 30;
    return HookAction::proceed;
  });
  CHECK(ok);
  CHECK(r.ninserts == inserts);
}

TEST_CASE("terminating hook stops the search immediately") {
  auto base = make_base(800, 8, 13);
  auto g = hnsw::HnswGraph::build(base, {});
  auto q = testutil::gaussian(1, 8, 14, 1.0f, Role::query);
  auto r = hnsw::search_with_hook(g, q.row(0), {10, 50, false}, [](const SearchState&) { return HookAction::terminate; });
  CHECK(r.ndis == 1);
  CHECK(r.terminated == Termination::early);
  CHECK(r.ids.size() == 1);

  auto r2 = hnsw::search_with_hook(g, q.row(0), {10, 50, false},
                                   [](const SearchState& st) { return st.ndis >= 25 ? HookAction::terminate : HookAction::proceed; });
  CHECK(r2.ndis == 25);
  CHECK(r2.ids.size() == 10);
}

TEST_CASE("strict_k caps the working set") {
  auto base = make_base(800, 8, 15);
  auto g = hnsw::HnswGraph::build(base, {});
  auto q = testutil::gaussian(1, 8, 16, 1.0f, Role::query);
  std::size_t max_size = 0;
  hnsw::search_with_hook(g, q.row(0), {5, 50, true}, [&](const SearchState& st) {
    max_size = std::max(max_size, st.results.size());
    return HookAction::proceed;
  });
  CHECK(max_size == 5);
}

TEST_CASE("sequential build is deterministic and persists") {
  testutil::TempDir t("hnsw");
  auto base = make_base(1200, 10, 17);
  auto g1 = hnsw::HnswGraph::build(base, {12, 80, 3, 1});
  auto g2 = hnsw::HnswGraph::build(base, {12, 80, 3, 1});
  g1.save(t / "a.hnsw");
  g2.save(t / "b.hnsw");
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(read(t / "a.hnsw") == read(t / "b.hnsw"));

  auto g3 = hnsw::HnswGraph::load(t / "a.hnsw", base);
  g3.check_invariants();
  auto q = testutil::gaussian(10, 10, 18, 1.0f, Role::query);
  for (std::size_t i = 0; i < q.count(); ++i) {
    auto a = hnsw::plain_search(g1, q.row(i), 10, 50);
    auto b = hnsw::plain_search(g3, q.row(i), 10, 50);
    CHECK(a.ids == b.ids);
    CHECK(a.ndis == b.ndis);
  }
  auto other = make_base(1000, 10, 19);
  CHECK_THROWS(hnsw::HnswGraph::load(t / "a.hnsw", other));
  std::ofstream(t / "junk.hnsw") << "not a graph";
  CHECK_THROWS(hnsw::HnswGraph::load(t / "junk.hnsw", base));
}

TEST_CASE("multithreaded build keeps invariants and quality") {
  auto base = make_base(3000, 16, 20);
  auto g = hnsw::HnswGraph::build(base, {16, 100, 3, 4});
  g.check_invariants();
  auto q = testutil::gaussian(30, 16, 21, 1.0f, Role::query);
  auto gt = io::brute_force_knn(*base, q, 10);
  double rec = 0;
  for (std::size_t i = 0; i < q.count(); ++i)
    rec += traindata::label_recall(hnsw::plain_search(g, q.row(i), 10, 100).ids, gt.ids_row(i));
  CHECK(rec / 30 > 0.9);
}

TEST_CASE("duplicate vectors") {
  std::vector<float> v(200 * 4, 1.0f);
  for (std::size_t i = 100 * 4; i < v.size(); ++i) v[i] = 2.0f;
  auto base = std::make_shared<const Dataset>(4, v);
  auto g = hnsw::HnswGraph::build(base, {});
  g.check_invariants();
  Dataset q(4, std::vector<float>(4, 1.0f), Role::query);
  auto r = hnsw::plain_search(g, q.row(0), 10, 100);
  REQUIRE(r.ids.size() == 10);
  for (std::size_t j = 0; j < 10; ++j) {
    CHECK(r.dists[j] == 0.0f);
    CHECK(r.ids[j] < 100);
  }
}
