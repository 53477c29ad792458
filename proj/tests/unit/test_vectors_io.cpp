#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "darth/vectors_io.hpp"
#include "helpers.hpp"

using namespace darth;
using testutil::TempDir;

namespace {

void write_raw(const std::filesystem::path& p, const std::vector<std::int32_t>& words) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
}

std::int32_t fbits(float f) {
  std::int32_t i;
  std::memcpy(&i, &f, 4);
  return i;
}

}  // namespace

TEST_CASE("fvecs round trip is bitwise") {
  TempDir t("io");
  auto d = testutil::gaussian(37, 13, 1, 100.0f);
  io::save_vectors(t / "a.fvecs", d);
  auto r = io::load_vectors(t / "a.fvecs", io::VecFormat::fvecs);
  CHECK(r.dim() == 13);
  CHECK(r.count() == 37);
  CHECK(r.values() == d.values());
}

TEST_CASE("bvecs round trip on byte-valued data") {
  TempDir t("io");
  std::vector<float> v(4 * 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((i * 37) % 256);
  Dataset d(3, v);
  io::save_vectors(t / "a.bvecs", d, io::VecFormat::bvecs);
  auto r = io::load_vectors(t / "a.bvecs", io::VecFormat::bvecs);
  CHECK(r.values() == v);
}

TEST_CASE("ivecs and ground truth round trip") {
  TempDir t("io");
  io::IntMatrix m{3, 2, {1, -2, 3, 4, 5, 6}};
  io::save_ivecs(t / "m.ivecs", m);
  auto r = io::load_ivecs(t / "m.ivecs");
  CHECK(r.dim == 3);
  CHECK(r.count == 2);
  CHECK(r.values == m.values);

  auto base = testutil::gaussian(50, 4, 2);
  auto q = testutil::gaussian(5, 4, 3);
  auto gt = io::brute_force_knn(base, q, 7);
  io::save_ground_truth(t / "gt", gt);
  auto g2 = io::load_ground_truth(t / "gt");
  CHECK(g2.k == 7);
  CHECK(g2.count == 5);
  CHECK(g2.ids == gt.ids);
  CHECK(g2.dists == gt.dists);
}

TEST_CASE("ivecs payload loads as float") {
  TempDir t("io");
  write_raw(t / "x.ivecs", {2, 7, -3});
  auto d = io::load_vectors(t / "x.ivecs", io::VecFormat::ivecs);
  CHECK(d.row(0)[0] == 7.0f);
  CHECK(d.row(0)[1] == -3.0f);
}

TEST_CASE("malformed files") {
  TempDir t("io");
  SUBCASE("truncated payload") {
    write_raw(t / "a.fvecs", {3, fbits(1), fbits(2)});
    CHECK_THROWS_AS(io::load_vectors(t / "a.fvecs", io::VecFormat::fvecs), FormatError);
  }
  SUBCASE("truncated header") {
    std::ofstream(t / "a.fvecs", std::ios::binary).write("\x02\x00", 2);
    CHECK_THROWS_AS(io::load_vectors(t / "a.fvecs", io::VecFormat::fvecs), FormatError);
  }
  SUBCASE("dimension mismatch") {
    write_raw(t / "a.fvecs", {2, fbits(1), fbits(2), 3, fbits(1), fbits(2), fbits(3)});
    CHECK_THROWS_AS(io::load_vectors(t / "a.fvecs", io::VecFormat::fvecs), FormatError);
  }
  SUBCASE("non-positive dimension") {
    write_raw(t / "a.fvecs", {0});
    CHECK_THROWS_AS(io::load_vectors(t / "a.fvecs", io::VecFormat::fvecs), FormatError);
  }
  SUBCASE("non-finite component") {
    write_raw(t / "a.fvecs", {2, fbits(1), fbits(std::numeric_limits<float>::quiet_NaN())});
    CHECK_THROWS_AS(io::load_vectors(t / "a.fvecs", io::VecFormat::fvecs), DataError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(io::load_vectors(t / "none.fvecs", io::VecFormat::fvecs), FormatError);
  }
  SUBCASE("empty file") {
    std::ofstream(t / "e.fvecs").close();
    auto d = io::load_vectors(t / "e.fvecs", io::VecFormat::fvecs);
    CHECK(d.empty());
  }
}

TEST_CASE("format parsing") {
  CHECK(io::parse_format("bvecs") == io::VecFormat::bvecs);
  CHECK(io::format_from_path("x/y.ivecs") == io::VecFormat::ivecs);
  CHECK_THROWS_AS(io::parse_format("npy"), ArgumentError);
}

TEST_CASE("brute force on a 1-D line") {
  Dataset base(1, {0.0f, 10.0f, 20.0f});
  Dataset q(1, {12.0f}, Role::query);
  auto gt = io::brute_force_knn(base, q, 2);
  CHECK(gt.ids_row(0)[0] == 1);
  CHECK(gt.ids_row(0)[1] == 2);
  CHECK(gt.dists_row(0)[0] == 4.0f);
  CHECK(gt.dists_row(0)[1] == 64.0f);
  CHECK_THROWS_AS(io::brute_force_knn(base, q, 4), ArgumentError);
  CHECK_THROWS_AS(io::brute_force_knn(base, q, 0), ArgumentError);
}

TEST_CASE("brute force matches a full-sort oracle on integer data") {
  // Integer coordinates make every distance exact, so ties are real ties and
  // must resolve to the lower id.
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> u(-3, 3);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 20 + inst, dim = 1 + inst % 5, k = 1 + inst % 10;
    std::vector<float> bv(n * dim), qv(3 * dim);
    for (float& x : bv) x = static_cast<float>(u(rng));
    for (float& x : qv) x = static_cast<float>(u(rng));
    Dataset base(dim, bv), q(dim, qv, Role::query);
    auto gt = io::brute_force_knn(base, q, k, 1 + inst % 3);
    for (std::size_t qi = 0; qi < 3; ++qi) {
      std::vector<std::pair<double, idx_t>> all;
      for (std::size_t i = 0; i < n; ++i) all.push_back({testutil::sq_dist(q.row(qi), base.row(i)), idx_t(i)});
      std::sort(all.begin(), all.end());
      for (std::size_t j = 0; j < k; ++j) {
        CHECK(gt.ids_row(qi)[j] == all[j].second);
        CHECK(gt.dists_row(qi)[j] == static_cast<float>(all[j].first));
      }
    }
  }
}

TEST_CASE("noise: zero level is the identity") {
  auto q = testutil::gaussian(20, 16, 4, 5.0f, Role::query);
  auto n = io::add_gaussian_noise(q, 0.0, 99);
  CHECK(n.values() == q.values());
  CHECK_THROWS_AS(io::add_gaussian_noise(q, -0.1, 1), ArgumentError);
}

TEST_CASE("noise: variance follows the rule") {
  // Unit-norm queries: variance-of-norm gives sigma^2 = pct.
  const std::size_t n = 1000, dim = 128;
  std::vector<float> v(n * dim, 0.0f);
  for (std::size_t i = 0; i < n; ++i) v[i * dim + (i % dim)] = 1.0f;
  Dataset q(dim, v, Role::query);
  auto noisy = io::add_gaussian_noise(q, 0.12, 5);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double e = double(noisy.values()[i]) - v[i];
    s += e;
    s2 += e * e;
  }
  const double m = s / double(v.size());
  const double var = s2 / double(v.size()) - m * m;
  CHECK(var == doctest::Approx(0.12).epsilon(0.05));

  auto sd = io::add_gaussian_noise(q, 0.3, 5, io::NoiseRule::stddev_of_norm);
  s2 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s2 += std::pow(double(sd.values()[i]) - v[i], 2);
  CHECK(s2 / double(v.size()) == doctest::Approx(0.09).epsilon(0.05));
}

TEST_CASE("noise: deterministic and monotone in level") {
  auto q = testutil::gaussian(50, 32, 8, 10.0f, Role::query);
  auto a = io::add_gaussian_noise(q, 0.05, 3);
  auto b = io::add_gaussian_noise(q, 0.05, 3);
  CHECK(a.values() == b.values());
  auto c = io::add_gaussian_noise(q, 0.05, 4);
  CHECK(a.values() != c.values());
  double prev = 0;
  for (double pct : {0.01, 0.04, 0.1, 0.3}) {
    auto x = io::add_gaussian_noise(q, pct, 3);
    double disp = 0;
    for (std::size_t i = 0; i < q.count(); ++i) disp += std::sqrt(testutil::sq_dist(q.row(i), x.row(i)));
    CHECK(disp > prev);
    prev = disp;
  }
  CHECK(io::parse_noise_rule("stddev-of-norm") == io::NoiseRule::stddev_of_norm);
  CHECK_THROWS_AS(io::parse_noise_rule("bogus"), ArgumentError);
}

TEST_CASE("learn split is disjoint and sized") {
  std::vector<float> v(100);
  std::iota(v.begin(), v.end(), 0.0f);
  Dataset learn(1, v, Role::learn);
  auto [tr, va] = io::split_learn_queries(learn, 60, 30, 1);
  CHECK(tr.count() == 60);
  CHECK(va.count() == 30);
  std::set<float> seen;
  for (float x : tr.values()) seen.insert(x);
  for (float x : va.values()) seen.insert(x);
  CHECK(seen.size() == 90);
  auto [tr2, va2] = io::split_learn_queries(learn, 60, 30, 1);
  CHECK(tr2.values() == tr.values());
  CHECK_THROWS_AS(io::split_learn_queries(learn, 80, 30, 1), ArgumentError);
}

TEST_CASE("dataset invariants") {
  CHECK_THROWS_AS(Dataset(3, std::vector<float>(4)), ArgumentError);
  CHECK_THROWS_AS(Dataset(1, {std::numeric_limits<float>::infinity()}), DataError);
  Dataset d(2, {0, 1, 2, 3, 4, 5});
  std::vector<idx_t> ids{2, 0};
  auto s = d.subset(ids, Role::query);
  CHECK(s.row(0)[0] == 4.0f);
  CHECK(s.row(1)[1] == 1.0f);
  CHECK(d.slice(1, 3).row(0)[0] == 2.0f);
}
