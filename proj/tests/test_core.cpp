#include <doctest.h>

#include <random>
#include <set>

#include "crt/core.hpp"
#include "crt/parallel.hpp"
#include "support.hpp"

using namespace crt;

namespace {

Dataset small_dataset(std::size_t n) {
  Matrix x = testing::normal_matrix(static_cast<Eigen::Index>(n), 2, 1);
  Vector y = x.col(0);
  return Dataset(x, {FeatureKind::continuous(), FeatureKind::continuous()}, y,
                 FeatureKind::continuous());
}

}  // namespace

TEST_CASE("feature kinds") {
  CHECK(FeatureKind::continuous().is_continuous());
  CHECK(FeatureKind::categorical(3).levels() == 3);
  CHECK(FeatureKind::continuous().levels() == 0);
  CHECK_THROWS_AS(FeatureKind::categorical(1), InvalidArgument);
  CHECK_THROWS_AS(FeatureKind::categorical(0), InvalidArgument);

  for (const auto& kind : {FeatureKind::continuous(), FeatureKind::categorical(2),
                           FeatureKind::categorical(17)}) {
    CHECK(FeatureKind::parse(kind.to_string()) == kind);
  }
  CHECK_THROWS_AS(FeatureKind::parse("categorical:1"), InvalidArgument);
  CHECK_THROWS_AS(FeatureKind::parse("categorical:2x"), InvalidArgument);
  CHECK_THROWS_AS(FeatureKind::parse("ordinal"), InvalidArgument);
}

TEST_CASE("dataset validation") {
  const Matrix x = testing::normal_matrix(4, 2, 2);
  const Vector y = Vector::Zero(4);
  const std::vector<FeatureKind> kinds(2, FeatureKind::continuous());

  CHECK_NOTHROW(Dataset(x, kinds, y, FeatureKind::continuous()));
  CHECK_THROWS_AS(Dataset(x.topRows(1), kinds, y.head(1), FeatureKind::continuous()), InvalidArgument);
  CHECK_THROWS_AS(Dataset(Matrix(4, 0), {}, y, FeatureKind::continuous()), InvalidArgument);
  CHECK_THROWS_AS(Dataset(x, {FeatureKind::continuous()}, y, FeatureKind::continuous()), InvalidArgument);
  CHECK_THROWS_AS(Dataset(x, kinds, Vector::Zero(3), FeatureKind::continuous()), InvalidArgument);

  SUBCASE("non-finite values") {
    Matrix bad = x;
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(Dataset(bad, kinds, y, FeatureKind::continuous()), InvalidArgument);
    bad(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Dataset(bad, kinds, y, FeatureKind::continuous()), InvalidArgument);
    Vector bad_y = y;
    bad_y(0) = -std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Dataset(x, kinds, bad_y, FeatureKind::continuous()), InvalidArgument);
  }

  SUBCASE("categorical range") {
    Matrix c(4, 1);
    c << 0, 1, 2, 1;
    CHECK_NOTHROW(Dataset(c, {FeatureKind::categorical(3)}, y, FeatureKind::continuous()));
    CHECK_THROWS_AS(Dataset(c, {FeatureKind::categorical(2)}, y, FeatureKind::continuous()),
                    InvalidArgument);
    c(0, 0) = 0.5;
    CHECK_THROWS_AS(Dataset(c, {FeatureKind::categorical(3)}, y, FeatureKind::continuous()),
                    InvalidArgument);
    c(0, 0) = -1;
    CHECK_THROWS_AS(Dataset(c, {FeatureKind::categorical(3)}, y, FeatureKind::continuous()),
                    InvalidArgument);
    Vector labels(4);
    labels << 0, 1, 1, 2;
    CHECK_THROWS_AS(Dataset(x, kinds, labels, FeatureKind::categorical(2)), InvalidArgument);
  }

  SUBCASE("subset keeps order and allows one row") {
    const Dataset d(x, kinds, Vector::LinSpaced(4, 0, 3), FeatureKind::continuous());
    const std::vector<std::size_t> rows = {3, 1};
    const Dataset s = d.subset(rows);
    CHECK(s.n() == 2);
    CHECK(s.target()(0) == 3.0);
    CHECK(s.features()(1, 0) == x(1, 0));
    const std::vector<std::size_t> one = {2};
    CHECK(d.subset(one).n() == 1);
    const std::vector<std::size_t> out_of_range = {4};
    CHECK_THROWS_AS(d.subset(out_of_range), InvalidArgument);
  }
}

TEST_CASE("drop_column") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const Matrix d = drop_column(m, 1);
  CHECK(d.cols() == 2);
  CHECK(d(0, 0) == 1);
  CHECK(d(0, 1) == 3);
  CHECK(d(1, 1) == 6);
  CHECK(drop_column(m, 2)(1, 1) == 5);
  CHECK_THROWS_AS(drop_column(m, 3), InvalidArgument);
}

TEST_CASE("config validation") {
  CrtConfig c;
  CHECK(c.num_null_draws == 1000);
  CHECK(c.quantile_grid_size == 200);
  CHECK(c.alpha == 0.05);
  CHECK(c.split_fraction == 0.8);
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    CrtConfig cfg;
    mutate(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(bad([](CrtConfig& x) { x.num_null_draws = 0; }).validate(), InvalidArgument);
  CHECK_THROWS_AS(bad([](CrtConfig& x) { x.quantile_grid_size = 1; }).validate(), InvalidArgument);
  CHECK_THROWS_AS(bad([](CrtConfig& x) { x.alpha = 0.0; }).validate(), InvalidArgument);
  CHECK_THROWS_AS(bad([](CrtConfig& x) { x.alpha = 1.0; }).validate(), InvalidArgument);
  CHECK_THROWS_AS(bad([](CrtConfig& x) { x.split_fraction = 1.0; }).validate(), InvalidArgument);
  CHECK_THROWS_AS(bad([](CrtConfig& x) { x.split_fraction = std::nan(""); }).validate(), InvalidArgument);
}

TEST_CASE("derive_seed") {
  SUBCASE("empty path is the finalizer of the master") {
    for (std::uint64_t s : {0ULL, 1ULL, 42ULL, 0xffffffffffffffffULL}) {
      CHECK(derive_seed(s, {}) == splitmix64_mix(s + 0x9e3779b97f4a7c15ULL));
      CHECK(derive_seed(s, {}) == derive_seed(s, {}));
    }
  }

  SUBCASE("known finalizer values") {
    // First outputs of the reference SplitMix64 generator seeded with 0.
    Rng rng(0);
    CHECK(rng() == 0xe220a8397b1dcdafULL);
    CHECK(rng() == 0x6e789e6aa1b965f4ULL);
    CHECK(rng() == 0x06c45d188009454fULL);
  }

  std::mt19937_64 gen(7);
  SUBCASE("sibling paths differ") {
    for (int i = 0; i < 10000; ++i) {
      const std::uint64_t s = gen();
      REQUIRE(derive_seed(s, {0}) != derive_seed(s, {1}));
    }
  }
  SUBCASE("paths are order sensitive") {
    for (int i = 0; i < 10000; ++i) {
      const std::uint64_t s = gen();
      const std::uint64_t a = gen();
      std::uint64_t b = gen();
      if (a == b) ++b;
      REQUIRE(derive_seed(s, {a, b}) != derive_seed(s, {b, a}));
    }
  }
  SUBCASE("prefix and extension differ") {
    for (int i = 0; i < 1000; ++i) {
      const std::uint64_t s = gen();
      REQUIRE(derive_seed(s, {3}) != derive_seed(s, {3, 0}));
      REQUIRE(derive_seed(s, {}) != derive_seed(s, {0}));
    }
  }
  SUBCASE("span and list overloads agree") {
    const std::vector<std::uint64_t> path = {5, 9, 2};
    CHECK(derive_seed(11, path) == derive_seed(11, {5, 9, 2}));
  }
}

TEST_CASE("rng distributions") {
  Rng rng(123);
  std::vector<double> u(200000);
  for (auto& v : u) {
    v = rng.uniform();
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
  }
  CHECK(testing::ks_statistic(u, [](double x) { return x; }) < 0.005);

  std::vector<double> z(200000);
  for (auto& v : z) v = rng.normal();
  CHECK(testing::ks_statistic(z, testing::normal_cdf) < 0.005);
  CHECK(std::abs(testing::mean(z)) < 0.01);
  CHECK(std::abs(testing::variance(z) - 1.0) < 0.01);

  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = rng.below(7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  for (const int c : counts) CHECK(std::abs(c - 10000) < 400);
  CHECK(rng.below(1) == 0);
  CHECK(rng.below(0) == 0);

  Rng a(99);
  Rng b(99);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal(2.0, 3.0) == b.normal(2.0, 3.0));
}

TEST_CASE("split_dataset") {
  const Dataset d = small_dataset(10);
  const auto split = split_dataset(d, 0.8, 5);
  CHECK(split.train.size() == 8);
  CHECK(split.eval.size() == 2);

  const auto again = split_dataset(d, 0.8, 5);
  CHECK(again.train == split.train);
  CHECK(again.eval == split.eval);

  CHECK_THROWS_AS(split_dataset(small_dataset(5), 0.1, 1), InvalidArgument);
  CHECK_THROWS_AS(split_dataset(small_dataset(1), 0.9, 1), InvalidArgument);
  CHECK_THROWS_AS(split_dataset(d, 0.0, 1), InvalidArgument);

  SUBCASE("partition property") {
    for (std::size_t n = 2; n < 60; n += 3) {
      const Dataset data = small_dataset(n);
      for (double f : {0.5, 0.8, 0.67}) {
        const auto expected = static_cast<std::size_t>(std::floor(f * static_cast<double>(n)));
        if (expected < 1 || expected == n) continue;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
          const auto s = split_dataset(data, f, seed);
          REQUIRE(s.train.size() == expected);
          std::set<std::size_t> all(s.train.begin(), s.train.end());
          for (const auto i : s.eval) REQUIRE(all.insert(i).second);
          REQUIRE(all.size() == n);
          REQUIRE(*all.rbegin() == n - 1);
        }
      }
    }
  }

  SUBCASE("membership is roughly uniform") {
    const Dataset data = small_dataset(10);
    std::vector<int> in_eval(10, 0);
    for (std::uint64_t seed = 0; seed < 5000; ++seed) {
      for (const auto i : split_dataset(data, 0.8, seed).eval) ++in_eval[i];
    }
    for (const int c : in_eval) CHECK(std::abs(c - 1000) < 120);
  }
}

TEST_CASE("parallel_for") {
  for (unsigned threads : {1u, 2u, 3u, 8u, 64u}) {
    std::vector<int> out(37, -1);
    parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == static_cast<int>(i * i));
  }
  CHECK_NOTHROW(parallel_for(0, 4, [](std::size_t) { throw std::runtime_error("never"); }));

  for (unsigned threads : {1u, 4u}) {
    try {
      parallel_for(20, threads, [](std::size_t i) {
        if (i == 7 || i == 15) throw std::runtime_error("fail " + std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "fail 7");
    }
  }
}
