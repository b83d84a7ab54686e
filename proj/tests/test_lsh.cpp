#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "lgd/data.hpp"
#include "lgd/error.hpp"
#include "lgd/lsh.hpp"
#include "lgd/models.hpp"
#include "lgd/rng.hpp"

using namespace lgd;

namespace {

HashFamilyParams params(std::uint32_t K, std::uint32_t L, std::size_t dim, double density, std::uint64_t seed = 1) {
  HashFamilyParams p;
  p.K = K;
  p.L = L;
  p.dim = dim;
  p.density = density;
  p.seed = seed;
  return p;
}

std::vector<Vector> unit_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_unit_vector(d, rng));
  return out;
}

// Bit k taken from project(): the reference every fast path must agree with.
HashCode reference_code(const HashFamily& f, std::span<const double> v, std::uint32_t t) {
  HashCode c{0, f.params().K};
  for (std::uint32_t k = 0; k < f.params().K; ++k)
    if (f.project(v, t, k) >= 0.0) c.bits |= std::uint64_t{1} << k;
  return c;
}

}  // namespace

TEST_CASE("params validation rejects out-of-range fields") {
  CHECK_NOTHROW(params(5, 100, 10, 1.0 / 30).validate());
  CHECK_THROWS_AS(params(0, 1, 10, 0.5).validate(), ParameterError);
  CHECK_THROWS_AS(params(65, 1, 10, 0.5).validate(), ParameterError);
  CHECK_THROWS_AS(params(1, 0, 10, 0.5).validate(), ParameterError);
  CHECK_THROWS_AS(params(1, 1, 0, 0.5).validate(), ParameterError);
  CHECK_THROWS_AS(params(1, 1, 10, 0.0).validate(), ParameterError);
  CHECK_THROWS_AS(params(1, 1, 10, 1.5).validate(), ParameterError);
  CHECK_THROWS_AS(HashFamily::build(params(0, 1, 1, 1.0)), ParameterError);
}

TEST_CASE("density one gives full support and unit signs") {
  const auto f = HashFamily::build(params(4, 3, 3, 1.0));
  for (std::uint32_t t = 0; t < 3; ++t)
    for (std::uint32_t k = 0; k < 4; ++k) {
      const auto& e = f.projection(t, k).entries;
      REQUIRE(e.size() == 3);
      for (std::uint32_t j = 0; j < 3; ++j) {
        CHECK(e[j].index == j);
        CHECK(std::abs(e[j].weight) == 1.0);
      }
    }
}

TEST_CASE("same seed gives identical projections, different seed does not") {
  const auto a = HashFamily::build(params(5, 10, 200, 0.1, 7));
  const auto b = HashFamily::build(params(5, 10, 200, 0.1, 7));
  const auto c = HashFamily::build(params(5, 10, 200, 0.1, 8));
  bool any_diff = false;
  for (std::uint32_t t = 0; t < 10; ++t)
    for (std::uint32_t k = 0; k < 5; ++k) {
      const auto& ea = a.projection(t, k).entries;
      const auto& eb = b.projection(t, k).entries;
      REQUIRE(ea.size() == eb.size());
      for (std::size_t j = 0; j < ea.size(); ++j) {
        CHECK(ea[j].index == eb[j].index);
        CHECK(ea[j].weight == eb[j].weight);
      }
      const auto& ec = c.projection(t, k).entries;
      if (ec.size() != ea.size()) any_diff = true;
      else
        for (std::size_t j = 0; j < ea.size(); ++j)
          if (ec[j].index != ea[j].index || ec[j].weight != ea[j].weight) any_diff = true;
    }
  CHECK(any_diff);
}

TEST_CASE("sparse entries are strictly increasing with mean count density * dim") {
  // 10^4 projections over dim 900 at density 1/30: mean 30, sd of the mean ~0.054.
  const auto f = HashFamily::build(params(10, 1000, 900, 1.0 / 30, 3));
  double total = 0.0;
  std::size_t plus = 0, count = 0;
  for (std::uint32_t t = 0; t < 1000; ++t)
    for (std::uint32_t k = 0; k < 10; ++k) {
      const auto& e = f.projection(t, k).entries;
      total += static_cast<double>(e.size());
      for (std::size_t j = 0; j < e.size(); ++j) {
        CHECK(e[j].index < 900);
        if (j > 0) CHECK(e[j].index > e[j - 1].index);
        plus += e[j].weight > 0;
        ++count;
      }
    }
  CHECK(total / 1e4 == doctest::Approx(30.0).epsilon(0.05));
  CHECK(static_cast<double>(plus) / static_cast<double>(count) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("code: zero vector maps to all ones") {
  for (double density : {1.0, 1.0 / 30}) {
    const auto f = HashFamily::build(params(7, 4, 50, density));
    const Vector zero(50, 0.0);
    for (std::uint32_t t = 0; t < 4; ++t) CHECK(f.code(zero, t).bits == (std::uint64_t{1} << 7) - 1);
  }
}

TEST_CASE("code: v and -v give complementary codes when no projection is zero") {
  const auto f = HashFamily::build(params(6, 8, 40, 1.0));
  SplitMix64 rng(11);
  const Vector v = random_unit_vector(40, rng);
  const Vector w = scaled(v, -1.0);
  for (std::uint32_t t = 0; t < 8; ++t) {
    const auto a = f.code(v, t), b = f.code(w, t);
    CHECK((a.bits ^ b.bits) == (std::uint64_t{1} << 6) - 1);
  }
}

TEST_CASE("code: basis vector e1 reads the first coordinate signs") {
  const auto f = HashFamily::build(params(2, 5, 6, 1.0, 42));
  Vector e1(6, 0.0);
  e1[0] = 1.0;
  for (std::uint32_t t = 0; t < 5; ++t) {
    const auto c = f.code(e1, t);
    for (std::uint32_t k = 0; k < 2; ++k) CHECK(c.bit(k) == (f.projection(t, k).entries[0].weight > 0));
  }
}

TEST_CASE("code: shape mismatch raises") {
  const auto f = HashFamily::build(params(3, 2, 10, 0.5));
  CHECK_THROWS_AS(f.code(Vector(9, 1.0), 0), ShapeError);
}

TEST_CASE("every code path agrees bit for bit with project()") {
  struct Case {
    double density;
    ProjectionWeights weights;
    Embedding embedding;
    std::size_t dim;
  };
  const Case cases[] = {
      {1.0, ProjectionWeights::kSign, Embedding::kIdentity, 33},
      {1.0, ProjectionWeights::kGaussian, Embedding::kIdentity, 33},
      {0.2, ProjectionWeights::kSign, Embedding::kIdentity, 33},
      {0.2, ProjectionWeights::kGaussian, Embedding::kIdentity, 33},
      {1.0, ProjectionWeights::kGaussian, Embedding::kRankOneOuter, 9},
      {0.5, ProjectionWeights::kSign, Embedding::kRankOneOuter, 9},
      {0.3, ProjectionWeights::kGaussian, Embedding::kOuterProduct, 81},
  };
  for (const auto& c : cases) {
    for (std::uint32_t K : {1u, 5u, 9u, 17u}) {
      HashFamilyParams p = params(K, 6, c.dim, c.density, 5 + K);
      p.weights = c.weights;
      const auto f = HashFamily::build(p, c.embedding);
      const auto pts = unit_points(20, f.input_dim(), K);
      for (const auto& v : pts)
        for (std::uint32_t t = 0; t < 6; ++t) CHECK(f.code(v, t) == reference_code(f, v, t));
    }
  }
}

TEST_CASE("outer-product family hashes the transform of its input") {
  // code(u) on the implicit family equals the sign of the explicit sparse
  // dot product with quadratic_transform(u).
  const auto f = HashFamily::build(params(4, 3, 49, 0.4, 9), Embedding::kOuterProduct);
  REQUIRE(f.input_dim() == 7);
  SplitMix64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector u = random_unit_vector(7, rng);
    const Vector tu = quadratic_transform(u);
    for (std::uint32_t t = 0; t < 3; ++t)
      for (std::uint32_t k = 0; k < 4; ++k) {
        double s = 0.0;
        for (const auto& e : f.projection(t, k).entries) s += e.weight * tu[e.index];
        CHECK(f.project(u, t, k) == doctest::Approx(s).epsilon(1e-12));
      }
  }
  CHECK_THROWS_AS(HashFamily::build(params(2, 1, 50, 0.5), Embedding::kOuterProduct), ParameterError);
}

TEST_CASE("collision probability closed form") {
  const Vector a{1.0, 0.0}, b{0.0, 2.0}, c{-3.0, 0.0};
  CHECK(collision_probability(a, a) == doctest::Approx(1.0));
  CHECK(collision_probability(a, b) == doctest::Approx(0.5));
  CHECK(collision_probability(a, c) == doctest::Approx(0.0));
  CHECK_THROWS_AS(collision_probability(a, Vector{0.0, 0.0}), DomainError);
  // cosine clamped against rounding
  CHECK(collision_probability_from_cosine(1.0 + 1e-15) == 1.0);
  CHECK(collision_probability_from_cosine(-1.0 - 1e-15) == 0.0);
}

TEST_CASE("collision probability is monotone in cosine") {
  double prev = -1.0;
  for (int i = -100; i <= 100; ++i) {
    const double cp = collision_probability_from_cosine(i / 100.0);
    CHECK(cp >= prev);
    prev = cp;
  }
  for (Embedding e : {Embedding::kOuterProduct, Embedding::kRankOneOuter}) {
    double last = -1.0;
    for (int i = 0; i <= 100; ++i) {
      const double c = collision_law(e, i / 100.0);
      CHECK(c >= last);
      CHECK(collision_law(e, -i / 100.0) == doctest::Approx(c));
      last = c;
    }
  }
}

TEST_CASE("empirical single-hash collision frequency matches the law for dense and sparse families") {
  // 10 pairs at angles across (0, pi), 2e4 single-hash projections each.
  // Sparse sign projections need many active coordinates for the law to hold.
  for (double density : {1.0, 0.25}) {
    SplitMix64 rng(100);
    for (int pair = 0; pair < 10; ++pair) {
      const double angle = std::numbers::pi * (pair + 0.5) / 10.0;
      const std::size_t d = 256;
      const Vector u = random_unit_vector(d, rng);
      Vector w = random_unit_vector(d, rng);
      axpy(-dot(w, u), u, w);
      const double wn = norm2(w);
      for (double& x : w) x /= wn;
      Vector v(d);
      for (std::size_t j = 0; j < d; ++j) v[j] = std::cos(angle) * u[j] + std::sin(angle) * w[j];
      HashFamilyParams p = params(1, 20000, d, density, 1000 + pair);
      p.weights = ProjectionWeights::kGaussian;
      const auto f = HashFamily::build(p);
      int same = 0;
      for (std::uint32_t t = 0; t < p.L; ++t) same += f.code(u, t) == f.code(v, t);
      // 4 sd for dense (exact law); sparse supports only approximate it
      const double tol = density == 1.0 ? 0.015 : 0.03;
      CHECK(std::abs(same / 20000.0 - (1.0 - angle / std::numbers::pi)) < tol);
    }
  }
}

TEST_CASE("tables: one point gives one bucket of size one per table") {
  const auto pts = unit_points(1, 10, 3);
  const auto ts = HashTableSet::build(pts, params(5, 7, 10, 0.5));
  for (std::uint32_t t = 0; t < 7; ++t) {
    REQUIRE(ts.num_buckets(t) == 1);
    CHECK(ts.bucket_at(t, 0).size() == 1);
    CHECK(ts.bucket(t, ts.code(pts[0], t)).size() == 1);
  }
}

TEST_CASE("tables: 1-bit hashing of {+1, -1} partitions by sign") {
  const std::vector<Vector> pts{{1.0}, {-1.0}};
  const auto ts = HashTableSet::build(pts, params(1, 1, 1, 1.0));
  REQUIRE(ts.num_buckets(0) == 2);
  CHECK(ts.bucket_at(0, 0).size() == 1);
  CHECK(ts.bucket_at(0, 1).size() == 1);
  CHECK(ts.bucket_at(0, 0)[0] != ts.bucket_at(0, 1)[0]);
}

TEST_CASE("tables: every index exactly once per table, insertion order kept") {
  const auto pts = unit_points(100, 30, 4);
  for (double density : {1.0, 1.0 / 30}) {
    const auto ts = HashTableSet::build(pts, params(5, 100, 30, density));
    for (std::uint32_t t = 0; t < 100; ++t) {
      std::vector<int> seen(100, 0);
      std::size_t total = 0;
      for (std::size_t b = 0; b < ts.num_buckets(t); ++b) {
        const auto members = ts.bucket_at(t, b);
        for (std::size_t j = 0; j < members.size(); ++j) {
          ++seen[members[j]];
          if (j > 0) CHECK(members[j] > members[j - 1]);
          CHECK(ts.code(pts[members[j]], t).bits == ts.bucket_code(t, b));
        }
        total += members.size();
      }
      CHECK(total == 100);
      for (int s : seen) CHECK(s == 1);
    }
  }
}

TEST_CASE("tables: code lookup and bucket_at agree, absent codes are empty") {
  const auto pts = unit_points(200, 12, 8);
  for (std::uint32_t K : {3u, 12u, 13u, 20u}) {  // direct index for K <= 12, binary search above
    const auto ts = HashTableSet::build(pts, params(K, 5, 12, 1.0, K));
    for (std::uint32_t t = 0; t < 5; ++t) {
      std::set<std::uint64_t> present;
      for (std::size_t b = 0; b < ts.num_buckets(t); ++b) {
        present.insert(ts.bucket_code(t, b));
        const auto a = ts.bucket_at(t, b);
        const auto c = ts.bucket(t, HashCode{ts.bucket_code(t, b), K});
        CHECK(std::vector<std::uint32_t>(a.begin(), a.end()) == std::vector<std::uint32_t>(c.begin(), c.end()));
      }
      const std::uint64_t top = K >= 64 ? ~0ull : (std::uint64_t{1} << K) - 1;
      for (std::uint64_t code : {std::uint64_t{0}, std::uint64_t{1}, top / 2, top})
        if (!present.count(code)) CHECK(ts.bucket(t, HashCode{code, K}).empty());
    }
  }
}

TEST_CASE("tables: empty or ragged input raises") {
  const std::vector<Vector> none;
  CHECK_THROWS_AS(HashTableSet::build(none, params(2, 2, 3, 1.0)), ParameterError);
  const std::vector<Vector> ragged{{1.0, 2.0, 3.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(HashTableSet::build(ragged, params(2, 2, 3, 1.0)), ShapeError);
}

TEST_CASE("snapshot round trip preserves buckets and rejects corruption") {
  const auto pts = unit_points(64, 20, 5);
  HashFamilyParams p = params(4, 6, 20, 0.3, 77);
  const auto ts = HashTableSet::build(pts, p);
  std::stringstream buf;
  ts.save(buf);
  const std::string bytes = buf.str();

  std::stringstream in(bytes);
  const auto back = HashTableSet::load(in);
  CHECK(back.num_points() == 64);
  CHECK(back.params().K == 4);
  CHECK(back.params().seed == 77);
  for (std::uint32_t t = 0; t < 6; ++t) {
    REQUIRE(back.num_buckets(t) == ts.num_buckets(t));
    for (std::size_t b = 0; b < ts.num_buckets(t); ++b) {
      CHECK(back.bucket_code(t, b) == ts.bucket_code(t, b));
      const auto x = ts.bucket_at(t, b), y = back.bucket_at(t, b);
      CHECK(std::vector<std::uint32_t>(x.begin(), x.end()) == std::vector<std::uint32_t>(y.begin(), y.end()));
    }
    for (const auto& v : pts) {
      CHECK(back.code(v, t) == ts.code(v, t));
      CHECK(back.bucket(t, back.code(v, t)).size() == ts.bucket(t, ts.code(v, t)).size());
    }
  }

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  std::stringstream bad(flipped);
  CHECK_THROWS_AS(HashTableSet::load(bad), ParseError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(HashTableSet::load(truncated), ParseError);
  std::stringstream garbage("not a snapshot at all");
  CHECK_THROWS_AS(HashTableSet::load(garbage), ParseError);
}
