#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgd/data.hpp"
#include "lgd/error.hpp"
#include "lgd/lsh.hpp"
#include "lgd/models.hpp"

using namespace lgd;

namespace {

ModelSpec lsq(std::size_t d, bool quad = false) {
  ModelSpec m;
  m.kind = ModelKind::kLeastSquares;
  m.d = d;
  m.use_quadratic_transform = quad;
  return m;
}

ModelSpec logit(std::size_t d) {
  ModelSpec m;
  m.kind = ModelKind::kLogistic;
  m.d = d;
  return m;
}

Vector gaussian(std::size_t d, SplitMix64& rng, double scale = 1.0) {
  Vector v(d);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

std::vector<std::size_t> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  return idx;
}

}  // namespace

TEST_CASE("loss examples") {
  const LabeledPoint p{{1.0, 0.0}, 1.0};
  CHECK(loss(lsq(2), Vector{0.0, 0.0}, p) == 1.0);
  CHECK(loss(logit(2), Vector{0.0, 0.0}, LabeledPoint{{0.6, 0.8}, 1.0}) == doctest::Approx(std::log(2.0)));
  const double tiny = loss_from_margin(logit(1), 30.0, 1.0);
  CHECK(tiny == doctest::Approx(9.357622968840175e-14).epsilon(1e-10));
  // far on the wrong side: linear growth, no overflow
  CHECK(loss_from_margin(logit(1), -800.0, 1.0) == doctest::Approx(800.0));
  CHECK(std::isfinite(loss_from_margin(logit(1), 800.0, -1.0)));
  CHECK_THROWS_AS(loss(lsq(3), Vector{0.0, 0.0}, p), ShapeError);
  CHECK_THROWS_AS(loss(lsq(2), Vector{0.0, 0.0}, LabeledPoint{{1.0}, 0.0}), ShapeError);
}

TEST_CASE("gradient examples") {
  const auto g = gradient(lsq(2), Vector{0.0, 0.0}, LabeledPoint{{1.0, 0.0}, 1.0});
  CHECK(g == Vector{-2.0, 0.0});
  const Vector x{0.6, 0.8};
  const auto h = gradient(logit(2), Vector{0.0, 0.0}, LabeledPoint{x, 1.0});
  CHECK(h[0] == doctest::Approx(-0.3));
  CHECK(h[1] == doctest::Approx(-0.4));
  CHECK(norm2(h) == doctest::Approx(0.5));
}

TEST_CASE("gradients match central finite differences") {
  SplitMix64 rng(1);
  for (const ModelSpec& m : {lsq(6), logit(6)}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Vector x = random_unit_vector(6, rng);
      const double y = m.kind == ModelKind::kLogistic ? (rng.coin() ? 1.0 : -1.0) : rng.normal();
      const LabeledPoint p{x, y};
      const Vector theta = gaussian(6, rng, 0.7);
      const Vector g = gradient(m, theta, p);
      Vector fd(6);
      const double h = 1e-5;
      for (std::size_t j = 0; j < 6; ++j) {
        Vector a = theta, b = theta;
        a[j] += h;
        b[j] -= h;
        fd[j] = (loss(m, a, p) - loss(m, b, p)) / (2 * h);
      }
      Vector diff = fd;
      axpy(-1.0, g, diff);
      CHECK(norm2(diff) / norm2(g) < 1e-6);
    }
  }
}

TEST_CASE("full gradient is the mean of per-point gradients") {
  SplitMix64 rng(2);
  const ModelSpec m = lsq(4);
  const LabeledPoint p{random_unit_vector(4, rng), 0.3};
  const Vector theta = gaussian(4, rng);
  CHECK(full_gradient(m, theta, std::vector<LabeledPoint>{p}) == gradient(m, theta, p));
  const auto twice = full_gradient(m, theta, std::vector<LabeledPoint>{p, p});
  const auto once = gradient(m, theta, p);
  for (std::size_t j = 0; j < 4; ++j) CHECK(twice[j] == doctest::Approx(once[j]).epsilon(1e-15));

  const auto syn = power_law_least_squares(64, 4, 1.5, 5.0, 1.0, 3);
  const auto& pts = syn.data.points;
  Vector sum(4, 0.0);
  for (const auto& q : pts) {
    const double r = dot(theta, q.x) - q.y;
    for (std::size_t j = 0; j < 4; ++j) sum[j] += 2.0 * r * q.x[j];
  }
  const auto fg = full_gradient(m, theta, pts);
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(fg[j] - sum[j] / 64.0) < 1e-12);
  CHECK_THROWS_AS(full_gradient(m, theta, std::vector<LabeledPoint>{}), ParameterError);
  CHECK_THROWS_AS(mean_loss(m, theta, std::vector<LabeledPoint>{}), ParameterError);
}

TEST_CASE("stored and query vectors") {
  CHECK(stored_vector(logit(2), LabeledPoint{{0.6, 0.8}, -1.0}) == Vector{-0.6, -0.8});
  CHECK(stored_vector(lsq(2), LabeledPoint{{1.0, 0.0}, 0.5}) == Vector{1.0, 0.0, 0.5});
  CHECK(query_vector(lsq(2), Vector{0.0, 0.0}) == Vector{0.0, 0.0, -1.0});
  CHECK(query_vector(logit(2), Vector{1.0, -2.0}) == Vector{-1.0, 2.0});

  const ModelSpec big = lsq(90, true);
  CHECK(big.hashed_dim() == 8281);
  CHECK(stored_vector(big, LabeledPoint{Vector(90, 0.1), 0.2}).size() == 8281);

  const auto tq = query_vector(lsq(3, true), Vector{0.0, 0.0, 0.0});
  REQUIRE(tq.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(tq[i] == (i == 15 ? 1.0 : 0.0));

  // pre-transform forms
  CHECK(hash_stored(lsq(2, true), LabeledPoint{{1.0, 0.0}, 0.5}) == Vector{1.0, 0.0, 0.5});
  CHECK(hash_query(lsq(2, true), Vector{0.5, 0.5}) == Vector{0.5, 0.5, -1.0});
  Vector buf(3);
  write_hash_query(lsq(2), Vector{0.5, 0.25}, buf);
  CHECK(buf == Vector{0.5, 0.25, -1.0});
  Vector short_buf(2);
  CHECK_THROWS_AS(write_hash_query(lsq(2), Vector{0.5, 0.25}, short_buf), ShapeError);
  CHECK(logit(5).hashed_dim() == 5);
  CHECK(logit(5).embedding() == Embedding::kIdentity);
}

TEST_CASE("quadratic transform kernel identity") {
  const Vector e1{1.0, 0.0}, e2{0.0, 1.0}, ones{1.0, 1.0};
  CHECK(dot(quadratic_transform(e1), quadratic_transform(e2)) == 0.0);
  CHECK(dot(quadratic_transform(ones), quadratic_transform(ones)) == 4.0);
  CHECK(quadratic_transform(Vector{1.0, 2.0}) == Vector{1.0, 2.0, 2.0, 4.0});
  SplitMix64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const std::size_t m = 1 + i % 8;
    const Vector u = gaussian(m, rng), v = gaussian(m, rng);
    const double uv = dot(u, v);
    CHECK(std::abs(dot(quadratic_transform(u), quadratic_transform(v)) - uv * uv) < 1e-10);
  }
}

TEST_CASE("norm identities and hash shortcuts") {
  SplitMix64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vector x = random_unit_vector(7, rng);
    const Vector theta = gaussian(7, rng);
    const double y = rng.normal();
    const LabeledPoint p{x, y};
    const auto gl = gradient(lsq(7), theta, p);
    const double inner = dot(hash_query(lsq(7), theta), hash_stored(lsq(7), p));
    CHECK(std::abs(norm2(gl) - 2.0 * std::abs(inner)) < 1e-10);
    CHECK(std::abs(hash_inner(lsq(7), dot(theta, x), y) - inner) < 1e-12);
    CHECK(std::abs(hash_query_squared_norm(lsq(7), squared_norm(theta)) -
                   squared_norm(hash_query(lsq(7), theta))) < 1e-10);

    const LabeledPoint q{x, rng.coin() ? 1.0 : -1.0};
    const auto gg = gradient(logit(7), theta, q);
    CHECK(std::abs(norm2(gg) - 1.0 / (std::exp(q.y * dot(theta, x)) + 1.0)) < 1e-10);
    const double li = dot(hash_query(logit(7), theta), hash_stored(logit(7), q));
    CHECK(std::abs(hash_inner(logit(7), dot(theta, x), q.y) - li) < 1e-12);
    CHECK(gradient_coefficient(lsq(7), dot(theta, x), y) == doctest::Approx(2.0 * (dot(theta, x) - y)));
  }
}

TEST_CASE("collision probability ranks points like gradient norm") {
  SplitMix64 rng(6);
  for (const bool logistic : {false, true}) {
    const ModelSpec m = logistic ? logit(5) : lsq(5, true);
    for (int trial = 0; trial < 10; ++trial) {
      const Vector theta = gaussian(5, rng);
      std::vector<LabeledPoint> pts;
      // |y| fixed so every stored vector has the same norm
      for (int i = 0; i < 30; ++i)
        pts.push_back({random_unit_vector(5, rng), rng.coin() ? 0.8 : -0.8});
      std::vector<double> cp, gn;
      const Vector qv = query_vector(m, theta);
      for (const auto& p : pts) {
        cp.push_back(collision_probability(qv, stored_vector(m, p)));
        gn.push_back(norm2(gradient(m, theta, p)));
      }
      CHECK(ranks(cp) == ranks(gn));
    }
  }
}

TEST_CASE("validate_points") {
  const std::vector<LabeledPoint> ok{{{1.0, 0.0}, 1.0}, {{0.0, 1.0}, -1.0}};
  CHECK_NOTHROW(validate_points(logit(2), ok));
  CHECK_THROWS_AS(validate_points(logit(3), ok), ShapeError);
  CHECK_THROWS_AS(validate_points(logit(2), std::vector<LabeledPoint>{{{1.0, 0.0}, 0.5}}), ParameterError);
  CHECK_THROWS_AS(validate_points(lsq(2), std::vector<LabeledPoint>{{{NAN, 0.0}, 0.5}}), ParameterError);
  CHECK_THROWS_AS(validate_points(lsq(2), std::vector<LabeledPoint>{{{1.0, 0.0}, INFINITY}}), ParameterError);
  CHECK(parse_model_kind(to_string(ModelKind::kLogistic)) == ModelKind::kLogistic);
  CHECK_THROWS_AS(parse_model_kind("svm"), ParameterError);
}
