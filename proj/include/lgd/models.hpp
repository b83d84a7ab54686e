#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lgd/linalg.hpp"
#include "lgd/lsh.hpp"

namespace lgd {

struct LabeledPoint {
  Vector x;
  double y = 0.0;
};

enum class ModelKind { kLeastSquares, kLogistic };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Loss family plus its hashing reduction.
///
/// Least squares: f = (theta.x - y)^2 and |grad f| = 2 |[theta,-1].[x,y]| for
/// unit x. The stored vector is [x, y] and the query [theta, -1]; with the
/// quadratic transform both are hashed through T(v) = v (x) v so collision
/// probability tracks the squared (hence absolute) inner product.
///
/// Logistic: f = ln(1 + exp(-y theta.x)) and |grad f| = 1 / (exp(y theta.x) + 1)
/// for unit x, which increases with <-theta, y x>; store y x, query -theta.
struct ModelSpec {
  ModelKind kind = ModelKind::kLeastSquares;
  std::size_t d = 0;
  bool use_quadratic_transform = true;  // least squares only
  /// How T is hashed: kOuterProduct (sparse projections over all m*m
  /// coordinates) or kRankOneOuter.
  Embedding quadratic_embedding = Embedding::kOuterProduct;

  bool quadratic() const { return kind == ModelKind::kLeastSquares && use_quadratic_transform; }

  /// Length of the plain (pre-transform) stored and query vectors.
  std::size_t hash_input_dim() const { return kind == ModelKind::kLeastSquares ? d + 1 : d; }
  /// Dimension of the space the hash family works in.
  std::size_t hashed_dim() const {
    const auto m = hash_input_dim();
    return quadratic() ? m * m : m;
  }
  Embedding embedding() const { return quadratic() ? quadratic_embedding : Embedding::kIdentity; }
};

/// theta . x, with a ShapeError on mismatch.
double margin(const ModelSpec& spec, std::span<const double> theta, const LabeledPoint& p);

double loss(const ModelSpec& spec, std::span<const double> theta, const LabeledPoint& p);
/// Loss from a precomputed theta . x.
double loss_from_margin(const ModelSpec& spec, double theta_dot_x, double y);

/// Every per-point gradient is c * x; this returns c given theta . x.
double gradient_coefficient(const ModelSpec& spec, double theta_dot_x, double y);

Vector gradient(const ModelSpec& spec, std::span<const double> theta, const LabeledPoint& p);

/// Mean of per-point gradients. Throws ParameterError on an empty dataset.
Vector full_gradient(const ModelSpec& spec, std::span<const double> theta,
                     std::span<const LabeledPoint> points);

/// Mean loss (the objective).
double mean_loss(const ModelSpec& spec, std::span<const double> theta,
                 std::span<const LabeledPoint> points);

/// Flattened row-major outer product; T(u).T(v) = (u.v)^2.
Vector quadratic_transform(std::span<const double> v);

/// Hashed-space stored vector: T([x, y]), [x, y] or y x.
Vector stored_vector(const ModelSpec& spec, const LabeledPoint& p);
/// Hashed-space query: T([theta, -1]), [theta, -1] or -theta.
Vector query_vector(const ModelSpec& spec, std::span<const double> theta);

/// Pre-transform forms used by the hash tables (equal to the above when no
/// transform applies).
Vector hash_stored(const ModelSpec& spec, const LabeledPoint& p);
Vector hash_query(const ModelSpec& spec, std::span<const double> theta);
/// Writes hash_query(theta) into `out` without allocating.
void write_hash_query(const ModelSpec& spec, std::span<const double> theta, std::span<double> out);

/// <hash_query(theta), hash_stored(p)> from theta . x alone.
double hash_inner(const ModelSpec& spec, double theta_dot_x, double y);
/// |hash_query(theta)|^2 from |theta|^2 alone.
double hash_query_squared_norm(const ModelSpec& spec, double theta_squared_norm);

/// Throws ShapeError / ParameterError when the points do not fit the model
/// (dimension, finite entries, logistic labels in {-1, +1}).
void validate_points(const ModelSpec& spec, std::span<const LabeledPoint> points);

}  // namespace lgd
