#include "lgd/models.hpp"

#include <cmath>

#include "lgd/error.hpp"

namespace lgd {

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kLeastSquares ? "least_squares" : "logistic";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "least_squares" || name == "lsq") return ModelKind::kLeastSquares;
  if (name == "logistic") return ModelKind::kLogistic;
  throw ParameterError("unknown model kind '" + name + "'");
}

namespace {

void check_theta(const ModelSpec& spec, std::span<const double> theta) {
  if (theta.size() != spec.d)
    throw ShapeError("theta has length " + std::to_string(theta.size()) + ", model expects " +
                     std::to_string(spec.d));
}

}  // namespace

double margin(const ModelSpec& spec, std::span<const double> theta, const LabeledPoint& p) {
  check_theta(spec, theta);
  if (p.x.size() != spec.d)
    throw ShapeError("point has length " + std::to_string(p.x.size()) + ", model expects " +
                     std::to_string(spec.d));
  return dot(theta, p.x);
}

double loss_from_margin(const ModelSpec& spec, double theta_dot_x, double y) {
  if (spec.kind == ModelKind::kLeastSquares) {
    const double r = theta_dot_x - y;
    return r * r;
  }
  // ln(1 + e^{-z}) without overflow on either side of zero.
  const double z = y * theta_dot_x;
  return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double loss(const ModelSpec& spec, std::span<const double> theta, const LabeledPoint& p) {
  return loss_from_margin(spec, margin(spec, theta, p), p.y);
}

double gradient_coefficient(const ModelSpec& spec, double theta_dot_x, double y) {
  if (spec.kind == ModelKind::kLeastSquares) return 2.0 * (theta_dot_x - y);
  // -y / (e^{z} + 1)
  const double z = y * theta_dot_x;
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return -y * e / (1.0 + e);
  }
  return -y / (std::exp(z) + 1.0);
}

Vector gradient(const ModelSpec& spec, std::span<const double> theta, const LabeledPoint& p) {
  const double c = gradient_coefficient(spec, margin(spec, theta, p), p.y);
  return scaled(p.x, c);
}

Vector full_gradient(const ModelSpec& spec, std::span<const double> theta,
                     std::span<const LabeledPoint> points) {
  if (points.empty()) throw ParameterError("full_gradient: empty dataset");
  Vector g(spec.d, 0.0);
  for (const auto& p : points) axpy(gradient_coefficient(spec, margin(spec, theta, p), p.y), p.x, g);
  for (double& v : g) v /= static_cast<double>(points.size());
  return g;
}

double mean_loss(const ModelSpec& spec, std::span<const double> theta,
                 std::span<const LabeledPoint> points) {
  if (points.empty()) throw ParameterError("mean_loss: empty dataset");
  double s = 0.0;
  for (const auto& p : points) s += loss(spec, theta, p);
  return s / static_cast<double>(points.size());
}

Vector quadratic_transform(std::span<const double> v) {
  Vector out(v.size() * v.size());
  for (std::size_t a = 0; a < v.size(); ++a)
    for (std::size_t b = 0; b < v.size(); ++b) out[a * v.size() + b] = v[a] * v[b];
  return out;
}

Vector hash_stored(const ModelSpec& spec, const LabeledPoint& p) {
  if (p.x.size() != spec.d) throw ShapeError("point length does not match model");
  if (spec.kind == ModelKind::kLogistic) return scaled(p.x, p.y);
  Vector v(p.x.begin(), p.x.end());
  v.push_back(p.y);
  return v;
}

void write_hash_query(const ModelSpec& spec, std::span<const double> theta, std::span<double> out) {
  check_theta(spec, theta);
  if (out.size() != spec.hash_input_dim()) throw ShapeError("query buffer has wrong length");
  if (spec.kind == ModelKind::kLogistic) {
    for (std::size_t j = 0; j < spec.d; ++j) out[j] = -theta[j];
    return;
  }
  for (std::size_t j = 0; j < spec.d; ++j) out[j] = theta[j];
  out[spec.d] = -1.0;
}

Vector hash_query(const ModelSpec& spec, std::span<const double> theta) {
  Vector q(spec.hash_input_dim());
  write_hash_query(spec, theta, q);
  return q;
}

Vector stored_vector(const ModelSpec& spec, const LabeledPoint& p) {
  Vector v = hash_stored(spec, p);
  return spec.quadratic() ? quadratic_transform(v) : v;
}

Vector query_vector(const ModelSpec& spec, std::span<const double> theta) {
  Vector q = hash_query(spec, theta);
  return spec.quadratic() ? quadratic_transform(q) : q;
}

double hash_inner(const ModelSpec& spec, double theta_dot_x, double y) {
  return spec.kind == ModelKind::kLeastSquares ? theta_dot_x - y : -y * theta_dot_x;
}

double hash_query_squared_norm(const ModelSpec& spec, double theta_squared_norm) {
  return spec.kind == ModelKind::kLeastSquares ? theta_squared_norm + 1.0 : theta_squared_norm;
}

void validate_points(const ModelSpec& spec, std::span<const LabeledPoint> points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.x.size() != spec.d)
      throw ShapeError("point " + std::to_string(i) + " has " + std::to_string(p.x.size()) +
                       " features, model expects " + std::to_string(spec.d));
    for (double v : p.x)
      if (!std::isfinite(v)) throw ParameterError("point " + std::to_string(i) + " has a non-finite feature");
    if (!std::isfinite(p.y)) throw ParameterError("point " + std::to_string(i) + " has a non-finite label");
    if (spec.kind == ModelKind::kLogistic && p.y != 1.0 && p.y != -1.0)
      throw ParameterError("logistic label of point " + std::to_string(i) + " must be -1 or +1");
  }
}

}  // namespace lgd
