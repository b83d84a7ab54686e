#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgd/linalg.hpp"
#include "lgd/models.hpp"
#include "lgd/rng.hpp"

namespace lgd {

struct Dataset {
  std::vector<LabeledPoint> points;
  std::size_t d = 0;
  std::string name;
  std::string provenance;

  std::size_t size() const { return points.size(); }
};

enum class SplitOrder { kFileOrder, kShuffle };

struct PreprocessConfig {
  bool normalize_rows = true;
  bool center_stored = false;
  double split_fraction = 0.8;
  /// Exact train count; overrides split_fraction when set.
  std::optional<std::size_t> train_count;
  SplitOrder order = SplitOrder::kShuffle;
  std::uint64_t split_seed = 0;
};

/// Reads a numeric CSV. `label_column` may be negative to count from the end
/// (-1 is the last column). A first row containing a non-numeric cell is
/// treated as a header. Parse errors name the 1-based row and column.
Dataset load_csv(const std::string& path, int label_column);

/// Scales every feature vector to unit L2 norm; labels untouched. Throws
/// DomainError naming the first zero row.
Dataset normalize(Dataset ds);

struct CenteredVectors {
  std::vector<Vector> vectors;
  Vector mean;
  /// All outputs are zero: every input was the same vector.
  bool degenerate = false;
};

/// Subtracts the component-wise mean. Applies to hash-side stored vectors
/// only; gradients are always evaluated on the uncentered points.
CenteredVectors center_stored(std::vector<Vector> vectors);

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  SplitOrder order = SplitOrder::kShuffle;
  std::uint64_t seed = 0;
};

/// Disjoint, exhaustive split. File order keeps the first rows for training.
Split split(const Dataset& ds, const PreprocessConfig& cfg);

/// {"protocol", "seed", "train": [...], "test": [...]}
std::string split_manifest_json(const Split& s);

// ---- synthetic generators ----------------------------------------------------

struct Synthetic {
  Dataset data;
  Vector theta_star;  // generating parameter
};

/// Least squares with unit-norm Gaussian-direction features and labels
/// y_i = theta*.x_i + r_i, where |r_i| = residual_scale * rank_i^(-exponent)
/// for a random rank permutation and random signs. At theta* the per-point
/// gradient norms are 2 |r_i|, a power law in rank.
Synthetic power_law_least_squares(std::size_t n, std::size_t d, double exponent,
                                  double residual_scale, double theta_norm, std::uint64_t seed);

/// Least squares where, at `theta`, every point has the same gradient norm and
/// the same collision probability with the query: x_i is a unit vector
/// orthogonal to theta and y_i = label_magnitude (so theta.x_i - y_i is the
/// same for all i). Points come in (x, -x) pairs, so the mean gradient is 0.
/// n must be even and d >= 3.
Dataset uniform_gradient_least_squares(std::size_t n, std::span<const double> theta,
                                       double label_magnitude, std::uint64_t seed);

/// Logistic data where, at `theta`, every point has gradient norm 1/2 and
/// collision probability 1/2 with the query: x_i is a unit vector orthogonal
/// to theta, y_i = +1, and points come in (x, -x) pairs. With one hash per
/// table exactly one point of each pair shares the query's bucket, so bucket
/// occupancy is always n/2. n must be even, theta nonzero and d >= 2.
Dataset uniform_gradient_logistic(std::size_t n, std::span<const double> theta, std::uint64_t seed);

/// Logistic data: unit features, labels sign(theta*.x + noise).
Synthetic random_logistic(std::size_t n, std::size_t d, double noise, std::uint64_t seed);

/// Random unit vector from a Gaussian direction.
Vector random_unit_vector(std::size_t d, SplitMix64& rng);

}  // namespace lgd
