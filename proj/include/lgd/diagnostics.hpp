#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "lgd/linalg.hpp"
#include "lgd/lsh.hpp"
#include "lgd/models.hpp"
#include "lgd/optimizer.hpp"
#include "lgd/sampler.hpp"

namespace lgd {

/// Single-pass mean and covariance trace over a stream of vectors (Welford,
/// with Chan's update for merging partial results).
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t dim = 0);

  void add(std::span<const double> x);
  void merge(const MomentAccumulator& other);

  std::uint64_t count() const { return n_; }
  const Vector& mean() const { return mean_; }
  /// (1/n) sum |x - mean|^2, the population trace.
  double trace_covariance() const;
  /// Mean of |x|^2.
  double second_moment() const { return sq_mean_; }
  /// Standard error of second_moment(); the dominant error term of the trace.
  double second_moment_stderr() const;

 private:
  std::uint64_t n_ = 0;
  Vector mean_;
  Vector m2_;
  double sq_mean_ = 0.0;
  double sq_m2_ = 0.0;
};

/// Threads used by Monte-Carlo fan-out: LGD_THREADS if set and positive,
/// otherwise the hardware concurrency (at least 1).
unsigned diagnostic_threads();

/// Runs fn(chunk) for chunk in [0, chunks) on up to diagnostic_threads()
/// workers. Chunk results must be merged by the caller in chunk order.
void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& fn);

struct EstimatorOptions {
  HashFamilyParams hash;  // dim is filled in from the model
  SamplerConfig sampler;  // seed is derived per chunk
  std::uint32_t rebuild_every = 1;
  bool center_stored = false;
};

struct EstimatorStats {
  std::string sampler;
  Vector mean_estimate;
  double trace_covariance = 0.0;
  double trace_stderr = 0.0;
  /// sqrt(trace / draws): expected L2 error of the mean.
  double mean_stderr = 0.0;
  std::uint64_t draws = 0;
  double fallback_rate = 0.0;
};

/// Monte-Carlo mean and covariance trace of one sampler's gradient estimate
/// at a frozen theta. LGD estimates are grad f_i / (p N) with tables rebuilt
/// from a fresh seed every `rebuild_every` draws. Draws are split into a
/// fixed number of seeded chunks, so results depend only on the inputs and
/// seed, never on the thread count. Throws ParameterError for M < 2.
EstimatorStats estimator_stats(const ModelSpec& model, std::span<const LabeledPoint> points,
                               std::span<const double> theta, SamplerKind sampler, std::uint64_t M,
                               std::uint64_t seed, const EstimatorOptions& options = {});

/// (1/N) sum |g_i|^2 - |(1/N) sum g_i|^2 by enumeration.
double sgd_trace_exact(const ModelSpec& model, std::span<const LabeledPoint> points,
                       std::span<const double> theta);

struct VarianceCheckOptions {
  HashFamilyParams hash;  // K and density are used; one table per trial
  std::uint64_t trials = 10000;
  std::uint64_t seed = 0;
  double equality_tolerance = 0.05;
  /// When set, fail if the relative standard error of the LHS exceeds it.
  std::optional<double> max_relative_stderr;
};

struct VarianceCheckReport {
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  bool holds = false;       // 95% CI lies strictly below rhs
  bool equality = false;    // |lhs/rhs - 1| < equality_tolerance
  bool degenerate = false;  // single point
  std::uint64_t trials = 0;
  std::string verdict;  // "holds", "equality within tolerance", "violated", "inconclusive"
};

/// Estimates (1/N) sum_i |g_i|^2 (sum_j P(x_i, x_j in S_b) / p_i) / p_i with
/// p_i = cp_i^K, where S_b is the query's bucket in a freshly built table.
/// One trial contributes (|S_b| / N) sum_{i in S_b} |g_i|^2 / p_i^2, whose
/// expectation is the LHS. RHS is sum_i |g_i|^2. Requires N <= 256 and at
/// least 2 trials.
VarianceCheckReport variance_inequality_check(const ModelSpec& model,
                                              std::span<const LabeledPoint> points,
                                              std::span<const double> theta,
                                              const VarianceCheckOptions& options);

/// 1 - arccos(cos(a, b)) / pi; 0.5 when either vector is zero.
double angular_similarity(std::span<const double> a, std::span<const double> b);

struct ProbeOptions {
  HashFamilyParams hash;
  SamplerConfig sampler;
  std::uint64_t seed = 0;
};

struct SamplerProbe {
  std::uint64_t count = 0;
  double mean_norm = 0.0;
  double mean_similarity = 0.0;
  Vector running_norm;        // mean over the first k samples, k = 1..count
  Vector running_similarity;  // same, for angular similarity
};

struct ProbeReport {
  SamplerProbe lgd;
  SamplerProbe sgd;
  bool high_variance = false;  // some sampler has a single sample
  bool degenerate = false;     // full gradient is zero
};

/// Raw |grad f_i| of the points each sampler draws at a frozen theta. One
/// table set is built from `options.hash` and used for all LGD draws.
ProbeReport gradient_norm_probe(const ModelSpec& model, std::span<const LabeledPoint> points,
                                std::span<const double> theta, std::uint64_t lgd_samples,
                                std::uint64_t sgd_samples, const ProbeOptions& options);

/// Angular similarity between each estimate (importance weighted for LGD)
/// and the full gradient, M samples per sampler.
ProbeReport cosine_probe(const ModelSpec& model, std::span<const LabeledPoint> points,
                         std::span<const double> theta, std::uint64_t M, const ProbeOptions& options);

/// |g_i| / sum_j |g_j|. Throws DomainError when every gradient is zero.
Vector optimal_weights(const ModelSpec& model, std::span<const LabeledPoint> points,
                       std::span<const double> theta);

/// Share of `builds` single draws (one fresh table set per draw) that landed
/// on each point.
Vector lgd_draw_frequencies(const ModelSpec& model, std::span<const LabeledPoint> points,
                            std::span<const double> theta, std::uint64_t builds,
                            std::uint64_t seed, const EstimatorOptions& options = {});

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Theta after `fraction` of an epoch of plain SGD from zero.
Vector warm_start(const ModelSpec& model, std::span<const LabeledPoint> points, double eta,
                  double fraction, std::uint64_t seed);

nlohmann::json to_json(const EstimatorStats& s);
nlohmann::json to_json(const VarianceCheckReport& r);
nlohmann::json to_json(const ProbeReport& r);

}  // namespace lgd
