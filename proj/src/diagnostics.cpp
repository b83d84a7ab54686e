#include "lgd/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <thread>

#include "lgd/error.hpp"
#include "lgd/rng.hpp"

namespace lgd {

// ---- moments ----------------------------------------------------------------

MomentAccumulator::MomentAccumulator(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

void MomentAccumulator::add(std::span<const double> x) {
  if (x.size() != mean_.size()) throw ShapeError("MomentAccumulator: length mismatch");
  ++n_;
  const double inv = 1.0 / static_cast<double>(n_);
  double sq = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double delta = x[j] - mean_[j];
    mean_[j] += delta * inv;
    m2_[j] += delta * (x[j] - mean_[j]);
    sq += x[j] * x[j];
  }
  const double ds = sq - sq_mean_;
  sq_mean_ += ds * inv;
  sq_m2_ += ds * (sq - sq_mean_);
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.n_ == 0) return;
  if (other.mean_.size() != mean_.size()) throw ShapeError("MomentAccumulator: length mismatch");
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  for (std::size_t j = 0; j < mean_.size(); ++j) {
    const double delta = other.mean_[j] - mean_[j];
    mean_[j] += delta * nb / n;
    m2_[j] += other.m2_[j] + delta * delta * na * nb / n;
  }
  const double ds = other.sq_mean_ - sq_mean_;
  sq_mean_ += ds * nb / n;
  sq_m2_ += other.sq_m2_ + ds * ds * na * nb / n;
  n_ += other.n_;
}

double MomentAccumulator::trace_covariance() const {
  if (n_ == 0) return 0.0;
  double s = 0.0;
  for (double v : m2_) s += v;
  return std::max(0.0, s / static_cast<double>(n_));
}

double MomentAccumulator::second_moment_stderr() const {
  if (n_ < 2) return 0.0;
  const double n = static_cast<double>(n_);
  return std::sqrt(sq_m2_ / (n - 1.0) / n);
}

// ---- threading --------------------------------------------------------------

unsigned diagnostic_threads() {
  if (const char* env = std::getenv("LGD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(diagnostic_threads(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks && !failed; c = next++) {
        try {
          fn(c);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

constexpr std::size_t kChunks = 16;

std::size_t chunk_count(std::uint64_t work) { return static_cast<std::size_t>(std::min<std::uint64_t>(work, kChunks)); }

std::uint64_t chunk_begin(std::uint64_t work, std::size_t chunks, std::size_t c) {
  return static_cast<std::uint64_t>((static_cast<__uint128_t>(work) * c) / chunks);
}

std::vector<Vector> stored_vectors(const ModelSpec& model, std::span<const LabeledPoint> points,
                                   bool center) {
  std::vector<Vector> stored;
  stored.reserve(points.size());
  for (const auto& p : points) stored.push_back(hash_stored(model, p));
  if (center) stored = center_stored(std::move(stored)).vectors;
  return stored;
}

HashFamilyParams model_params(const ModelSpec& model, HashFamilyParams hp, std::uint64_t seed) {
  hp.dim = model.hashed_dim();
  hp.seed = seed;
  return hp;
}

void check_inputs(const ModelSpec& model, std::span<const LabeledPoint> points,
                  std::span<const double> theta) {
  if (points.empty()) throw ParameterError("empty dataset");
  if (theta.size() != model.d) throw ShapeError("theta length does not match model");
  validate_points(model, points);
}

}  // namespace

// ---- estimator statistics -----------------------------------------------------

EstimatorStats estimator_stats(const ModelSpec& model, std::span<const LabeledPoint> points,
                               std::span<const double> theta, SamplerKind sampler, std::uint64_t M,
                               std::uint64_t seed, const EstimatorOptions& options) {
  if (M < 2) throw ParameterError("estimator_stats needs at least 2 draws");
  if (options.rebuild_every < 1) throw ParameterError("rebuild_every must be >= 1");
  check_inputs(model, points, theta);

  const std::size_t chunks = chunk_count(M);
  std::vector<MomentAccumulator> acc(chunks, MomentAccumulator(model.d));
  std::vector<std::uint64_t> fallbacks(chunks, 0);
  const double n = static_cast<double>(points.size());
  const std::vector<Vector> stored =
      sampler == SamplerKind::kLsh ? stored_vectors(model, points, options.center_stored) : std::vector<Vector>{};
  const Vector query = hash_query(model, theta);

  parallel_chunks(chunks, [&](std::size_t c) {
    const std::uint64_t begin = chunk_begin(M, chunks, c);
    const std::uint64_t count = chunk_begin(M, chunks, c + 1) - begin;
    const std::uint64_t chunk_seed = derive_seed(seed, c);
    if (sampler == SamplerKind::kUniform) {
      SplitMix64 rng(derive_seed(chunk_seed, 0));
      for (std::uint64_t k = 0; k < count; ++k)
        acc[c].add(gradient(model, theta, points[rng.uniform_index(points.size())]));
      return;
    }
    LshIndex index(stored, model_params(model, options.hash, derive_seed(chunk_seed, 1)), model.embedding());
    SamplerConfig cfg = options.sampler;
    cfg.seed = derive_seed(chunk_seed, 0);
    LshSampler s(index, cfg);
    for (std::uint64_t k = 0; k < count; ++k) {
      if (k > 0 && k % options.rebuild_every == 0)
        index.reseed(derive_seed(chunk_seed, 1 + k / options.rebuild_every));
      const SampleDraw d = s.draw(query);
      Vector g = gradient(model, theta, points[d.index]);
      const double w = 1.0 / (d.probability * n);
      for (double& v : g) v *= w;
      acc[c].add(g);
    }
    fallbacks[c] = s.stats().fallbacks;
  });

  MomentAccumulator total(model.d);
  std::uint64_t fb = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    total.merge(acc[c]);
    fb += fallbacks[c];
  }
  EstimatorStats out;
  out.sampler = to_string(sampler);
  out.mean_estimate = total.mean();
  out.trace_covariance = total.trace_covariance();
  out.trace_stderr = total.second_moment_stderr();
  out.draws = total.count();
  out.mean_stderr = std::sqrt(out.trace_covariance / static_cast<double>(out.draws));
  out.fallback_rate = static_cast<double>(fb) / static_cast<double>(out.draws);
  return out;
}

double sgd_trace_exact(const ModelSpec& model, std::span<const LabeledPoint> points,
                       std::span<const double> theta) {
  check_inputs(model, points, theta);
  Vector sum(model.d, 0.0);
  double sq = 0.0;
  for (const auto& p : points) {
    const Vector g = gradient(model, theta, p);
    sq += squared_norm(g);
    axpy(1.0, g, sum);
  }
  const double n = static_cast<double>(points.size());
  return sq / n - squared_norm(sum) / (n * n);
}

// ---- variance inequality ------------------------------------------------------

VarianceCheckReport variance_inequality_check(const ModelSpec& model, std::span<const LabeledPoint> points,
                          std::span<const double> theta, const VarianceCheckOptions& options) {
  check_inputs(model, points, theta);
  const std::size_t N = points.size();
  if (N > 256) throw ParameterError("variance_inequality_check is limited to N <= 256, got " + std::to_string(N));
  if (options.trials < 2) throw ParameterError("variance_inequality_check needs at least 2 trials");

  const std::vector<Vector> stored = stored_vectors(model, points, false);
  const Vector query = hash_query(model, theta);
  const double qnorm = norm2(query);
  if (qnorm == 0.0) throw DomainError("variance_inequality_check: query vector is zero");
  const std::uint32_t K = options.hash.K;

  Vector gsq(N), inv_p2(N);
  double rhs = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    gsq[i] = squared_norm(gradient(model, theta, points[i]));
    rhs += gsq[i];
    const double sn = norm2(stored[i]);
    const double c = sn == 0.0 ? 0.0 : dot(query, stored[i]) / (qnorm * sn);
    const double p = std::pow(collision_law(model.embedding(), c), static_cast<double>(K));
    inv_p2[i] = p > 0.0 ? 1.0 / (p * p) : 0.0;
  }

  const std::size_t chunks = chunk_count(options.trials);
  std::vector<MomentAccumulator> acc(chunks, MomentAccumulator(1));
  parallel_chunks(chunks, [&](std::size_t c) {
    const std::uint64_t begin = chunk_begin(options.trials, chunks, c);
    const std::uint64_t end = chunk_begin(options.trials, chunks, c + 1);
    for (std::uint64_t t = begin; t < end; ++t) {
      HashFamilyParams hp = model_params(model, options.hash, derive_seed(options.seed, t));
      hp.L = 1;
      const HashFamily family = HashFamily::build(hp, model.embedding());
      const HashCode qc = family.code(query, 0);
      double size = 0.0;
      double s = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        if (family.code(stored[i], 0) == qc) {
          size += 1.0;
          s += gsq[i] * inv_p2[i];
        }
      }
      const double z = size * s / static_cast<double>(N);
      acc[c].add(std::span<const double>(&z, 1));
    }
  });
  MomentAccumulator total(1);
  for (const auto& a : acc) total.merge(a);

  VarianceCheckReport r;
  r.trials = total.count();
  r.lhs = total.mean()[0];
  r.lhs_stderr = std::sqrt(total.trace_covariance() * static_cast<double>(r.trials) /
                           static_cast<double>(r.trials - 1) / static_cast<double>(r.trials));
  r.ci_low = r.lhs - 1.96 * r.lhs_stderr;
  r.ci_high = r.lhs + 1.96 * r.lhs_stderr;
  r.rhs = rhs;
  r.degenerate = N == 1 || rhs == 0.0;
  r.ratio = rhs > 0.0 ? r.lhs / rhs : 1.0;
  r.holds = !r.degenerate && r.ci_high < rhs;
  r.equality = std::abs(r.ratio - 1.0) < options.equality_tolerance;
  if (options.max_relative_stderr && r.lhs > 0.0 && r.lhs_stderr / r.lhs > *options.max_relative_stderr)
    throw ParameterError("insufficient trials: relative standard error " +
                         std::to_string(r.lhs_stderr / r.lhs) + " exceeds requested " +
                         std::to_string(*options.max_relative_stderr));
  if (r.degenerate)
    r.verdict = "degenerate";
  else if (r.equality)
    r.verdict = "equality within tolerance";
  else if (r.holds)
    r.verdict = "holds";
  else if (r.ci_low > rhs)
    r.verdict = "violated";
  else
    r.verdict = "inconclusive";
  return r;
}

// ---- probes -----------------------------------------------------------------

double angular_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("angular_similarity: length mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.5;
  const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  return 1.0 - std::acos(c) / std::numbers::pi;
}

namespace {

void finish(SamplerProbe& p, const Vector& norms, const Vector& sims) {
  p.count = norms.size();
  p.running_norm.resize(norms.size());
  p.running_similarity.resize(sims.size());
  double sn = 0.0, ss = 0.0;
  for (std::size_t k = 0; k < norms.size(); ++k) {
    sn += norms[k];
    ss += sims[k];
    p.running_norm[k] = sn / static_cast<double>(k + 1);
    p.running_similarity[k] = ss / static_cast<double>(k + 1);
  }
  p.mean_norm = norms.empty() ? 0.0 : p.running_norm.back();
  p.mean_similarity = sims.empty() ? 0.0 : p.running_similarity.back();
}

ProbeReport probe(const ModelSpec& model, std::span<const LabeledPoint> points,
                  std::span<const double> theta, std::uint64_t lgd_samples, std::uint64_t sgd_samples,
                  const ProbeOptions& options) {
  check_inputs(model, points, theta);
  ProbeReport r;
  const Vector full = full_gradient(model, theta, points);
  // cancellation leaves rounding residue, so compare with the per-point scale
  double scale = 0.0;
  for (const auto& pt : points) scale += norm2(gradient(model, theta, pt));
  scale /= static_cast<double>(points.size());
  r.degenerate = norm2(full) <= 1e-12 * scale;

  // Similarity is scale invariant and the importance weight is positive, so
  // the raw gradient gives the same angle as the weighted estimate.
  Vector norms, sims;
  if (lgd_samples > 0) {
    LshIndex index(stored_vectors(model, points, false),
                   model_params(model, options.hash, derive_seed(options.seed, 1)), model.embedding());
    SamplerConfig cfg = options.sampler;
    cfg.seed = derive_seed(options.seed, 2);
    LshSampler s(index, cfg);
    const Vector q = hash_query(model, theta);
    for (std::uint64_t k = 0; k < lgd_samples; ++k) {
      const Vector g = gradient(model, theta, points[s.draw(q).index]);
      norms.push_back(norm2(g));
      sims.push_back(angular_similarity(g, full));
    }
  }
  finish(r.lgd, norms, sims);
  norms.clear();
  sims.clear();
  SplitMix64 rng(derive_seed(options.seed, 3));
  for (std::uint64_t k = 0; k < sgd_samples; ++k) {
    const Vector g = gradient(model, theta, points[rng.uniform_index(points.size())]);
    norms.push_back(norm2(g));
    sims.push_back(angular_similarity(g, full));
  }
  finish(r.sgd, norms, sims);
  r.high_variance = r.lgd.count == 1 || r.sgd.count == 1;
  return r;
}

}  // namespace

ProbeReport gradient_norm_probe(const ModelSpec& model, std::span<const LabeledPoint> points,
                                std::span<const double> theta, std::uint64_t lgd_samples,
                                std::uint64_t sgd_samples, const ProbeOptions& options) {
  return probe(model, points, theta, lgd_samples, sgd_samples, options);
}

ProbeReport cosine_probe(const ModelSpec& model, std::span<const LabeledPoint> points,
                         std::span<const double> theta, std::uint64_t M, const ProbeOptions& options) {
  return probe(model, points, theta, M, M, options);
}

Vector optimal_weights(const ModelSpec& model, std::span<const LabeledPoint> points,
                       std::span<const double> theta) {
  check_inputs(model, points, theta);
  Vector w(points.size());
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    w[i] = norm2(gradient(model, theta, points[i]));
    total += w[i];
  }
  if (total == 0.0) throw DomainError("optimal_weights: every gradient is zero");
  for (double& v : w) v /= total;
  return w;
}

Vector lgd_draw_frequencies(const ModelSpec& model, std::span<const LabeledPoint> points,
                            std::span<const double> theta, std::uint64_t builds, std::uint64_t seed,
                            const EstimatorOptions& options) {
  check_inputs(model, points, theta);
  if (builds == 0) throw ParameterError("lgd_draw_frequencies needs at least one build");
  const std::vector<Vector> stored = stored_vectors(model, points, options.center_stored);
  const Vector query = hash_query(model, theta);
  const std::size_t chunks = chunk_count(builds);
  std::vector<std::vector<std::uint64_t>> counts(chunks, std::vector<std::uint64_t>(points.size(), 0));
  parallel_chunks(chunks, [&](std::size_t c) {
    const std::uint64_t count = chunk_begin(builds, chunks, c + 1) - chunk_begin(builds, chunks, c);
    const std::uint64_t chunk_seed = derive_seed(seed, c);
    LshIndex index(stored, model_params(model, options.hash, derive_seed(chunk_seed, 1)), model.embedding());
    SamplerConfig cfg = options.sampler;
    cfg.seed = derive_seed(chunk_seed, 0);
    LshSampler s(index, cfg);
    for (std::uint64_t k = 0; k < count; ++k) {
      if (k > 0) index.reseed(derive_seed(chunk_seed, 1 + k));
      ++counts[c][s.draw(query).index];
    }
  });
  Vector freq(points.size(), 0.0);
  for (const auto& cc : counts)
    for (std::size_t i = 0; i < cc.size(); ++i) freq[i] += static_cast<double>(cc[i]);
  for (double& f : freq) f /= static_cast<double>(builds);
  return freq;
}

namespace {

Vector average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vector rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  if (a.size() < 2) throw ParameterError("spearman: need at least two values");
  const Vector ra = average_ranks(a);
  const Vector rb = average_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) throw DomainError("spearman: constant input");
  return sab / std::sqrt(saa * sbb);
}

Vector warm_start(const ModelSpec& model, std::span<const LabeledPoint> points, double eta,
                  double fraction, std::uint64_t seed) {
  if (points.empty()) throw ParameterError("warm_start: empty dataset");
  if (!(fraction >= 0.0)) throw ParameterError("warm_start: fraction must be non-negative");
  LearningRateSchedule schedule;
  schedule.eta0 = eta;
  schedule.validate();
  OptimizerState state = OptimizerState::zeros(model.d, schedule, false);
  SplitMix64 rng(derive_seed(seed, 3));
  const auto steps = static_cast<std::uint64_t>(std::llround(fraction * static_cast<double>(points.size())));
  for (std::uint64_t k = 0; k < steps; ++k) sgd_step(state, model, points, rng);
  return state.theta;
}

// ---- JSON -------------------------------------------------------------------

nlohmann::json to_json(const EstimatorStats& s) {
  return {{"sampler", s.sampler},
          {"mean_estimate", s.mean_estimate},
          {"trace_covariance", s.trace_covariance},
          {"trace_stderr", s.trace_stderr},
          {"mean_stderr", s.mean_stderr},
          {"draws", s.draws},
          {"fallback_rate", s.fallback_rate}};
}

nlohmann::json to_json(const VarianceCheckReport& r) {
  return {{"lhs", r.lhs},          {"lhs_stderr", r.lhs_stderr}, {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},  {"rhs", r.rhs},               {"ratio", r.ratio},
          {"holds", r.holds},      {"equality", r.equality},     {"degenerate", r.degenerate},
          {"trials", r.trials},    {"verdict", r.verdict}};
}

namespace {

nlohmann::json probe_json(const SamplerProbe& p) {
  return {{"count", p.count},
          {"mean_sampled_grad_norm", p.mean_norm},
          {"mean_angular_similarity", p.mean_similarity},
          {"running_norm", p.running_norm},
          {"running_similarity", p.running_similarity}};
}

}  // namespace

nlohmann::json to_json(const ProbeReport& r) {
  return {{"lgd", probe_json(r.lgd)},
          {"sgd", probe_json(r.sgd)},
          {"high_variance", r.high_variance},
          {"degenerate", r.degenerate}};
}

}  // namespace lgd
