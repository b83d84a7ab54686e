#include "lgd/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "lgd/error.hpp"

namespace lgd {

void LearningRateSchedule::validate() const {
  if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw ParameterError("eta0 must be positive");
  if (kind == ScheduleKind::kConstant) return;
  if (!(interval > 0.0)) throw ParameterError("schedule interval must be positive");
  if (kind == ScheduleKind::kStepDecay && !(factor > 0.0 && factor <= 1.0))
    throw ParameterError("step_decay factor must lie in (0, 1]");
  if (kind == ScheduleKind::kExpDecay && !(factor >= 0.0))
    throw ParameterError("exp_decay rate must be non-negative");
}

double LearningRateSchedule::at(std::uint64_t t) const {
  const double x = static_cast<double>(t) / interval;
  switch (kind) {
    case ScheduleKind::kConstant:
      return eta0;
    case ScheduleKind::kStepDecay:
      return eta0 * std::pow(factor, std::floor(x));
    case ScheduleKind::kExpDecay:
      return eta0 * std::exp(-factor * x);
  }
  return eta0;
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kStepDecay: return "step_decay";
    case ScheduleKind::kExpDecay: return "exp_decay";
  }
  return "constant";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "step_decay") return ScheduleKind::kStepDecay;
  if (name == "exp_decay") return ScheduleKind::kExpDecay;
  throw ParameterError("unknown schedule '" + name + "'");
}

std::string to_string(SamplerKind kind) { return kind == SamplerKind::kLsh ? "lgd" : "sgd"; }

SamplerKind parse_sampler_kind(const std::string& name) {
  if (name == "lgd" || name == "lsh") return SamplerKind::kLsh;
  if (name == "sgd" || name == "uniform") return SamplerKind::kUniform;
  throw ParameterError("unknown sampler '" + name + "'");
}

Vector adagrad_scale(AdaGradState& state, std::span<const double> g, double eta) {
  if (g.size() != state.accumulator.size())
    throw ShapeError("adagrad: gradient length " + std::to_string(g.size()) + " vs accumulator " +
                     std::to_string(state.accumulator.size()));
  Vector step(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    state.accumulator[j] += g[j] * g[j];
    // g = 0 on a fresh coordinate would give 0/0 with epsilon 0
    step[j] = state.accumulator[j] > 0.0 ? eta * g[j] / (std::sqrt(state.accumulator[j]) + state.epsilon) : 0.0;
  }
  return step;
}

OptimizerState OptimizerState::zeros(std::size_t d, LearningRateSchedule schedule, bool adagrad,
                                     double epsilon) {
  OptimizerState s;
  s.theta.assign(d, 0.0);
  s.schedule = schedule;
  if (adagrad) s.adagrad = AdaGradState{Vector(d, 0.0), epsilon};
  return s;
}

void apply_update(OptimizerState& state, std::span<const double> g) {
  if (g.size() != state.theta.size()) throw ShapeError("update length does not match theta");
  const double eta = state.schedule.at(state.t);
  if (state.adagrad) {
    const Vector step = adagrad_scale(*state.adagrad, g, eta);
    for (std::size_t j = 0; j < g.size(); ++j) state.theta[j] -= step[j];
  } else {
    axpy(-eta, g, state.theta);
  }
  ++state.t;
}

GradientEstimate lgd_step(OptimizerState& state, const ModelSpec& model,
                          std::span<const LabeledPoint> points, LshSampler& sampler) {
  if (points.size() != sampler.index().size())
    throw ShapeError("dataset size does not match the sampler's index");
  const Vector q = hash_query(model, state.theta);
  GradientEstimate est;
  est.draw = sampler.draw(q);
  est.index = est.draw->index;
  est.weight = 1.0 / (est.draw->probability * static_cast<double>(points.size()));
  est.vector = gradient(model, state.theta, points[est.index]);
  for (double& v : est.vector) v *= est.weight;
  apply_update(state, est.vector);
  return est;
}

GradientEstimate sgd_step(OptimizerState& state, const ModelSpec& model,
                          std::span<const LabeledPoint> points, SplitMix64& rng) {
  if (points.empty()) throw ParameterError("sgd_step: empty dataset");
  GradientEstimate est;
  est.index = static_cast<std::uint32_t>(rng.uniform_index(points.size()));
  est.vector = gradient(model, state.theta, points[est.index]);
  apply_update(state, est.vector);
  return est;
}

void RunOptions::validate() const {
  schedule.validate();
  if (!(epochs >= 0.0)) throw ParameterError("epochs must be non-negative");
  if (!(eval_every > 0.0)) throw ParameterError("eval_every must be positive");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (adagrad && !(adagrad_epsilon > 0.0)) throw ParameterError("adagrad epsilon must be positive");
}

double ConvergenceTrace::mean_step_ns() const {
  if (steps == 0 || records.empty()) return 0.0;
  return static_cast<double>(records.back().wall_ns) / static_cast<double>(steps);
}

std::optional<TraceRecord> ConvergenceTrace::first_below(double threshold) const {
  for (const auto& r : records)
    if (r.train_loss <= threshold) return r;
  return std::nullopt;
}

namespace {

using Clock = std::chrono::steady_clock;

/// Training loop state for one run. Batch-size-1 LGD steps are fused:
/// theta lives inside the hash query buffer (query = sign * theta, plus the
/// trailing -1 for least squares), so the update refreshes the query and
/// |theta|^2 in the same pass and the collision probability comes from the
/// margin already computed for the gradient.
class Trainer {
 public:
  Trainer(const ModelSpec& model, std::span<const LabeledPoint> points, const RunOptions& opt,
          OptimizerState state, const LshIndex* index, bool exact_collision)
      : model_(model),
        points_(points),
        opt_(opt),
        state_(std::move(state)),
        index_(index),
        exact_collision_(exact_collision),
        uniform_rng_(derive_seed(opt.seed, 3)) {
    n_ = static_cast<double>(points.size());
    if (index_) {
      SamplerConfig cfg = opt.sampler_config;
      cfg.seed = derive_seed(opt.seed, 2);
      sampler_.emplace(*index_, cfg);
      query_ = hash_query(model_, state_.theta);
      sign_ = model_.kind == ModelKind::kLogistic ? -1.0 : 1.0;
      K_ = index_->params().K;
      theta_sq_ = squared_norm(state_.theta);
      in_query_ = opt.batch_size == 1;
    }
  }

  void step() {
    if (opt_.batch_size > 1) {
      batch_step();  // apply_update advances t
      return;
    }
    if (sampler_)
      lgd_fused();
    else
      sgd_fused();
    ++state_.t;
  }

  const OptimizerState& state() {
    if (in_query_)
      for (std::size_t j = 0; j < model_.d; ++j) state_.theta[j] = sign_ * query_[j];
    return state_;
  }
  const LshSampler* sampler() const { return sampler_ ? &*sampler_ : nullptr; }

 private:
  void lgd_fused() {
    const std::size_t d = model_.d;
    const Located where = sampler_->locate(query_);
    const std::uint32_t i = where.index;
    const auto& p = points_[i];
    const double* __restrict x = p.x.data();
    const double mw = dot(std::span<const double>(query_.data(), d), p.x);
    const double m = sign_ * mw;
    double weight = 1.0;
    if (!where.fallback) {
      double cp;
      if (exact_collision_) {
        cp = index_->collision(query_, i);
      } else {
        cp = index_->collision_from_inner(hash_inner(model_, m, p.y),
                                          std::sqrt(hash_query_squared_norm(model_, theta_sq_)), i);
      }
      weight = 1.0 / (selection_probability(cp, K_, where.tables_probed, where.bucket_size) * n_);
    }
    const double g = gradient_coefficient(model_, m, p.y) * weight;
    const double eta = state_.schedule.at(state_.t);
    double* __restrict w = query_.data();
    double sq = 0.0;
    if (state_.adagrad) {
      double* __restrict acc = state_.adagrad->accumulator.data();
      const double eps = state_.adagrad->epsilon;
      const double sg = sign_;
#pragma omp simd reduction(+ : sq)
      for (std::size_t j = 0; j < d; ++j) {
        const double gj = g * x[j];
        acc[j] += gj * gj;
        const double step = acc[j] > 0.0 ? sg * (eta * gj / (std::sqrt(acc[j]) + eps)) : 0.0;
        w[j] -= step;
        sq += w[j] * w[j];
      }
    } else {
      const double s = sign_ * eta * g;
#pragma omp simd reduction(+ : sq)
      for (std::size_t j = 0; j < d; ++j) {
        w[j] -= s * x[j];
        sq += w[j] * w[j];
      }
    }
    theta_sq_ = sq;
    if (!std::isfinite(sq))
      throw DivergenceError("parameters became non-finite at step " + std::to_string(state_.t),
                            static_cast<long long>(state_.t));
  }

  void sgd_fused() {
    const auto& p = points_[uniform_rng_.uniform_index(points_.size())];
    const double g = gradient_coefficient(model_, dot(state_.theta, p.x), p.y);
    const double eta = state_.schedule.at(state_.t);
    if (!state_.adagrad) {
      axpy(-eta * g, p.x, state_.theta);
      return;
    }
    double* __restrict theta = state_.theta.data();
    double* __restrict acc = state_.adagrad->accumulator.data();
    const double* __restrict x = p.x.data();
    const double eps = state_.adagrad->epsilon;
#pragma omp simd
    for (std::size_t j = 0; j < model_.d; ++j) {
      const double gj = g * x[j];
      acc[j] += gj * gj;
      theta[j] -= acc[j] > 0.0 ? eta * gj / (std::sqrt(acc[j]) + eps) : 0.0;
    }
  }

  void batch_step() {
    const std::uint32_t b = opt_.batch_size;
    Vector g(model_.d, 0.0);
    if (sampler_) {
      const auto draws = sampler_->draw_batch(query_, b);
      for (const auto& dr : draws) {
        const double w = 1.0 / (dr.probability * n_);
        const auto& p = points_[dr.index];
        axpy(w * gradient_coefficient(model_, dot(state_.theta, p.x), p.y), p.x, g);
      }
    } else {
      for (std::uint32_t k = 0; k < b; ++k) {
        const auto& p = points_[uniform_rng_.uniform_index(points_.size())];
        axpy(gradient_coefficient(model_, dot(state_.theta, p.x), p.y), p.x, g);
      }
    }
    for (double& v : g) v /= static_cast<double>(b);
    apply_update(state_, g);
    if (sampler_) {
      write_hash_query(model_, state_.theta, query_);
      theta_sq_ = squared_norm(state_.theta);
      if (!std::isfinite(theta_sq_))
        throw DivergenceError("parameters became non-finite at step " + std::to_string(state_.t),
                              static_cast<long long>(state_.t));
    }
  }

  const ModelSpec& model_;
  std::span<const LabeledPoint> points_;
  const RunOptions& opt_;
  OptimizerState state_;
  const LshIndex* index_;
  bool exact_collision_;
  std::optional<LshSampler> sampler_;
  SplitMix64 uniform_rng_;
  Vector query_;
  double sign_ = 1.0;
  double theta_sq_ = 0.0;
  double n_ = 1.0;
  std::uint32_t K_ = 0;
  bool in_query_ = false;
};

}  // namespace

ConvergenceTrace run(const ModelSpec& model, const Dataset& train, const Dataset* test,
                     const RunOptions& options) {
  options.validate();
  if (train.points.empty()) throw ParameterError("run: empty training set");
  if (train.d != model.d) throw ShapeError("training set dimension does not match model");
  validate_points(model, train.points);
  if (test && !test->points.empty()) {
    if (test->d != model.d) throw ShapeError("test set dimension does not match model");
    validate_points(model, test->points);
  }

  OptimizerState state = OptimizerState::zeros(model.d, options.schedule, options.adagrad,
                                               options.adagrad_epsilon);
  if (options.theta0) {
    if (options.theta0->size() != model.d) throw ShapeError("theta0 length does not match model");
    state.theta = *options.theta0;
  }

  ConvergenceTrace trace;
  trace.sampler = to_string(options.sampler);

  std::optional<LshIndex> index;
  if (options.sampler == SamplerKind::kLsh) {
    const auto t0 = Clock::now();
    std::vector<Vector> stored;
    stored.reserve(train.size());
    for (const auto& p : train.points) stored.push_back(hash_stored(model, p));
    if (options.center_stored) stored = center_stored(std::move(stored)).vectors;
    HashFamilyParams hp = options.hash;
    hp.dim = model.hashed_dim();
    hp.seed = derive_seed(options.seed, 1);
    index.emplace(std::move(stored), hp, model.embedding());
    trace.preprocess_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
  }

  Trainer trainer(model, train.points, options, std::move(state), index ? &*index : nullptr,
                  options.center_stored);

  const double n = static_cast<double>(train.size());
  const auto total = static_cast<std::uint64_t>(std::llround(options.epochs * n));
  const auto every = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(options.eval_every * n)));

  std::int64_t wall = 0;
  auto checkpoint = [&](std::uint64_t step) {
    TraceRecord r;
    r.step = step;
    r.epoch = static_cast<double>(step) / n;
    r.wall_ns = wall;
    const auto& theta = trainer.state().theta;
    r.train_loss = mean_loss(model, theta, train.points);
    if (!std::isfinite(r.train_loss))
      throw DivergenceError("training loss became non-finite by step " + std::to_string(step),
                            static_cast<long long>(step));
    if (test && !test->points.empty()) r.test_loss = mean_loss(model, theta, test->points);
    if (const auto* s = trainer.sampler()) {
      r.fallbacks = s->stats().fallbacks;
      r.l_p50 = s->stats().l_quantile(0.5);
      r.l_p99 = s->stats().l_quantile(0.99);
    }
    trace.records.push_back(r);
    return r.train_loss;
  };

  double current = checkpoint(0);
  std::uint64_t step = 0;
  while (step < total) {
    if (options.loss_target && current <= *options.loss_target) break;
    const std::uint64_t chunk = std::min(every, total - step);
    const auto t0 = Clock::now();
    for (std::uint64_t k = 0; k < chunk; ++k) trainer.step();
    wall += std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
    step += chunk;
    current = checkpoint(step);
  }
  trace.steps = step;
  trace.final_theta = trainer.state().theta;
  return trace;
}

std::vector<double> default_step_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 8; ++k) grid.push_back(std::pow(10.0, -5.0 + 0.5 * k));
  return grid;
}

SweepResult sweep_step_size(const ModelSpec& model, const Dataset& train, RunOptions options,
                            const std::vector<double>& etas) {
  if (etas.empty()) throw ParameterError("sweep_step_size: empty grid");
  SweepResult out;
  out.etas = etas;
  const Vector theta0 = options.theta0 ? *options.theta0 : Vector(model.d, 0.0);
  const double initial = mean_loss(model, theta0, train.points);
  auto final_loss = [&](SamplerKind kind, double eta) {
    RunOptions o = options;
    o.sampler = kind;
    o.schedule.eta0 = eta;
    o.loss_target.reset();
    try {
      return run(model, train, nullptr, o).records.back().train_loss;
    } catch (const DivergenceError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  for (double eta : etas) {
    out.final_loss_lgd.push_back(final_loss(SamplerKind::kLsh, eta));
    out.final_loss_sgd.push_back(final_loss(SamplerKind::kUniform, eta));
    if (out.final_loss_lgd.back() < initial && out.final_loss_sgd.back() < initial)
      out.chosen = out.chosen ? std::max(*out.chosen, eta) : eta;
  }
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string trace_csv(const ConvergenceTrace& trace) {
  std::ostringstream out;
  out << "epoch,wall_ns,train_loss,test_loss,fallbacks,l_p50,l_p99\n";
  for (const auto& r : trace.records) {
    out << fmt(r.epoch) << ',' << r.wall_ns << ',' << fmt(r.train_loss) << ','
        << (std::isnan(r.test_loss) ? std::string() : fmt(r.test_loss)) << ',' << r.fallbacks << ','
        << r.l_p50 << ',' << r.l_p99 << '\n';
  }
  return out.str();
}

std::string trace_json(const ConvergenceTrace& trace) {
  nlohmann::json records = nlohmann::json::array();
  nlohmann::json walls = nlohmann::json::array();
  for (const auto& r : trace.records) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["step"] = r.step;
    j["train_loss"] = r.train_loss;
    j["test_loss"] = std::isnan(r.test_loss) ? nlohmann::json(nullptr) : nlohmann::json(r.test_loss);
    j["fallbacks"] = r.fallbacks;
    j["l_p50"] = r.l_p50;
    j["l_p99"] = r.l_p99;
    records.push_back(j);
    walls.push_back(r.wall_ns);
  }
  nlohmann::json out;
  out["sampler"] = trace.sampler;
  out["deterministic"] = {{"steps", trace.steps}, {"records", records}, {"final_theta", trace.final_theta}};
  out["timing"] = {{"preprocess_ns", trace.preprocess_ns},
                   {"mean_step_ns", trace.mean_step_ns()},
                   {"wall_ns", walls}};
  return out.dump(2);
}

}  // namespace lgd
