#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgd/data.hpp"
#include "lgd/linalg.hpp"
#include "lgd/lsh.hpp"
#include "lgd/models.hpp"
#include "lgd/rng.hpp"
#include "lgd/sampler.hpp"

namespace lgd {

enum class ScheduleKind { kConstant, kStepDecay, kExpDecay };

/// constant:   eta0
/// step_decay: eta0 * factor^floor(t / interval)
/// exp_decay:  eta0 * exp(-factor * t / interval)
struct LearningRateSchedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double eta0 = 0.01;
  double factor = 0.5;
  double interval = 1000.0;

  void validate() const;
  double at(std::uint64_t t) const;
};

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);

struct AdaGradState {
  Vector accumulator;  // running sum of squared gradient components
  double epsilon = 1e-8;
};

/// accumulator += g*g; returns eta * g / (sqrt(accumulator) + epsilon).
/// Throws ShapeError if g and the accumulator disagree in length.
Vector adagrad_scale(AdaGradState& state, std::span<const double> g, double eta);

enum class SamplerKind { kUniform, kLsh };

std::string to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(const std::string& name);

struct GradientEstimate {
  Vector vector;        // descent direction actually applied (before eta)
  double weight = 1.0;  // 1 / (p N) for LGD, 1 for SGD
  std::uint32_t index = 0;
  std::optional<SampleDraw> draw;  // set for LGD
};

struct OptimizerState {
  Vector theta;
  std::uint64_t t = 0;
  LearningRateSchedule schedule;
  std::optional<AdaGradState> adagrad;

  static OptimizerState zeros(std::size_t d, LearningRateSchedule schedule, bool adagrad,
                              double epsilon = 1e-8);
};

/// One LGD iteration: query with hash_query(theta), draw from the sampler,
/// evaluate the gradient on the original point and step by
/// -eta * grad / (p N). Fallback draws (p = 1/N) become plain SGD steps.
GradientEstimate lgd_step(OptimizerState& state, const ModelSpec& model,
                          std::span<const LabeledPoint> points, LshSampler& sampler);

/// One SGD iteration on a uniformly drawn point.
GradientEstimate sgd_step(OptimizerState& state, const ModelSpec& model,
                          std::span<const LabeledPoint> points, SplitMix64& rng);

/// Applies `g` with the state's learning rate (and AdaGrad when enabled),
/// then increments t.
void apply_update(OptimizerState& state, std::span<const double> g);

struct RunOptions {
  SamplerKind sampler = SamplerKind::kLsh;
  LearningRateSchedule schedule;
  bool adagrad = false;
  double adagrad_epsilon = 1e-8;
  double epochs = 1.0;
  std::optional<double> loss_target;  // stop once train loss <= target
  double eval_every = 0.1;            // epochs between checkpoints
  std::uint32_t batch_size = 1;
  std::uint64_t seed = 0;
  HashFamilyParams hash;  // dim is filled in from the model
  SamplerConfig sampler_config;
  bool center_stored = false;
  std::optional<Vector> theta0;

  void validate() const;
};

struct TraceRecord {
  double epoch = 0.0;
  std::uint64_t step = 0;
  std::int64_t wall_ns = 0;  // cumulative time inside step bodies
  double train_loss = 0.0;
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t fallbacks = 0;
  std::uint32_t l_p50 = 0;
  std::uint32_t l_p99 = 0;
};

struct ConvergenceTrace {
  std::string sampler;
  std::vector<TraceRecord> records;
  std::int64_t preprocess_ns = 0;
  std::uint64_t steps = 0;
  Vector final_theta;

  double mean_step_ns() const;
  /// First checkpoint whose train loss is <= threshold.
  std::optional<TraceRecord> first_below(double threshold) const;
};

/// Trains from theta0 (zeros by default) and records a checkpoint at step 0,
/// every `eval_every` epochs and at the end. Deterministic for a fixed seed
/// apart from wall_ns. Throws DivergenceError on a non-finite loss.
ConvergenceTrace run(const ModelSpec& model, const Dataset& train, const Dataset* test,
                     const RunOptions& options);

struct SweepResult {
  std::vector<double> etas;
  std::vector<double> final_loss_lgd;
  std::vector<double> final_loss_sgd;
  /// Largest eta at which both samplers finished below the initial loss;
  /// nullopt if none did.
  std::optional<double> chosen;
};

/// Step-size sweep over `etas` with otherwise identical options. Divergent
/// runs are recorded as +inf.
SweepResult sweep_step_size(const ModelSpec& model, const Dataset& train, RunOptions options,
                            const std::vector<double>& etas);

/// Half-decade grid 1e-5, 3.16e-5, ..., 1e-1.
std::vector<double> default_step_grid();

/// CSV (epoch,wall_ns,train_loss,test_loss,fallbacks,l_p50,l_p99).
std::string trace_csv(const ConvergenceTrace& trace);
/// JSON with a "deterministic" section (no timings) and a "timing" section.
std::string trace_json(const ConvergenceTrace& trace);

}  // namespace lgd
