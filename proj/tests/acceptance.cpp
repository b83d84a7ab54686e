// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgd/data.hpp"
#include "lgd/diagnostics.hpp"
#include "lgd/lsh.hpp"
#include "lgd/models.hpp"
#include "lgd/optimizer.hpp"

using namespace lgd;

namespace {

using Clock = std::chrono::steady_clock;

HashFamilyParams dense_gaussian(std::uint32_t K, std::uint32_t L) {
  HashFamilyParams p;
  p.K = K;
  p.L = L;
  p.density = 1.0;
  p.weights = ProjectionWeights::kGaussian;
  return p;
}

ModelSpec least_squares(std::size_t d, bool quadratic = true) {
  ModelSpec m;
  m.d = d;
  m.use_quadratic_transform = quadratic;
  m.quadratic_embedding = Embedding::kRankOneOuter;
  return m;
}

ModelSpec logistic(std::size_t d) {
  ModelSpec m;
  m.kind = ModelKind::kLogistic;
  m.d = d;
  return m;
}

double rel_error(const Vector& estimate, const Vector& truth) {
  Vector d = estimate;
  axpy(-1.0, truth, d);
  return norm2(d) / norm2(truth);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

struct Outcome {
  bool pass;
  std::string detail;
};

Outcome check_collision_law() {
  const std::size_t d = 64;
  const std::uint32_t projections = 100000;
  SplitMix64 rng(101);
  double worst = 0.0;
  for (int pair = 0; pair < 10; ++pair) {
    const double angle = std::numbers::pi * (pair + 0.5) / 10.0;
    const Vector u = random_unit_vector(d, rng);
    Vector w = random_unit_vector(d, rng);
    axpy(-dot(w, u), u, w);
    w = scaled(w, 1.0 / norm2(w));
    Vector v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = std::cos(angle) * u[j] + std::sin(angle) * w[j];
    HashFamilyParams p = dense_gaussian(1, projections);
    p.dim = d;
    p.seed = derive_seed(102, pair);
    const auto family = HashFamily::build(p);
    std::uint32_t same = 0;
    for (std::uint32_t t = 0; t < projections; ++t) same += family.code(u, t) == family.code(v, t);
    worst = std::max(worst, std::abs(same / double(projections) - (1.0 - angle / std::numbers::pi)));
  }
  return {worst <= 0.01, fmt("max |freq - (1 - angle/pi)| = %.4f over 10 pairs", worst)};
}

Outcome check_unbiasedness() {
  EstimatorOptions eo;
  eo.hash = dense_gaussian(3, 5);

  const ModelSpec lsq = least_squares(8);
  const auto syn = power_law_least_squares(64, 8, 1.5, 5.0, 1.0, 201);
  const Vector theta = warm_start(lsq, syn.data.points, 0.01, 0.25, 202);
  const auto a = estimator_stats(lsq, syn.data.points, theta, SamplerKind::kLsh, 200000, 203, eo);
  const double ea = rel_error(a.mean_estimate, full_gradient(lsq, theta, syn.data.points));

  const ModelSpec lg = logistic(8);
  const auto lsyn = random_logistic(64, 8, 0.1, 204);
  SplitMix64 rng(205);
  const Vector ltheta = scaled(random_unit_vector(8, rng), 0.5);
  eo.center_stored = true;
  const auto b = estimator_stats(lg, lsyn.data.points, ltheta, SamplerKind::kLsh, 200000, 206, eo);
  const double eb = rel_error(b.mean_estimate, full_gradient(lg, ltheta, lsyn.data.points));
  return {ea < 0.02 && eb < 0.02,
          fmt("relative L2 error least squares %.4f, logistic %.4f (2e5 draws each)", ea, eb)};
}

Outcome check_sgd_trace() {
  const ModelSpec m = least_squares(3, false);
  const auto syn = power_law_least_squares(4, 3, 1.5, 5.0, 1.0, 301);
  const Vector theta{0.2, -0.1, 0.3};
  const double exact = sgd_trace_exact(m, syn.data.points, theta);
  const auto st = estimator_stats(m, syn.data.points, theta, SamplerKind::kUniform, 100000, 302);
  const double rel = std::abs(st.trace_covariance / exact - 1.0);
  return {rel < 0.03, fmt("Monte-Carlo %.5f vs exact %.5f (rel %.4f)", st.trace_covariance, exact, rel)};
}

Outcome check_degenerate_equality() {
  SplitMix64 rng(401);
  const Vector theta = random_unit_vector(6, rng);
  const auto ds = uniform_gradient_logistic(32, theta, 402);
  EstimatorOptions eo;
  eo.hash = dense_gaussian(1, 1);
  const auto l = estimator_stats(logistic(6), ds.points, theta, SamplerKind::kLsh, 100000, 403, eo);
  const auto s = estimator_stats(logistic(6), ds.points, theta, SamplerKind::kUniform, 100000, 404, eo);
  const double ratio = l.trace_covariance / s.trace_covariance;
  return {std::abs(ratio - 1.0) < 0.05, fmt("Tr_LGD / Tr_SGD = %.4f", ratio)};
}

Outcome check_variance_reduction() {
  const ModelSpec m = least_squares(8);
  const auto syn = power_law_least_squares(64, 8, 1.5, 5.0, 1.0, 501);
  const Vector theta = warm_start(m, syn.data.points, 0.01, 0.25, 502);
  VarianceCheckOptions vo;
  vo.hash = dense_gaussian(3, 1);
  vo.trials = 20000;
  vo.seed = 503;
  const auto r = variance_inequality_check(m, syn.data.points, theta, vo);
  EstimatorOptions eo;
  eo.hash = dense_gaussian(3, 5);
  const auto l = estimator_stats(m, syn.data.points, theta, SamplerKind::kLsh, 100000, 504, eo);
  const double sgd = sgd_trace_exact(m, syn.data.points, theta);
  return {r.holds && l.trace_covariance < sgd,
          fmt("inequality LHS %.3f, 95%% CI upper %.3f < RHS %.3f; Tr_LGD %.3f", r.lhs, r.ci_high, r.rhs,
              l.trace_covariance) +
              fmt(" vs Tr_SGD %.3f", sgd)};
}

Outcome check_probes() {
  int norm_wins = 0, sim_wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelSpec m = least_squares(8);
    const auto syn = power_law_least_squares(256, 8, 1.5, 5.0, 1.0, derive_seed(601, seed));
    const Vector theta = warm_start(m, syn.data.points, 0.01, 0.25, derive_seed(602, seed));
    ProbeOptions po;
    po.hash = dense_gaussian(3, 5);
    po.seed = derive_seed(603, seed);
    const auto n = gradient_norm_probe(m, syn.data.points, theta, 1000, 1000, po);
    const auto c = cosine_probe(m, syn.data.points, theta, 1000, po);
    norm_wins += n.lgd.mean_norm > n.sgd.mean_norm;
    sim_wins += c.lgd.mean_similarity > c.sgd.mean_similarity;
  }
  return {norm_wins >= 4 && sim_wins >= 4,
          fmt("LGD larger sampled norm in %.0f/5 seeds, higher similarity in %.0f/5 (1000 samples each)",
              norm_wins, sim_wins)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome check_sampling_cost() {
  const std::size_t d = 512;
  const auto syn = power_law_least_squares(1000, d, 1.5, 5.0, 1.0, 701);
  const ModelSpec m = least_squares(d, false);
  RunOptions o;
  o.epochs = 20.0;
  o.eval_every = 20.0;
  o.seed = 702;
  o.schedule.eta0 = 0.01;
  o.hash.K = 5;
  o.hash.L = 100;
  o.hash.density = 1.0 / 30.0;
  o.hash.weights = ProjectionWeights::kSign;
  std::vector<double> lgd_ns, sgd_ns;
  std::uint32_t p50 = 0, p99 = 0;
  for (int rep = 0; rep < 5; ++rep) {
    o.sampler = SamplerKind::kLsh;
    const auto l = run(m, syn.data, nullptr, o);
    lgd_ns.push_back(l.mean_step_ns());
    p50 = l.records.back().l_p50;
    p99 = l.records.back().l_p99;
    o.sampler = SamplerKind::kUniform;
    sgd_ns.push_back(run(m, syn.data, nullptr, o).mean_step_ns());
  }
  const double ratio = median(lgd_ns) / median(sgd_ns);
  return {p50 == 1 && p99 <= 3 && ratio <= 2.0,
          fmt("median l %.0f, p99 l %.0f, step %.0f ns vs %.0f ns", p50, p99, median(lgd_ns), median(sgd_ns)) +
              fmt(" (ratio %.2f)", ratio)};
}

struct RaceResult {
  int wins = 0;
  std::string detail;
};

RaceResult race(bool adagrad) {
  const std::size_t n = 10000, d = 128;
  const ModelSpec m = least_squares(d);
  RunOptions o;
  o.epochs = 3.0;
  o.eval_every = 0.05;
  o.adagrad = adagrad;
  o.seed = 801;
  const auto tune = power_law_least_squares(n, d, 1.5, 5.0, 1.0, 800);
  const auto sw = sweep_step_size(m, tune.data, o, default_step_grid());
  RaceResult out;
  if (!sw.chosen) {
    out.detail = "sweep found no converging step size";
    return out;
  }
  o.schedule.eta0 = *sw.chosen;
  out.detail = fmt("eta0 %.3g:", *sw.chosen);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto syn = power_law_least_squares(n, d, 1.5, 5.0, 1.0, derive_seed(802, seed));
    o.seed = derive_seed(803, seed);
    o.sampler = SamplerKind::kUniform;
    const auto sgd = run(m, syn.data, nullptr, o);
    o.sampler = SamplerKind::kLsh;
    const auto lgd = run(m, syn.data, nullptr, o);
    const double threshold = sgd.records.back().train_loss;
    const auto s_hit = sgd.first_below(threshold);
    const auto l_hit = lgd.first_below(threshold);
    const bool win = l_hit && l_hit->epoch < s_hit->epoch && l_hit->wall_ns < s_hit->wall_ns;
    out.wins += win;
    out.detail += l_hit ? fmt(" [lgd %.2f ep %.1f ms, sgd %.2f ep", l_hit->epoch, l_hit->wall_ns / 1e6, s_hit->epoch) +
                              fmt(" %.1f ms]", s_hit->wall_ns / 1e6)
                        : fmt(" [lgd never reached %.4f, sgd %.2f ep]", threshold, s_hit->epoch);
  }
  return out;
}

Outcome check_convergence_race() {
  const auto plain = race(false);
  const auto ada = race(true);
  return {plain.wins >= 4 && ada.wins >= 4,
          fmt("constant step %.0f/5 wins ", plain.wins) + plain.detail + fmt("; AdaGrad %.0f/5 wins ", ada.wins) +
              ada.detail};
}

Outcome check_determinism() {
  const auto syn = power_law_least_squares(500, 16, 1.5, 5.0, 1.0, 901);
  const auto test = power_law_least_squares(100, 16, 1.5, 5.0, 1.0, 902);
  RunOptions o;
  o.epochs = 2.0;
  o.seed = 903;
  bool same = true;
  for (SamplerKind k : {SamplerKind::kLsh, SamplerKind::kUniform}) {
    o.sampler = k;
    const auto a = nlohmann::json::parse(trace_json(run(least_squares(16), syn.data, &test.data, o)));
    const auto b = nlohmann::json::parse(trace_json(run(least_squares(16), syn.data, &test.data, o)));
    same = same && a["deterministic"].dump() == b["deterministic"].dump();
  }
  return {same, same ? "deterministic sections byte-identical for lgd and sgd" : "traces differ"};
}

Outcome check_numerics() {
  SplitMix64 rng(1001);
  double fd_worst = 0.0, kernel_worst = 0.0, norm_worst = 0.0;
  for (const ModelSpec& m : {least_squares(6, false), logistic(6)}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Vector x = random_unit_vector(6, rng);
      const double y = m.kind == ModelKind::kLogistic ? (rng.coin() ? 1.0 : -1.0) : rng.normal();
      const LabeledPoint p{x, y};
      Vector theta(6);
      for (double& t : theta) t = 0.7 * rng.normal();
      const Vector g = gradient(m, theta, p);
      Vector fd(6);
      for (std::size_t j = 0; j < 6; ++j) {
        Vector a = theta, b = theta;
        a[j] += 1e-5;
        b[j] -= 1e-5;
        fd[j] = (loss(m, a, p) - loss(m, b, p)) / 2e-5;
      }
      fd_worst = std::max(fd_worst, rel_error(fd, g));
    }
  }
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 1 + i % 8;
    Vector u(k), v(k);
    for (std::size_t j = 0; j < k; ++j) {
      u[j] = rng.normal();
      v[j] = rng.normal();
    }
    const double uv = dot(u, v);
    kernel_worst = std::max(kernel_worst, std::abs(dot(quadratic_transform(u), quadratic_transform(v)) - uv * uv));
  }
  for (int i = 0; i < 200; ++i) {
    const Vector x = random_unit_vector(7, rng);
    Vector theta(7);
    for (double& t : theta) t = rng.normal();
    const LabeledPoint p{x, rng.normal()};
    const double inner = dot(hash_query(least_squares(7), theta), hash_stored(least_squares(7), p));
    norm_worst = std::max(norm_worst, std::abs(norm2(gradient(least_squares(7), theta, p)) - 2 * std::abs(inner)));
    const LabeledPoint q{x, rng.coin() ? 1.0 : -1.0};
    norm_worst = std::max(norm_worst, std::abs(norm2(gradient(logistic(7), theta, q)) -
                                               1.0 / (std::exp(q.y * dot(theta, x)) + 1.0)));
  }
  return {fd_worst < 1e-6 && kernel_worst < 1e-10 && norm_worst < 1e-10,
          fmt("finite-difference rel err %.2e, kernel identity %.2e, norm identities %.2e", fd_worst, kernel_worst,
              norm_worst)};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{
      check_collision_law, check_unbiasedness,  check_sgd_trace,        check_degenerate_equality,
      check_variance_reduction, check_probes,   check_sampling_cost,    check_convergence_race,
      check_determinism,   check_numerics,
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome r;
    try {
      r = criteria[i]();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("Criterion %zu: %s  %s  [%.1f s]\n", i + 1, r.pass ? "PASS" : "FAIL", r.detail.c_str(), sec);
    std::fflush(stdout);
    failed += !r.pass;
  }
  return failed == 0 ? 0 : 1;
}
