#include "lgd/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lgd/error.hpp"

namespace lgd {

namespace {

double int_pow(double base, std::uint32_t e) {
  double r = 1.0;
  while (e) {
    if (e & 1u) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

}  // namespace

double selection_probability(double cp, std::uint32_t K, std::uint32_t l, std::uint32_t S) {
  if (!(cp >= 0.0 && cp <= 1.0)) throw DomainError("selection_probability: cp outside [0, 1]");
  if (l < 1) throw DomainError("selection_probability: l must be >= 1");
  if (S < 1) throw DomainError("selection_probability: bucket size must be >= 1");
  const double hit = int_pow(cp, K);
  return hit * int_pow(1.0 - hit, l - 1) / static_cast<double>(S);
}

// ---- LshIndex ---------------------------------------------------------------

LshIndex::LshIndex(std::vector<Vector> stored, const HashFamilyParams& params, Embedding embedding)
    : LshIndex(std::move(stored), HashFamily::build(params, embedding)) {}

LshIndex::LshIndex(std::vector<Vector> stored, HashFamily family) : stored_(std::move(stored)) {
  tables_ = HashTableSet::build(stored_, std::move(family));
  norms_.resize(stored_.size());
  for (std::size_t i = 0; i < stored_.size(); ++i) norms_[i] = norm2(stored_[i]);
}

double LshIndex::collision_from_inner(double inner, double query_norm, std::size_t i) const {
  const double denom = query_norm * norms_[i];
  return collision_law(embedding(), denom == 0.0 ? 0.0 : inner / denom);
}

double LshIndex::collision(std::span<const double> query, std::size_t i) const {
  if (query.size() != stored_[i].size()) throw ShapeError("query length does not match index");
  return collision_from_inner(dot(query, stored_[i]), norm2(query), i);
}

void LshIndex::reseed(std::uint64_t seed) {
  HashFamilyParams p = tables_.params();
  p.seed = seed;
  tables_ = HashTableSet::build(stored_, p, embedding());
}

// ---- stats ------------------------------------------------------------------

std::uint32_t SamplerStats::l_quantile(double q) const {
  std::uint64_t total = 0;
  for (auto c : l_histogram) total += c;
  if (total == 0) return 0;
  const double target = q * static_cast<double>(total);
  std::uint64_t acc = 0;
  for (std::size_t l = 0; l < l_histogram.size(); ++l) {
    acc += l_histogram[l];
    if (static_cast<double>(acc) >= target && acc > 0) return static_cast<std::uint32_t>(l);
  }
  return static_cast<std::uint32_t>(l_histogram.size() - 1);
}

// ---- LshSampler -------------------------------------------------------------

LshSampler::LshSampler(const LshIndex& index, SamplerConfig cfg)
    : index_(&index), cfg_(cfg), rng_(cfg.seed) {
  const std::uint32_t L = index.params().L;
  if (cfg.max_probes > L)
    throw ParameterError("max_probes " + std::to_string(cfg.max_probes) + " exceeds L = " +
                         std::to_string(L));
  max_probes_ = cfg.max_probes == 0 ? L : cfg.max_probes;
  order_.resize(L);
  std::iota(order_.begin(), order_.end(), 0u);
  reset_stats();
}

void LshSampler::reset_stats() {
  stats_ = SamplerStats{};
  stats_.l_histogram.assign(index_->params().L + 1, 0);
}

std::uint32_t LshSampler::next_table(std::uint32_t probe) {
  // Any starting arrangement works: each step picks uniformly among the
  // tables not yet probed in this query. The first pick does not depend on
  // the query, so it is made one query early and its table prefetched.
  const std::uint32_t L = static_cast<std::uint32_t>(order_.size());
  if (probe == 0 && first_drawn_) {
    first_drawn_ = false;
    return order_[0];
  }
  const auto j = probe + static_cast<std::uint32_t>(rng_.uniform_index(L - probe));
  std::swap(order_[probe], order_[j]);
  return order_[probe];
}

void LshSampler::draw_first_table() {
  next_table(0);
  first_drawn_ = true;
  index_->tables().prefetch(order_[0]);
}

void LshSampler::record(std::uint32_t l, bool fallback) {
  ++stats_.draws;
  if (fallback) ++stats_.fallbacks;
  stats_.hash_computations += static_cast<std::uint64_t>(l) * index_->params().K;
  ++stats_.l_histogram[l];
}

SampleDraw LshSampler::fallback_draw(std::uint32_t l) {
  if (cfg_.fallback == FallbackPolicy::kError)
    throw SamplerExhausted("all " + std::to_string(l) + " probed buckets were empty");
  SampleDraw d;
  const auto n = static_cast<std::uint32_t>(index_->size());
  d.index = static_cast<std::uint32_t>(rng_.uniform_index(n));
  d.probability = 1.0 / static_cast<double>(n);
  d.bucket_size = n;
  d.tables_probed = l;
  d.fallback = true;
  return d;
}

Located LshSampler::locate(std::span<const double> query) {
  const HashTableSet& tables = index_->tables();
  if (query.size() != tables.family().input_dim())
    throw ShapeError("query has length " + std::to_string(query.size()) + ", index expects " +
                     std::to_string(tables.family().input_dim()));
  for (std::uint32_t probe = 0; probe < max_probes_; ++probe) {
    const std::uint32_t t = next_table(probe);
    const auto bucket = tables.bucket(t, tables.code(query, t));
    if (bucket.empty()) continue;
    const auto pick = rng_.uniform_index(bucket.size());
    record(probe + 1, false);
    draw_first_table();
    return {bucket[pick], static_cast<std::uint32_t>(bucket.size()), probe + 1, false};
  }
  const SampleDraw d = fallback_draw(max_probes_);
  record(max_probes_, true);
  draw_first_table();
  return {d.index, d.bucket_size, d.tables_probed, true};
}

SampleDraw LshSampler::complete(const Located& where, double cp) const {
  SampleDraw d;
  d.index = where.index;
  d.bucket_size = where.bucket_size;
  d.tables_probed = where.tables_probed;
  d.fallback = where.fallback;
  if (where.fallback) {
    d.probability = 1.0 / static_cast<double>(index_->size());
    return d;
  }
  d.collision = cp;
  d.probability = selection_probability(cp, index_->params().K, where.tables_probed, where.bucket_size);
  return d;
}

SampleDraw LshSampler::draw(std::span<const double> query) {
  const Located where = locate(query);
  const double cp = where.fallback ? 0.0 : index_->collision(query, where.index);
  return complete(where, cp);
}

std::vector<SampleDraw> LshSampler::draw_batch(std::span<const double> query, std::uint32_t m) {
  if (m < 1) throw ParameterError("draw_batch: batch size must be >= 1");
  const HashTableSet& tables = index_->tables();
  if (query.size() != tables.family().input_dim())
    throw ShapeError("query length does not match index");

  const double qnorm = norm2(query);
  std::vector<SampleDraw> out;
  out.reserve(m);
  std::vector<bool> taken(index_->size(), false);
  std::uint32_t probe = 0;
  for (; probe < max_probes_ && out.size() < m; ++probe) {
    const std::uint32_t t = next_table(probe);
    const auto bucket = tables.bucket(t, tables.code(query, t));
    scratch_.clear();
    for (auto idx : bucket)
      if (!taken[idx]) scratch_.push_back(idx);
    if (scratch_.empty()) continue;
    const std::size_t want = std::min<std::size_t>(m - out.size(), scratch_.size());
    // Partial Fisher-Yates: a uniform subset of `want` distinct members.
    for (std::size_t i = 0; i < want; ++i) {
      const auto j = i + rng_.uniform_index(scratch_.size() - i);
      std::swap(scratch_[i], scratch_[j]);
      const std::uint32_t idx = scratch_[i];
      taken[idx] = true;
      const double cp = index_->collision_from_inner(dot(query, index_->stored(idx)), qnorm, idx);
      Located where{idx, static_cast<std::uint32_t>(bucket.size()), probe + 1, false};
      out.push_back(complete(where, cp));
      record(probe + 1, false);
    }
  }
  while (out.size() < m) {
    out.push_back(fallback_draw(probe));
    record(std::max<std::uint32_t>(probe, 1), true);
  }
  return out;
}

}  // namespace lgd
