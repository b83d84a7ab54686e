#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lgd/linalg.hpp"
#include "lgd/lsh.hpp"
#include "lgd/rng.hpp"

namespace lgd {

/// One adaptive sample. For non-fallback draws
///   probability == selection_probability(collision, K, tables_probed, bucket_size)
/// bit for bit.
struct SampleDraw {
  std::uint32_t index = 0;
  double probability = 1.0;
  std::uint32_t bucket_size = 1;
  std::uint32_t tables_probed = 1;
  bool fallback = false;
  /// Single-hash collision probability of the drawn point with the query
  /// (0 for fallback draws, where no collision was observed).
  double collision = 0.0;
};

enum class FallbackPolicy { kUniform, kError };

struct SamplerConfig {
  std::uint32_t max_probes = 0;  // 0 means all L tables
  FallbackPolicy fallback = FallbackPolicy::kUniform;
  std::uint64_t seed = 0;
};

/// cp^K (1 - cp^K)^(l-1) / S. Throws DomainError for cp outside [0,1],
/// l < 1 or S < 1.
double selection_probability(double cp, std::uint32_t K, std::uint32_t l, std::uint32_t S);

/// Stored vectors plus the tables built over them. Vectors are kept in their
/// pre-embedding form and collision probabilities follow collision_law for
/// the family's embedding.
class LshIndex {
 public:
  LshIndex() = default;
  LshIndex(std::vector<Vector> stored, const HashFamilyParams& params,
           Embedding embedding = Embedding::kIdentity);
  LshIndex(std::vector<Vector> stored, HashFamily family);

  const HashTableSet& tables() const { return tables_; }
  const HashFamilyParams& params() const { return tables_.params(); }
  Embedding embedding() const { return tables_.family().embedding(); }
  std::size_t size() const { return stored_.size(); }
  std::span<const double> stored(std::size_t i) const { return stored_[i]; }
  /// Norm of the plain stored vector (before embedding).
  double stored_norm(std::size_t i) const { return norms_[i]; }

  /// cp of stored point i given the plain inner product with the query and
  /// the query norm. A zero norm on either side counts as cosine 0.
  double collision_from_inner(double inner, double query_norm, std::size_t i) const;
  /// cp(x_i, query) under the family's collision law.
  double collision(std::span<const double> query, std::size_t i) const;

  /// Rebuilds every table from a fresh family with the same parameters and a
  /// new seed. Samplers bound to this index stay valid.
  void reseed(std::uint64_t seed);

 private:
  std::vector<Vector> stored_;
  Vector norms_;
  HashTableSet tables_;
};

/// Per-sampler counters; l_histogram[l] counts draws that probed l tables
/// (index 0 unused).
struct SamplerStats {
  std::uint64_t draws = 0;
  std::uint64_t fallbacks = 0;
  std::uint64_t hash_computations = 0;
  std::vector<std::uint64_t> l_histogram;

  double fallback_rate() const {
    return draws == 0 ? 0.0 : static_cast<double>(fallbacks) / static_cast<double>(draws);
  }
  /// Smallest l whose cumulative share reaches q (q in (0,1]); 0 when empty.
  std::uint32_t l_quantile(double q) const;
};

/// Bucket located for a query, before the probability has been attached.
struct Located {
  std::uint32_t index = 0;
  std::uint32_t bucket_size = 0;
  std::uint32_t tables_probed = 0;
  bool fallback = false;
};

/// Draws training indices from an LshIndex. Tables are probed in a fresh
/// uniformly random order without replacement (partial Fisher-Yates), the
/// first non-empty bucket wins, and a member is chosen uniformly. The bucket
/// choice uses the sampler's own RNG stream, separate from table
/// construction. Each instance owns its stream; share the index, not the
/// sampler, between threads.
class LshSampler {
 public:
  LshSampler(const LshIndex& index, SamplerConfig cfg);

  /// Full draw: locate a bucket, then compute cp against `query`.
  SampleDraw draw(std::span<const double> query);

  /// Locate only. Callers that already know <query, stored_i> (the training
  /// loop gets it for free from the residual) finish with `complete`.
  Located locate(std::span<const double> query);
  SampleDraw complete(const Located& where, double cp) const;

  /// Mini-batch: m distinct members from consecutive matching
  /// buckets, shortfall filled per the fallback policy.
  std::vector<SampleDraw> draw_batch(std::span<const double> query, std::uint32_t m);

  const SamplerStats& stats() const { return stats_; }
  void reset_stats();
  const LshIndex& index() const { return *index_; }
  std::uint32_t max_probes() const { return max_probes_; }

 private:
  std::uint32_t next_table(std::uint32_t probe);
  void draw_first_table();
  void record(std::uint32_t l, bool fallback);
  SampleDraw fallback_draw(std::uint32_t l);

  const LshIndex* index_;
  SamplerConfig cfg_;
  std::uint32_t max_probes_;
  SplitMix64 rng_;
  std::vector<std::uint32_t> order_;
  bool first_drawn_ = false;  // order_[0] already holds the next query's first table
  std::vector<std::uint32_t> scratch_;
  SamplerStats stats_;
};

}  // namespace lgd
