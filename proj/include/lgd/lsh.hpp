#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lgd/linalg.hpp"

namespace lgd {

/// Distribution of the nonzero projection weights.
enum class ProjectionWeights : std::uint8_t {
  kSign = 0,      // +1 / -1 with equal probability
  kGaussian = 1,  // N(0, 1)
};

/// How an input vector is mapped into the hashed space. Both outer-product
/// modes hash u (x) u without materializing it, so a family over dimension
/// m*m is queried with vectors of length m.
///
/// kOuterProduct draws sparse projections over the m*m coordinates.
/// kRankOneOuter restricts each projection to a rank-one matrix vec(a b^T),
/// so a bit is sign((a.u)(b.u)) and costs two length-m dot products; a and b
/// follow the density and weight settings over the m input coordinates.
enum class Embedding : std::uint8_t {
  kIdentity = 0,
  kOuterProduct = 1,
  kRankOneOuter = 2,
};

std::string to_string(Embedding e);
Embedding parse_embedding(const std::string& name);

struct HashFamilyParams {
  std::uint32_t K = 5;    // hashes per meta-hash, 1..64
  std::uint32_t L = 100;  // tables
  std::size_t dim = 1;    // hashed-space dimension
  double density = 1.0 / 30.0;
  std::uint64_t seed = 0;
  ProjectionWeights weights = ProjectionWeights::kSign;

  /// Throws ParameterError when any field is out of range.
  void validate() const;
};

struct ProjectionEntry {
  std::uint32_t index;  // coordinate in the hashed space
  double weight;
};

/// A sparse random direction: coordinates strictly increasing, all < dim.
struct SparseProjection {
  std::vector<ProjectionEntry> entries;
};

/// K sign bits, bit k holds hash k of the meta-hash.
struct HashCode {
  std::uint64_t bits = 0;
  std::uint32_t K = 0;

  bool bit(std::uint32_t k) const { return ((bits >> k) & 1u) != 0; }
  friend bool operator==(const HashCode&, const HashCode&) = default;
};

/// L x K sparse projections drawn from a seed. Projection (t, k) is generated
/// from its own SplitMix64 stream `derive_seed(seed, t * K + k)`: each hashed
/// coordinate j consumes one uniform draw (kept iff < density) followed, when
/// kept, by one weight draw (a sign bit or a Box-Muller normal). For
/// kRankOneOuter the a-factor uses that stream over the m input coordinates
/// and the b-factor uses stream `K * L + t * K + k`.
///
/// Families with density 1 (other than kOuterProduct) also keep a dense
/// copy of each table's weights so one pass over the input yields all K bits.
class HashFamily {
 public:
  HashFamily() = default;

  /// For kOuterProduct, params.dim must be a perfect square m*m.
  static HashFamily build(const HashFamilyParams& params,
                          Embedding embedding = Embedding::kIdentity);

  const HashFamilyParams& params() const { return params_; }
  Embedding embedding() const { return embedding_; }
  /// Length of vectors accepted by code(): dim, or sqrt(dim) for outer products.
  std::size_t input_dim() const { return input_dim_; }

  const SparseProjection& projection(std::uint32_t table, std::uint32_t k) const {
    return projections_[table * params_.K + k];
  }
  /// b-factor of a rank-one projection; empty for the other embeddings.
  const SparseProjection& second_factor(std::uint32_t table, std::uint32_t k) const {
    return second_[table * params_.K + k];
  }

  /// Sparse dot product of projection (table, k) with the embedded input.
  double project(std::span<const double> v, std::uint32_t table, std::uint32_t k) const;

  /// Bit k = 1 iff project(v, table, k) >= 0. Throws ShapeError on a length
  /// mismatch.
  HashCode code(std::span<const double> v, std::uint32_t table) const;
  /// Cache hint for the data code(., table) reads; no effect on results.
  void prefetch(std::uint32_t table) const;

  /// Total nonzero entries over all projections of one table.
  std::size_t table_nnz(std::uint32_t table) const;

 private:
  struct PairIndex {
    std::uint32_t a, b;
  };

  bool dense() const { return !dense_.empty(); }
  double signed_sum(std::size_t projection, const double* v) const;

  HashFamilyParams params_{};
  Embedding embedding_ = Embedding::kIdentity;
  std::size_t input_dim_ = 0;
  std::vector<SparseProjection> projections_;
  std::vector<SparseProjection> second_;
  // Sparse identity tables, K-interleaved and zero-padded to the longest
  // projection: slot j * K + k of table t holds entry j of projection k.
  std::vector<std::uint32_t> ell_offsets_;  // L + 1, in slots
  std::vector<std::uint32_t> ell_index_;
  std::vector<double> ell_weight_;
  // Sparse identity tables with +-1 weights: projection p's +1 indices are
  // signed_index_[o[2p], o[2p+1]) and its -1 indices run up to o[2p+2].
  std::vector<std::uint32_t> signed_offsets_;
  std::vector<std::uint32_t> signed_index_;
  // Row/column split of each entry for kOuterProduct, parallel to entries.
  std::vector<std::vector<PairIndex>> pairs_;
  // Per table, input_dim x rows weights (coordinate-major); rows = K, or 2K
  // interleaved a/b for rank-one.
  std::vector<Vector> dense_;
  std::uint32_t dense_rows_ = 0;
};

/// L immutable tables mapping meta-hash codes to buckets of point indices.
/// Buckets keep insertion order; only indices are stored, never vectors.
class HashTableSet {
 public:
  HashTableSet() = default;

  /// Hashes every point into every table. Throws ParameterError on an empty
  /// point list and ShapeError on ragged input.
  static HashTableSet build(std::span<const Vector> points, const HashFamilyParams& params,
                            Embedding embedding = Embedding::kIdentity);
  static HashTableSet build(std::span<const Vector> points, HashFamily family);

  const HashFamily& family() const { return family_; }
  const HashFamilyParams& params() const { return family_.params(); }
  std::uint32_t num_tables() const { return family_.params().L; }
  std::size_t num_points() const { return num_points_; }

  HashCode code(std::span<const double> v, std::uint32_t table) const {
    return family_.code(v, table);
  }

  /// Members of the bucket keyed by `code` in `table`; empty if absent.
  std::span<const std::uint32_t> bucket(std::uint32_t table, HashCode code) const;
  /// Cache hint for everything a lookup in `table` touches before the bucket.
  void prefetch(std::uint32_t table) const;

  std::size_t num_buckets(std::uint32_t table) const { return tables_[table].codes.size(); }
  /// Code and members of the i-th bucket of a table, codes in ascending order.
  std::uint64_t bucket_code(std::uint32_t table, std::size_t i) const {
    return tables_[table].codes[i];
  }
  std::span<const std::uint32_t> bucket_at(std::uint32_t table, std::size_t i) const;

  /// Binary snapshot; layout documented in docs/snapshot.md.
  void save(std::ostream& out) const;
  static HashTableSet load(std::istream& in);

 private:
  struct Table {
    std::vector<std::uint64_t> codes;     // sorted, unique
    std::vector<std::uint32_t> offsets;   // codes.size() + 1
    std::vector<std::uint32_t> members;   // num_points entries
    std::vector<std::uint32_t> direct;    // 2^K + 1 member offsets by code, small K only
  };

  static Table make_table(std::span<const std::uint64_t> point_codes);
  static void index_codes(Table& t, std::uint32_t K);

  HashFamily family_;
  std::size_t num_points_ = 0;
  std::vector<Table> tables_;
};

/// 1 - arccos(cos(q, x)) / pi for the plain sign-projection family. Throws
/// DomainError if either vector is zero.
double collision_probability(std::span<const double> q, std::span<const double> x);

/// Same law from a precomputed cosine; the argument is clamped to [-1, 1].
double collision_probability_from_cosine(double cosine);

/// Single-bit collision probability of two inputs with plain cosine c under
/// an embedding: 1 - arccos(c)/pi, 1 - arccos(c^2)/pi for kOuterProduct, and
/// s^2 + (1-s)^2 with s = 1 - arccos(c)/pi for kRankOneOuter. Exact for
/// Gaussian weights.
double collision_law(Embedding embedding, double cosine);

}  // namespace lgd
