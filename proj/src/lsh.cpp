#include "lgd/lsh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <utility>

#include "lgd/error.hpp"
#include "lgd/rng.hpp"

namespace lgd {

void HashFamilyParams::validate() const {
  if (K < 1 || K > 64) throw ParameterError("K must be in [1, 64], got " + std::to_string(K));
  if (L < 1) throw ParameterError("L must be positive");
  if (dim < 1) throw ParameterError("dim must be positive");
  if (!(density > 0.0 && density <= 1.0))
    throw ParameterError("density must lie in (0, 1], got " + std::to_string(density));
  if (dim > 0xFFFFFFFFull) throw ParameterError("dim exceeds 32-bit coordinate range");
}

std::string to_string(Embedding e) {
  switch (e) {
    case Embedding::kIdentity: return "identity";
    case Embedding::kOuterProduct: return "outer_product";
    case Embedding::kRankOneOuter: return "rank_one";
  }
  return "identity";
}

Embedding parse_embedding(const std::string& name) {
  if (name == "identity") return Embedding::kIdentity;
  if (name == "outer_product" || name == "exact") return Embedding::kOuterProduct;
  if (name == "rank_one") return Embedding::kRankOneOuter;
  throw ParameterError("unknown embedding '" + name + "'");
}

namespace {

SparseProjection draw_projection(std::uint64_t stream_seed, std::size_t dim, const HashFamilyParams& params) {
  SplitMix64 rng(stream_seed);
  SparseProjection proj;
  proj.entries.reserve(static_cast<std::size_t>(params.density * static_cast<double>(dim)) + 8);
  for (std::size_t j = 0; j < dim; ++j) {
    if (rng.uniform01() >= params.density) continue;
    const double w = params.weights == ProjectionWeights::kSign ? (rng.coin() ? 1.0 : -1.0) : rng.normal();
    proj.entries.push_back({static_cast<std::uint32_t>(j), w});
  }
  return proj;
}

double sparse_dot(const SparseProjection& p, std::span<const double> v) {
  double s = 0.0;
  for (const auto& e : p.entries) s += e.weight * v[e.index];
  return s;
}

}  // namespace

HashFamily HashFamily::build(const HashFamilyParams& params, Embedding embedding) {
  params.validate();
  HashFamily family;
  family.params_ = params;
  family.embedding_ = embedding;
  if (embedding != Embedding::kIdentity) {
    const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(params.dim))));
    if (m * m != params.dim)
      throw ParameterError("outer-product family needs a square dim, got " +
                           std::to_string(params.dim));
    family.input_dim_ = m;
  } else {
    family.input_dim_ = params.dim;
  }

  const std::size_t count = static_cast<std::size_t>(params.K) * params.L;
  const std::size_t proj_dim = embedding == Embedding::kRankOneOuter ? family.input_dim_ : params.dim;
  family.projections_.resize(count);
  for (std::size_t p = 0; p < count; ++p)
    family.projections_[p] = draw_projection(derive_seed(params.seed, p), proj_dim, params);
  if (embedding == Embedding::kRankOneOuter) {
    family.second_.resize(count);
    for (std::size_t p = 0; p < count; ++p)
      family.second_[p] = draw_projection(derive_seed(params.seed, count + p), proj_dim, params);
  }

  const bool signs = std::all_of(family.projections_.begin(), family.projections_.end(), [](const auto& pr) {
    return std::all_of(pr.entries.begin(), pr.entries.end(),
                       [](const auto& e) { return e.weight == 1.0 || e.weight == -1.0; });
  });
  if (embedding == Embedding::kIdentity && params.density < 1.0 && signs) {
    family.signed_offsets_.assign(1, 0);
    for (const auto& pr : family.projections_) {
      for (const double sign : {1.0, -1.0}) {
        for (const auto& e : pr.entries)
          if (e.weight == sign) family.signed_index_.push_back(e.index);
        family.signed_offsets_.push_back(static_cast<std::uint32_t>(family.signed_index_.size()));
      }
    }
  } else if (embedding == Embedding::kIdentity && params.density < 1.0) {
    const std::uint32_t K = params.K;
    family.ell_offsets_.assign(1, 0);
    for (std::uint32_t t = 0; t < params.L; ++t) {
      std::size_t width = 0;
      for (std::uint32_t k = 0; k < K; ++k)
        width = std::max(width, family.projections_[static_cast<std::size_t>(t) * K + k].entries.size());
      const std::size_t base = family.ell_index_.size();
      family.ell_index_.resize(base + width * K, 0);
      family.ell_weight_.resize(base + width * K, 0.0);
      for (std::uint32_t k = 0; k < K; ++k) {
        const auto& entries = family.projections_[static_cast<std::size_t>(t) * K + k].entries;
        for (std::size_t j = 0; j < entries.size(); ++j) {
          family.ell_index_[base + j * K + k] = entries[j].index;
          family.ell_weight_[base + j * K + k] = entries[j].weight;
        }
      }
      family.ell_offsets_.push_back(static_cast<std::uint32_t>(family.ell_index_.size()));
    }
  }

  if (embedding == Embedding::kOuterProduct) {
    const auto m = static_cast<std::uint32_t>(family.input_dim_);
    family.pairs_.resize(count);
    for (std::size_t p = 0; p < count; ++p) {
      auto& pairs = family.pairs_[p];
      pairs.reserve(family.projections_[p].entries.size());
      for (const auto& e : family.projections_[p].entries) pairs.push_back({e.index / m, e.index % m});
    }
  } else if (params.density == 1.0) {
    const std::uint32_t K = params.K;
    const bool rank_one = embedding == Embedding::kRankOneOuter;
    family.dense_rows_ = ((rank_one ? 2 * K : K) + 3) / 4 * 4;  // zero-padded to whole SIMD rows
    const std::size_t m = family.input_dim_;
    family.dense_.assign(params.L, Vector(m * family.dense_rows_, 0.0));
    for (std::uint32_t t = 0; t < params.L; ++t) {
      Vector& W = family.dense_[t];
      for (std::uint32_t k = 0; k < K; ++k) {
        const std::size_t p = static_cast<std::size_t>(t) * K + k;
        const std::uint32_t row = rank_one ? 2 * k : k;
        for (const auto& e : family.projections_[p].entries) W[e.index * family.dense_rows_ + row] = e.weight;
        if (rank_one)
          for (const auto& e : family.second_[p].entries) W[e.index * family.dense_rows_ + row + 1] = e.weight;
      }
    }
  }
  return family;
}

namespace {

template <std::uint32_t R>
void accumulate_fixed(const double* W, const double* v, std::size_t m, double* out) {
  double acc[4][R] = {};
  std::size_t j = 0;
  for (; j + 4 <= m; j += 4)
    for (std::size_t u = 0; u < 4; ++u) {
      const double vj = v[j + u];
      const double* w = W + (j + u) * R;
      for (std::uint32_t r = 0; r < R; ++r) acc[u][r] += w[r] * vj;
    }
  for (; j < m; ++j)
    for (std::uint32_t r = 0; r < R; ++r) acc[0][r] += W[j * R + r] * v[j];
  for (std::uint32_t r = 0; r < R; ++r) out[r] = (acc[0][r] + acc[1][r]) + (acc[2][r] + acc[3][r]);
}

template <std::uint32_t... Rs>
bool dispatch_rows(std::uint32_t R, const double* W, const double* v, std::size_t m, double* out,
                   std::integer_sequence<std::uint32_t, Rs...>) {
  return ((R == 4 * (Rs + 1) ? (accumulate_fixed<4 * (Rs + 1)>(W, v, m, out), true) : false) || ...);
}

// out[r] = sum_j W[j * R + r] * v[j]
void accumulate_rows(const double* W, const double* v, std::size_t m, std::uint32_t R, double* out) {
  if (dispatch_rows(R, W, v, m, out, std::make_integer_sequence<std::uint32_t, 8>{})) return;
  std::fill(out, out + R, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double vj = v[j];
    const double* w = W + j * R;
    for (std::uint32_t r = 0; r < R; ++r) out[r] += w[r] * vj;
  }
}

template <std::uint32_t K>
std::uint64_t gather_fixed(const std::uint32_t* idx, const double* w, std::size_t slots, const double* v) {
  double acc[K] = {};
  for (std::size_t s = 0; s < slots; s += K)
    for (std::uint32_t k = 0; k < K; ++k) acc[k] += w[s + k] * v[idx[s + k]];
  std::uint64_t bits = 0;
  for (std::uint32_t k = 0; k < K; ++k) bits |= std::uint64_t{acc[k] >= 0.0} << k;
  return bits;
}

// Sign bits of the K interleaved sums: slot s feeds projection s % K.
std::uint64_t gather_bits(const std::uint32_t* idx, const double* w, std::size_t slots, std::uint32_t K,
                          const double* v) {
  switch (K) {
    case 1: return gather_fixed<1>(idx, w, slots, v);
    case 2: return gather_fixed<2>(idx, w, slots, v);
    case 3: return gather_fixed<3>(idx, w, slots, v);
    case 4: return gather_fixed<4>(idx, w, slots, v);
    case 5: return gather_fixed<5>(idx, w, slots, v);
    case 6: return gather_fixed<6>(idx, w, slots, v);
    case 7: return gather_fixed<7>(idx, w, slots, v);
    case 8: return gather_fixed<8>(idx, w, slots, v);
    case 10: return gather_fixed<10>(idx, w, slots, v);
    case 12: return gather_fixed<12>(idx, w, slots, v);
    case 16: return gather_fixed<16>(idx, w, slots, v);
    default: break;
  }
  std::array<double, 64> acc{};
  for (std::size_t s = 0; s < slots; ++s) acc[s % K] += w[s] * v[idx[s]];
  std::uint64_t bits = 0;
  for (std::uint32_t k = 0; k < K; ++k) bits |= std::uint64_t{acc[k] >= 0.0} << k;
  return bits;
}

}  // namespace

double HashFamily::signed_sum(std::size_t p, const double* v) const {
  const std::uint32_t* idx = signed_index_.data();
  const std::uint32_t lo = signed_offsets_[2 * p], mid = signed_offsets_[2 * p + 1],
                      hi = signed_offsets_[2 * p + 2];
  double plus = 0.0, minus = 0.0;
#pragma omp simd reduction(+ : plus)
  for (std::uint32_t s = lo; s < mid; ++s) plus += v[idx[s]];
#pragma omp simd reduction(+ : minus)
  for (std::uint32_t s = mid; s < hi; ++s) minus += v[idx[s]];
  return plus - minus;
}

double HashFamily::project(std::span<const double> v, std::uint32_t table, std::uint32_t k) const {
  const std::size_t p = static_cast<std::size_t>(table) * params_.K + k;
  if (dense()) {
    const Vector& W = dense_[table];
    const std::uint32_t R = dense_rows_;
    const std::uint32_t row = embedding_ == Embedding::kRankOneOuter ? 2 * k : k;
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < input_dim_; ++j) {
      a += W[j * R + row] * v[j];
      if (embedding_ == Embedding::kRankOneOuter) b += W[j * R + row + 1] * v[j];
    }
    return embedding_ == Embedding::kRankOneOuter ? a * b : a;
  }
  switch (embedding_) {
    case Embedding::kIdentity:
      if (!signed_offsets_.empty()) return signed_sum(p, v.data());
      return sparse_dot(projections_[p], v);
    case Embedding::kRankOneOuter:
      return sparse_dot(projections_[p], v) * sparse_dot(second_[p], v);
    case Embedding::kOuterProduct:
      break;
  }
  const auto& entries = projections_[p].entries;
  const auto& pairs = pairs_[p];
  double s = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) s += entries[i].weight * (v[pairs[i].a] * v[pairs[i].b]);
  return s;
}

HashCode HashFamily::code(std::span<const double> v, std::uint32_t table) const {
  if (v.size() != input_dim_)
    throw ShapeError("hash input has length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(input_dim_));
  HashCode c{0, params_.K};
  if (dense()) {
    const std::uint32_t R = dense_rows_;
    std::array<double, 128> acc;
    accumulate_rows(dense_[table].data(), v.data(), input_dim_, R, acc.data());
    for (std::uint32_t k = 0; k < params_.K; ++k) {
      const double value = embedding_ == Embedding::kRankOneOuter ? acc[2 * k] * acc[2 * k + 1] : acc[k];
      if (value >= 0.0) c.bits |= (std::uint64_t{1} << k);
    }
    return c;
  }
  if (!signed_offsets_.empty()) {
    const std::size_t first = static_cast<std::size_t>(table) * params_.K;
    for (std::uint32_t k = 0; k < params_.K; ++k)
      if (signed_sum(first + k, v.data()) >= 0.0) c.bits |= (std::uint64_t{1} << k);
    return c;
  }
  if (!ell_offsets_.empty()) {
    const std::size_t lo = ell_offsets_[table];
    c.bits = gather_bits(ell_index_.data() + lo, ell_weight_.data() + lo, ell_offsets_[table + 1] - lo,
                         params_.K, v.data());
    return c;
  }
  for (std::uint32_t k = 0; k < params_.K; ++k) {
    if (project(v, table, k) >= 0.0) c.bits |= (std::uint64_t{1} << k);
  }
  return c;
}

namespace {

void prefetch_range(const void* begin, const void* end) {
  const auto b = reinterpret_cast<std::uintptr_t>(begin) & ~std::uintptr_t{63};
  for (auto a = b; a < reinterpret_cast<std::uintptr_t>(end); a += 64)
    __builtin_prefetch(reinterpret_cast<const void*>(a));
}

}  // namespace

void HashFamily::prefetch(std::uint32_t table) const {
  if (signed_offsets_.empty()) return;
  const std::size_t first = 2 * static_cast<std::size_t>(table) * params_.K;
  const std::uint32_t* o = signed_offsets_.data() + first;
  prefetch_range(o, o + 2 * params_.K + 1);
  prefetch_range(signed_index_.data() + o[0], signed_index_.data() + o[2 * params_.K]);
}

void HashTableSet::prefetch(std::uint32_t table) const {
  family_.prefetch(table);
  const Table& t = tables_[table];
  prefetch_range(t.direct.data(), t.direct.data() + t.direct.size());
}

std::size_t HashFamily::table_nnz(std::uint32_t table) const {
  std::size_t n = 0;
  for (std::uint32_t k = 0; k < params_.K; ++k) {
    n += projection(table, k).entries.size();
    if (embedding_ == Embedding::kRankOneOuter) n += second_factor(table, k).entries.size();
  }
  return n;
}

HashTableSet::Table HashTableSet::make_table(std::span<const std::uint64_t> point_codes) {
  Table t;
  t.codes.assign(point_codes.begin(), point_codes.end());
  std::sort(t.codes.begin(), t.codes.end());
  t.codes.erase(std::unique(t.codes.begin(), t.codes.end()), t.codes.end());

  // Counting sort keyed by bucket rank; stable, so buckets keep insertion order.
  std::vector<std::uint32_t> rank(point_codes.size());
  t.offsets.assign(t.codes.size() + 1, 0);
  for (std::size_t i = 0; i < point_codes.size(); ++i) {
    const auto it = std::lower_bound(t.codes.begin(), t.codes.end(), point_codes[i]);
    rank[i] = static_cast<std::uint32_t>(it - t.codes.begin());
    ++t.offsets[rank[i] + 1];
  }
  for (std::size_t b = 0; b < t.codes.size(); ++b) t.offsets[b + 1] += t.offsets[b];
  t.members.resize(point_codes.size());
  std::vector<std::uint32_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
  for (std::size_t i = 0; i < point_codes.size(); ++i)
    t.members[cursor[rank[i]]++] = static_cast<std::uint32_t>(i);
  return t;
}

HashTableSet HashTableSet::build(std::span<const Vector> points, const HashFamilyParams& params,
                                 Embedding embedding) {
  return build(points, HashFamily::build(params, embedding));
}

HashTableSet HashTableSet::build(std::span<const Vector> points, HashFamily family) {
  if (points.empty()) throw ParameterError("cannot build hash tables over an empty point set");
  if (points.size() > 0xFFFFFFFFull) throw ParameterError("too many points for 32-bit indices");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != family.input_dim())
      throw ShapeError("point " + std::to_string(i) + " has length " +
                       std::to_string(points[i].size()) + ", expected " +
                       std::to_string(family.input_dim()));
  }
  HashTableSet set;
  set.family_ = std::move(family);
  set.num_points_ = points.size();
  const auto L = set.family_.params().L;
  set.tables_.reserve(L);
  std::vector<std::uint64_t> codes(points.size());
  for (std::uint32_t t = 0; t < L; ++t) {
    for (std::size_t i = 0; i < points.size(); ++i) codes[i] = set.family_.code(points[i], t).bits;
    set.tables_.push_back(make_table(codes));
    index_codes(set.tables_.back(), set.family_.params().K);
  }
  return set;
}

void HashTableSet::index_codes(Table& t, std::uint32_t K) {
  t.direct.clear();
  if (K > 12) return;
  const std::uint64_t slots = std::uint64_t{1} << K;
  t.direct.resize(slots + 1);
  std::size_t b = 0;
  for (std::uint64_t c = 0; c <= slots; ++c) {
    while (b < t.codes.size() && t.codes[b] < c) ++b;
    t.direct[c] = t.offsets[b];
  }
}

std::span<const std::uint32_t> HashTableSet::bucket(std::uint32_t table, HashCode code) const {
  const Table& t = tables_[table];
  if (!t.direct.empty()) {
    const std::uint32_t lo = t.direct[code.bits], hi = t.direct[code.bits + 1];
    return {t.members.data() + lo, hi - lo};
  }
  const auto it = std::lower_bound(t.codes.begin(), t.codes.end(), code.bits);
  if (it == t.codes.end() || *it != code.bits) return {};
  const auto b = static_cast<std::size_t>(it - t.codes.begin());
  return {t.members.data() + t.offsets[b], t.offsets[b + 1] - t.offsets[b]};
}

std::span<const std::uint32_t> HashTableSet::bucket_at(std::uint32_t table, std::size_t i) const {
  const Table& t = tables_[table];
  return {t.members.data() + t.offsets[i], t.offsets[i + 1] - t.offsets[i]};
}

// ---- snapshot ---------------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic{'L', 'G', 'D', 'T', 'A', 'B', 'L', 'E'};
constexpr std::uint32_t kSnapshotVersion = 1;

class Fnv1a64 {
 public:
  void update(const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001B3ull;
    }
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ull;
};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const unsigned char* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
    sum_.update(p, n);
  }
  template <class T>
  void uint(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, sizeof(T));
  }
  void f64(double v) {
    std::uint64_t u;
    static_assert(sizeof(u) == sizeof(v));
    std::memcpy(&u, &v, sizeof(u));
    uint(u);
  }
  std::uint64_t checksum() const { return sum_.value(); }

 private:
  std::ostream& out_;
  Fnv1a64 sum_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  void bytes(unsigned char* p, std::size_t n, bool hash = true) {
    if (!in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n)))
      throw ParseError("truncated hash-table snapshot");
    if (hash) sum_.update(p, n);
  }
  template <class T>
  T uint(bool hash = true) {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T), hash);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }
  double f64() {
    const auto u = uint<std::uint64_t>();
    double v;
    std::memcpy(&v, &u, sizeof(v));
    return v;
  }
  std::uint64_t checksum() const { return sum_.value(); }

 private:
  std::istream& in_;
  Fnv1a64 sum_;
};

}  // namespace

void HashTableSet::save(std::ostream& out) const {
  Writer w(out);
  w.bytes(reinterpret_cast<const unsigned char*>(kMagic.data()), kMagic.size());
  const auto& p = params();
  w.uint<std::uint32_t>(kSnapshotVersion);
  w.uint<std::uint32_t>(p.K);
  w.uint<std::uint32_t>(p.L);
  w.uint<std::uint64_t>(p.dim);
  w.f64(p.density);
  w.uint<std::uint64_t>(p.seed);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(p.weights));
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(family_.embedding()));
  w.uint<std::uint64_t>(num_points_);
  for (const Table& t : tables_) {
    w.uint<std::uint64_t>(t.codes.size());
    for (std::size_t b = 0; b < t.codes.size(); ++b) {
      w.uint<std::uint64_t>(t.codes[b]);
      w.uint<std::uint32_t>(t.offsets[b + 1] - t.offsets[b]);
      for (std::uint32_t i = t.offsets[b]; i < t.offsets[b + 1]; ++i) w.uint<std::uint32_t>(t.members[i]);
    }
  }
  const std::uint64_t sum = w.checksum();
  w.uint<std::uint64_t>(sum);
  if (!out) throw IoError("failed writing hash-table snapshot");
}

HashTableSet HashTableSet::load(std::istream& in) {
  Reader r(in);
  std::array<char, 8> magic{};
  r.bytes(reinterpret_cast<unsigned char*>(magic.data()), magic.size());
  if (magic != kMagic) throw ParseError("not a hash-table snapshot (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kSnapshotVersion)
    throw ParseError("unsupported snapshot version " + std::to_string(version));
  HashFamilyParams p;
  p.K = r.uint<std::uint32_t>();
  p.L = r.uint<std::uint32_t>();
  p.dim = r.uint<std::uint64_t>();
  p.density = r.f64();
  p.seed = r.uint<std::uint64_t>();
  const auto weights = r.uint<std::uint8_t>();
  const auto embedding = r.uint<std::uint8_t>();
  if (weights > 1 || embedding > 2) throw ParseError("snapshot has unknown enum values");
  p.weights = static_cast<ProjectionWeights>(weights);
  const auto n = r.uint<std::uint64_t>();
  try {
    p.validate();
  } catch (const ParameterError& e) {
    throw ParseError(std::string("snapshot header invalid: ") + e.what());
  }
  if (n == 0 || n > 0xFFFFFFFFull) throw ParseError("snapshot point count out of range");

  HashTableSet set;
  set.family_ = HashFamily::build(p, static_cast<Embedding>(embedding));
  set.num_points_ = n;
  set.tables_.resize(p.L);
  for (Table& t : set.tables_) {
    const auto buckets = r.uint<std::uint64_t>();
    if (buckets > n) throw ParseError("snapshot table has more buckets than points");
    t.codes.resize(buckets);
    t.offsets.assign(buckets + 1, 0);
    t.members.reserve(n);
    std::vector<bool> seen(n, false);
    for (std::size_t b = 0; b < buckets; ++b) {
      t.codes[b] = r.uint<std::uint64_t>();
      if (b > 0 && t.codes[b] <= t.codes[b - 1]) throw ParseError("snapshot bucket codes not sorted");
      if (p.K < 64 && (t.codes[b] >> p.K) != 0) throw ParseError("snapshot bucket code exceeds K bits");
      const auto count = r.uint<std::uint32_t>();
      if (count == 0 || t.members.size() + count > n)
        throw ParseError("snapshot bucket size out of range");
      for (std::uint32_t i = 0; i < count; ++i) {
        const auto idx = r.uint<std::uint32_t>();
        if (idx >= n || seen[idx]) throw ParseError("snapshot index repeated or out of range");
        seen[idx] = true;
        t.members.push_back(idx);
      }
      t.offsets[b + 1] = static_cast<std::uint32_t>(t.members.size());
    }
    if (t.members.size() != n) throw ParseError("snapshot table does not cover every point");
    index_codes(t, p.K);
  }
  const std::uint64_t expected = r.checksum();
  const auto stored = r.uint<std::uint64_t>(false);
  if (stored != expected) throw ParseError("snapshot checksum mismatch");
  return set;
}

double collision_probability_from_cosine(double cosine) {
  const double c = std::clamp(cosine, -1.0, 1.0);
  return 1.0 - std::acos(c) / std::numbers::pi;
}

double collision_law(Embedding embedding, double cosine) {
  const double c = std::clamp(cosine, -1.0, 1.0);
  switch (embedding) {
    case Embedding::kIdentity:
      return collision_probability_from_cosine(c);
    case Embedding::kOuterProduct:
      return collision_probability_from_cosine(c * c);
    case Embedding::kRankOneOuter: {
      const double s = collision_probability_from_cosine(c);
      return s * s + (1.0 - s) * (1.0 - s);
    }
  }
  return collision_probability_from_cosine(c);
}

double collision_probability(std::span<const double> q, std::span<const double> x) {
  if (q.size() != x.size()) throw ShapeError("collision_probability: length mismatch");
  const double nq = norm2(q);
  const double nx = norm2(x);
  if (nq == 0.0 || nx == 0.0) throw DomainError("collision_probability: zero vector");
  return collision_probability_from_cosine(dot(q, x) / (nq * nx));
}

}  // namespace lgd
