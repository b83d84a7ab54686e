#include "lgd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "lgd/error.hpp"

namespace lgd {

namespace {

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, int label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  Dataset ds;
  ds.name = path;
  ds.provenance = "csv:" + path;
  std::string line;
  std::size_t row = 0;
  std::size_t columns = 0;
  std::size_t label = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++row;
    if (row == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    if (first) {
      first = false;
      columns = cells.size();
      if (columns < 2) throw ParseError(path + ": need at least one feature column and a label");
      const long long lc = label_column < 0 ? static_cast<long long>(columns) + label_column : label_column;
      if (lc < 0 || lc >= static_cast<long long>(columns))
        throw ParameterError(path + ": label column " + std::to_string(label_column) +
                             " out of range for " + std::to_string(columns) + " columns");
      label = static_cast<std::size_t>(lc);
      ds.d = columns - 1;
      const bool header = std::any_of(cells.begin(), cells.end(),
                                      [](std::string_view c) { return !parse_number(c); });
      if (header) continue;
    }
    if (cells.size() != columns)
      throw ParseError(path + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " columns, expected " + std::to_string(columns));
    LabeledPoint p;
    p.x.reserve(ds.d);
    for (std::size_t c = 0; c < columns; ++c) {
      const auto v = parse_number(cells[c]);
      if (!v || !std::isfinite(*v))
        throw ParseError(path + ": non-numeric cell at row " + std::to_string(row) + ", column " +
                         std::to_string(c + 1) + ": '" + std::string(trim(cells[c])) + "'");
      if (c == label)
        p.y = *v;
      else
        p.x.push_back(*v);
    }
    ds.points.push_back(std::move(p));
  }
  if (ds.points.empty()) throw ParseError(path + ": no data rows");
  return ds;
}

Dataset normalize(Dataset ds) {
  for (std::size_t i = 0; i < ds.points.size(); ++i) {
    auto& x = ds.points[i].x;
    const double n = norm2(x);
    if (n == 0.0) throw DomainError("row " + std::to_string(i) + " has zero norm and cannot be normalized");
    for (double& v : x) v /= n;
  }
  return ds;
}

CenteredVectors center_stored(std::vector<Vector> vectors) {
  if (vectors.empty()) throw ParameterError("center_stored: no vectors");
  CenteredVectors out;
  const std::size_t m = vectors.front().size();
  out.mean.assign(m, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != m) throw ShapeError("center_stored: ragged vectors");
    axpy(1.0, v, out.mean);
  }
  for (double& v : out.mean) v /= static_cast<double>(vectors.size());
  bool all_zero = true;
  for (auto& v : vectors) {
    for (std::size_t j = 0; j < m; ++j) {
      v[j] -= out.mean[j];
      if (v[j] != 0.0) all_zero = false;
    }
  }
  out.degenerate = all_zero;
  out.vectors = std::move(vectors);
  return out;
}

Split split(const Dataset& ds, const PreprocessConfig& cfg) {
  const std::size_t n = ds.size();
  std::size_t n_train = 0;
  if (cfg.train_count) {
    if (*cfg.train_count > n)
      throw ParameterError("train_count " + std::to_string(*cfg.train_count) + " exceeds dataset size " +
                           std::to_string(n));
    n_train = *cfg.train_count;
  } else {
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
      throw ParameterError("split_fraction must lie in (0, 1)");
    n_train = static_cast<std::size_t>(std::llround(cfg.split_fraction * static_cast<double>(n)));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.order == SplitOrder::kShuffle) {
    SplitMix64 rng(cfg.split_seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }

  Split s;
  s.order = cfg.order;
  s.seed = cfg.split_seed;
  s.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  for (Dataset* part : {&s.train, &s.test}) {
    part->d = ds.d;
    part->provenance = ds.provenance;
  }
  s.train.name = ds.name + ":train";
  s.test.name = ds.name + ":test";
  s.train.points.reserve(n_train);
  s.test.points.reserve(n - n_train);
  for (auto i : s.train_indices) s.train.points.push_back(ds.points[i]);
  for (auto i : s.test_indices) s.test.points.push_back(ds.points[i]);
  return s;
}

std::string split_manifest_json(const Split& s) {
  nlohmann::json j;
  j["protocol"] = s.order == SplitOrder::kFileOrder ? "file_order" : "shuffle";
  j["seed"] = s.seed;
  j["train"] = s.train_indices;
  j["test"] = s.test_indices;
  return j.dump();
}

// ---- synthetic ----------------------------------------------------------------

Vector random_unit_vector(std::size_t d, SplitMix64& rng) {
  Vector v(d);
  double n = 0.0;
  while (n == 0.0) {
    for (double& x : v) x = rng.normal();
    n = norm2(v);
  }
  for (double& x : v) x /= n;
  return v;
}

Synthetic power_law_least_squares(std::size_t n, std::size_t d, double exponent,
                                  double residual_scale, double theta_norm, std::uint64_t seed) {
  if (n == 0 || d == 0) throw ParameterError("power_law_least_squares: empty shape");
  SplitMix64 rng(seed);
  Synthetic s;
  s.theta_star = scaled(random_unit_vector(d, rng), theta_norm);

  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{1});
  for (std::size_t i = n; i > 1; --i) std::swap(rank[i - 1], rank[rng.uniform_index(i)]);

  s.data.d = d;
  s.data.name = "power_law_lsq";
  s.data.provenance = "synthetic:power_law_least_squares(seed=" + std::to_string(seed) + ")";
  s.data.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = s.data.points[i];
    p.x = random_unit_vector(d, rng);
    const double r = residual_scale * std::pow(static_cast<double>(rank[i]), -exponent);
    p.y = dot(s.theta_star, p.x) + (rng.coin() ? r : -r);
  }
  return s;
}

Dataset uniform_gradient_least_squares(std::size_t n, std::span<const double> theta,
                                       double label_magnitude, std::uint64_t seed) {
  const std::size_t d = theta.size();
  if (n == 0 || n % 2 != 0) throw ParameterError("uniform_gradient_least_squares: n must be even");
  if (d < 3) throw ParameterError("uniform_gradient_least_squares: need d >= 3");
  SplitMix64 rng(seed);
  const double tn = norm2(theta);
  Dataset ds;
  ds.d = d;
  ds.name = "uniform_gradient_lsq";
  ds.provenance = "synthetic:uniform_gradient_least_squares(seed=" + std::to_string(seed) + ")";
  while (ds.points.size() < n) {
    Vector x = random_unit_vector(d, rng);
    if (tn > 0.0) {
      const double c = dot(x, theta) / (tn * tn);
      axpy(-c, theta, x);
      const double xn = norm2(x);
      if (xn < 1e-6) continue;
      for (double& v : x) v /= xn;
    }
    Vector mirrored = scaled(x, -1.0);
    ds.points.push_back({std::move(x), label_magnitude});
    ds.points.push_back({std::move(mirrored), label_magnitude});
  }
  return ds;
}

Dataset uniform_gradient_logistic(std::size_t n, std::span<const double> theta, std::uint64_t seed) {
  const std::size_t d = theta.size();
  if (n == 0 || n % 2 != 0) throw ParameterError("uniform_gradient_logistic: n must be even");
  if (d < 2) throw ParameterError("uniform_gradient_logistic: need d >= 2");
  const double tn = norm2(theta);
  if (tn == 0.0) throw ParameterError("uniform_gradient_logistic: theta must be nonzero");
  SplitMix64 rng(seed);
  Dataset ds;
  ds.d = d;
  ds.name = "uniform_gradient_logistic";
  ds.provenance = "synthetic:uniform_gradient_logistic(seed=" + std::to_string(seed) + ")";
  while (ds.points.size() < n) {
    Vector x = random_unit_vector(d, rng);
    axpy(-dot(x, theta) / (tn * tn), theta, x);
    const double xn = norm2(x);
    if (xn < 1e-6) continue;
    for (double& v : x) v /= xn;
    Vector mirrored = scaled(x, -1.0);
    ds.points.push_back({std::move(x), 1.0});
    ds.points.push_back({std::move(mirrored), 1.0});
  }
  return ds;
}

Synthetic random_logistic(std::size_t n, std::size_t d, double noise, std::uint64_t seed) {
  if (n == 0 || d == 0) throw ParameterError("random_logistic: empty shape");
  SplitMix64 rng(seed);
  Synthetic s;
  s.theta_star = scaled(random_unit_vector(d, rng), 3.0);
  s.data.d = d;
  s.data.name = "random_logistic";
  s.data.provenance = "synthetic:random_logistic(seed=" + std::to_string(seed) + ")";
  s.data.points.resize(n);
  for (auto& p : s.data.points) {
    p.x = random_unit_vector(d, rng);
    p.y = dot(s.theta_star, p.x) + noise * rng.normal() >= 0.0 ? 1.0 : -1.0;
  }
  return s;
}

}  // namespace lgd
