#include "adabatch/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "adabatch/rng.hpp"

namespace adabatch {

double SparseRow::dot(const Eigen::VectorXd& x) const {
  double s = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) s += values[k] * x[indices[k]];
  return s;
}

void SparseRow::axpy(double alpha, Eigen::VectorXd& y) const {
  for (std::size_t k = 0; k < indices.size(); ++k)
    y[indices[k]] += alpha * values[k];
}

double SparseRow::squared_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

Dataset::Dataset(std::vector<SparseRow> rows, std::vector<double> labels,
                 std::size_t dim)
    : rows_(std::move(rows)), labels_(std::move(labels)), dim_(dim) {
  if (rows_.empty()) throw std::invalid_argument("dataset must have n >= 1");
  if (dim_ == 0) throw std::invalid_argument("dataset must have d >= 1");
  if (labels_.size() != rows_.size())
    throw std::invalid_argument("labels length differs from row count");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (r.indices.size() != r.values.size())
      throw std::invalid_argument(fmt::format("row {}: index/value size mismatch", i));
    for (std::size_t k = 0; k < r.indices.size(); ++k) {
      if (r.indices[k] >= dim_)
        throw std::invalid_argument(fmt::format("row {}: index {} >= d={}", i, r.indices[k], dim_));
      if (k > 0 && r.indices[k] <= r.indices[k - 1])
        throw std::invalid_argument(fmt::format("row {}: indices not strictly increasing", i));
    }
  }
}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\v\f";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

double parse_real(std::string_view tok, std::size_t line) {
  // from_chars does not accept a leading '+', which LIBSVM labels often carry.
  std::string_view body = tok;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
  if (body.empty() || ec != std::errc() || ptr != body.data() + body.size() || !std::isfinite(v))
    throw ParseError(fmt::format("line {}: malformed number '{}'", line, tok), line);
  return v;
}

std::size_t parse_index(std::string_view tok, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(fmt::format("line {}: malformed index '{}'", line, tok), line);
  if (v == 0)
    throw ParseError(fmt::format("line {}: indices are 1-based, got 0", line), line);
  return v;
}

}  // namespace

Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> dim_override) {
  std::vector<SparseRow> rows;
  std::vector<double> labels;
  std::size_t max_index = 0;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    std::vector<std::string_view> tokens;
    std::size_t pos = 0;
    while (pos < line.size()) {
      const auto b = line.find_first_not_of(" \t", pos);
      if (b == std::string_view::npos) break;
      auto e = line.find_first_of(" \t", b);
      if (e == std::string_view::npos) e = line.size();
      tokens.push_back(line.substr(b, e - b));
      pos = e;
    }

    labels.push_back(parse_real(tokens.front(), line_no));
    SparseRow row;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto tok = tokens[t];
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(fmt::format("line {}: expected <index>:<value>, got '{}'", line_no, tok), line_no);
      const std::size_t idx = parse_index(tok.substr(0, colon), line_no);
      const double val = parse_real(tok.substr(colon + 1), line_no);
      if (!row.indices.empty() && idx - 1 <= row.indices.back())
        throw ParseError(fmt::format("line {}: non-increasing index {}", line_no, idx), line_no);
      row.indices.push_back(idx - 1);
      row.values.push_back(val);
      max_index = std::max(max_index, idx);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("empty file: no data lines", 0);

  std::size_t dim = max_index;
  if (dim_override) {
    if (*dim_override < max_index)
      throw ParseError(fmt::format("index {} exceeds dimension override {}", max_index, *dim_override), 0);
    dim = *dim_override;
  }
  if (dim == 0) throw ParseError("no features present; supply a dimension override", 0);
  return Dataset(std::move(rows), std::move(labels), dim);
}

Dataset parse_libsvm(const std::string& text, std::optional<std::size_t> dim_override) {
  std::istringstream in(text);
  return parse_libsvm(in, dim_override);
}

Dataset read_libsvm_file(const std::filesystem::path& path,
                         std::optional<std::size_t> dim_override) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  return parse_libsvm(in, dim_override);
}

void write_libsvm(std::ostream& out, const Dataset& ds) {
  for (std::size_t i = 0; i < ds.n(); ++i) {
    out << fmt::format("{}", ds.label(i));
    const auto& r = ds.row(i);
    for (std::size_t k = 0; k < r.nnz(); ++k)
      out << fmt::format(" {}:{}", r.indices[k] + 1, r.values[k]);
    out << '\n';
  }
}

std::string to_libsvm(const Dataset& ds) {
  std::ostringstream out;
  write_libsvm(out, ds);
  return out.str();
}

Dataset normalize_rows(const Dataset& ds) {
  std::vector<SparseRow> rows = ds.rows();
  for (auto& r : rows) {
    const double norm = std::sqrt(r.squared_norm());
    if (norm > 0.0)
      for (double& v : r.values) v /= norm;
  }
  return Dataset(std::move(rows), ds.labels(), ds.d());
}

// ---------------------------------------------------------------------------

Partitioning::Partitioning(std::vector<std::vector<std::size_t>> sets,
                           std::vector<double> probs)
    : sets_(std::move(sets)), probs_(std::move(probs)) {
  if (sets_.empty()) throw std::invalid_argument("partitioning needs at least one set");
  if (probs_.size() != sets_.size())
    throw std::invalid_argument("one probability per set is required");
  std::size_t n = 0;
  for (const auto& s : sets_) {
    if (s.empty()) throw std::invalid_argument("partition sets must be nonempty");
    n += s.size();
  }
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  owner_.assign(n, unset);
  for (std::size_t j = 0; j < sets_.size(); ++j) {
    for (std::size_t i : sets_[j]) {
      if (i >= n || owner_[i] != unset)
        throw std::invalid_argument("partition sets must be a disjoint cover of {0..n-1}");
      owner_[i] = j;
    }
  }
  double total = 0.0;
  for (double q : probs_) {
    if (!(q > 0.0)) throw std::invalid_argument("partition probabilities must be positive");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument(fmt::format("partition probabilities sum to {}, not 1", total));
}

Partitioning Partitioning::single(std::size_t n) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return Partitioning({std::move(all)}, {1.0});
}

std::size_t Partitioning::min_set_size() const {
  std::size_t m = sets_.front().size();
  for (const auto& s : sets_) m = std::min(m, s.size());
  return m;
}

Partitioning make_partitioning(std::size_t n, const PartitionSpec& spec) {
  if (n == 0) throw std::invalid_argument("cannot partition an empty index set");
  std::vector<std::size_t> sizes = spec.sizes;
  if (sizes.empty()) {
    const std::size_t k = spec.blocks;
    if (k == 0) throw std::invalid_argument("number of partitions must be >= 1");
    if (k > n) throw std::invalid_argument(fmt::format("cannot split n={} into K={} partitions", n, k));
    sizes.assign(k, n / k);
    for (std::size_t j = 0; j < n % k; ++j) ++sizes[j];
  } else {
    for (std::size_t s : sizes)
      if (s < 1) throw std::invalid_argument("partition sizes must be >= 1");
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != n)
      throw std::invalid_argument(fmt::format("partition sizes do not sum to n={}", n));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (spec.shuffle) {
    Rng rng(spec.shuffle_seed);
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_index(i + 1)]);
  }

  std::vector<std::vector<std::size_t>> sets;
  std::size_t cursor = 0;
  for (std::size_t s : sizes) {
    std::vector<std::size_t> block(order.begin() + cursor, order.begin() + cursor + s);
    std::sort(block.begin(), block.end());
    sets.push_back(std::move(block));
    cursor += s;
  }

  std::vector<double> probs = spec.probs;
  if (probs.empty()) {
    for (std::size_t s : sizes) probs.push_back(static_cast<double>(s) / static_cast<double>(n));
  } else if (probs.size() != sizes.size()) {
    throw std::invalid_argument("number of partition probabilities differs from number of partitions");
  }
  return Partitioning(std::move(sets), std::move(probs));
}

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0 || spec.d == 0) throw std::invalid_argument("synthetic instance needs n, d >= 1");
  if (!(spec.noise >= 0.0)) throw std::invalid_argument("label noise must be non-negative");
  if (!std::isfinite(spec.signal)) throw std::invalid_argument("signal scale must be finite");
  Rng rng(spec.seed);
  const auto d = static_cast<Eigen::Index>(spec.d);
  Eigen::VectorXd x_bar(d);
  for (Eigen::Index k = 0; k < d; ++k) x_bar[k] = spec.signal * rng.normal();

  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d));
  std::vector<SparseRow> rows(spec.n);
  std::vector<double> labels(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto& row = rows[i];
    double sq = 0.0;
    for (std::size_t k = 0; k < spec.d; ++k) {
      const double v = scale * rng.normal();
      row.indices.push_back(k);
      row.values.push_back(v);
      sq += v * v;
    }
    if (spec.normalize && sq > 0.0)
      for (double& v : row.values) v /= std::sqrt(sq);
    labels[i] = row.dot(x_bar);
  }
  if (spec.noise > 0.0)
    for (double& b : labels) b += spec.noise * rng.normal();
  return {Dataset(std::move(rows), std::move(labels), spec.d), std::move(x_bar)};
}

}  // namespace adabatch
