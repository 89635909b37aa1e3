#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace adabatch {

/// Error raised for malformed LIBSVM input. `line()` is 1-based, 0 when the
/// problem is not tied to a specific line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Sparse feature vector with strictly increasing 0-based indices.
struct SparseRow {
  std::vector<std::size_t> indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return indices.size(); }
  double dot(const Eigen::VectorXd& x) const;
  /// y += alpha * row
  void axpy(double alpha, Eigen::VectorXd& y) const;
  double squared_norm() const;

  friend bool operator==(const SparseRow&, const SparseRow&) = default;
};

class Dataset {
 public:
  /// Validates the invariants; throws std::invalid_argument on violation.
  Dataset(std::vector<SparseRow> rows, std::vector<double> labels,
          std::size_t dim);

  std::size_t n() const noexcept { return rows_.size(); }
  std::size_t d() const noexcept { return dim_; }
  const SparseRow& row(std::size_t i) const { return rows_[i]; }
  const std::vector<SparseRow>& rows() const noexcept { return rows_; }
  double label(std::size_t i) const { return labels_[i]; }
  const std::vector<double>& labels() const noexcept { return labels_; }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<SparseRow> rows_;
  std::vector<double> labels_;
  std::size_t dim_;
};

/// Parses `<label> <idx>:<val> ...` lines with 1-based indices. Blank lines
/// and `#` comments (whole-line or trailing) are skipped. The dimension is
/// the largest index seen unless `dim_override` is given, in which case every
/// index must fit inside it.
Dataset parse_libsvm(std::istream& in,
                     std::optional<std::size_t> dim_override = std::nullopt);
Dataset parse_libsvm(const std::string& text,
                     std::optional<std::size_t> dim_override = std::nullopt);
Dataset read_libsvm_file(const std::filesystem::path& path,
                         std::optional<std::size_t> dim_override = std::nullopt);

/// Writes the dataset in LIBSVM format with round-trip exact values.
void write_libsvm(std::ostream& out, const Dataset& ds);
std::string to_libsvm(const Dataset& ds);

/// Scales every nonzero row to unit Euclidean norm.
Dataset normalize_rows(const Dataset& ds);

// ---------------------------------------------------------------------------

/// Disjoint cover of {0..n-1} with per-set selection probabilities.
class Partitioning {
 public:
  Partitioning(std::vector<std::vector<std::size_t>> sets,
               std::vector<double> probs);

  /// One set containing every index, probability 1.
  static Partitioning single(std::size_t n);

  std::size_t num_sets() const noexcept { return sets_.size(); }
  std::size_t n() const noexcept { return owner_.size(); }
  const std::vector<std::size_t>& set(std::size_t j) const { return sets_[j]; }
  const std::vector<std::vector<std::size_t>>& sets() const noexcept {
    return sets_;
  }
  std::size_t set_size(std::size_t j) const { return sets_[j].size(); }
  double prob(std::size_t j) const { return probs_[j]; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  /// q_j * (n_j - 1)
  double e(std::size_t j) const {
    return probs_[j] * static_cast<double>(sets_[j].size() - 1);
  }
  std::size_t owner(std::size_t i) const { return owner_[i]; }
  std::size_t min_set_size() const;

  friend bool operator==(const Partitioning&, const Partitioning&) = default;

 private:
  std::vector<std::vector<std::size_t>> sets_;
  std::vector<double> probs_;
  std::vector<std::size_t> owner_;
};

struct PartitionSpec {
  /// Number of near-equal contiguous blocks; ignored when `sizes` is set.
  std::size_t blocks = 1;
  std::vector<std::size_t> sizes;
  /// Explicit selection probabilities; default is n_j / n.
  std::vector<double> probs;
  /// Assign indices to blocks after a seeded shuffle instead of contiguously.
  bool shuffle = false;
  std::uint64_t shuffle_seed = 0;
};

Partitioning make_partitioning(std::size_t n, const PartitionSpec& spec);

// ---------------------------------------------------------------------------

/// Dense Gaussian design with labels b_i = a_i'x_bar + noise * N(0,1), where
/// x_bar = signal * N(0, I). signal = noise = 0 gives b = 0, so every
/// regularized component is minimized at the origin (exact interpolation).
struct SyntheticSpec {
  std::size_t n = 100;
  std::size_t d = 20;
  double noise = 0.0;
  double signal = 1.0;
  std::uint64_t seed = 0;
  /// Rescale rows to unit norm before labels are generated.
  bool normalize = false;
};

struct SyntheticData {
  Dataset data;
  Eigen::VectorXd x_bar;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace adabatch
