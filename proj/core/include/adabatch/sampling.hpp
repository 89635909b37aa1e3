#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "adabatch/dataset.hpp"
#include "adabatch/objectives.hpp"
#include "adabatch/rng.hpp"

namespace adabatch {

enum class SamplingVariant { nice, independent, partition_nice, partition_independent };

std::string to_string(SamplingVariant v);
/// Accepts `nice`, `independent`, `pnice`, `pindependent` and the long
/// `partition_*` spellings.
SamplingVariant variant_from_string(const std::string& name);

/// Realized mini-batch: indices S and unbiasing weights v_i (zero off S).
struct SampleDraw {
  std::vector<std::size_t> indices;
  std::vector<double> weights;

  std::size_t size() const noexcept { return indices.size(); }
};

/// One of the four mini-batch laws, parameterized by the batch size tau.
///
/// Non-partition variants carry a single-set partitioning with q = 1, so every
/// formula can be written once in its partition form. For the independent
/// variants, inclusion probabilities default to p_i = tau / n_Cj; explicit
/// probabilities must sum to tau within each set.
class SamplingStrategy {
 public:
  static SamplingStrategy nice(std::size_t n, std::size_t tau);
  static SamplingStrategy independent(std::size_t n, std::size_t tau);
  static SamplingStrategy independent(std::vector<double> probs, std::size_t tau);
  static SamplingStrategy partition_nice(Partitioning part, std::size_t tau);
  static SamplingStrategy partition_independent(Partitioning part, std::size_t tau);
  static SamplingStrategy partition_independent(Partitioning part, std::vector<double> probs,
                                                std::size_t tau);
  /// Builds a strategy of the given family with default probabilities.
  static SamplingStrategy make(SamplingVariant v, Partitioning part, std::size_t tau);

  SamplingVariant variant() const noexcept { return variant_; }
  std::size_t tau() const noexcept { return tau_; }
  std::size_t n() const noexcept { return part_->n(); }
  const Partitioning& partitioning() const noexcept { return *part_; }
  bool is_nice() const noexcept {
    return variant_ == SamplingVariant::nice || variant_ == SamplingVariant::partition_nice;
  }
  bool has_default_probs() const noexcept { return probs_.empty(); }
  /// Inclusion probability p_i (independent variants only).
  double inclusion_prob(std::size_t i) const;
  /// Weight v_i assigned to i when it lands in the batch.
  double weight(std::size_t i) const;

  /// Largest feasible tau for this family.
  std::size_t max_tau() const;
  /// Same family and partitioning, new batch size. Requires default probs.
  SamplingStrategy with_tau(std::size_t tau) const;

 private:
  SamplingStrategy(SamplingVariant v, std::shared_ptr<const Partitioning> part,
                   std::vector<double> probs, std::size_t tau);
  void validate() const;

  SamplingVariant variant_;
  std::shared_ptr<const Partitioning> part_;
  std::vector<double> probs_;
  std::size_t tau_;
};

SampleDraw draw(const SamplingStrategy& s, Rng& rng);

/// g = (1/n) sum_{i in S} v_i grad f_i(x)
Eigen::VectorXd stochastic_gradient(const Objective& obj, const SampleDraw& draw,
                                    const Eigen::VectorXd& x);

struct WeightedDraw {
  SampleDraw draw;
  double probability;
};

/// Support size above which enumeration refuses to run.
inline constexpr double kEnumerationLimit = 1e6;

class EnumerationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of outcomes `enumerate` would produce.
double support_size(const SamplingStrategy& s);
/// Full support with probabilities. Throws EnumerationLimitError past the limit.
std::vector<WeightedDraw> enumerate(const SamplingStrategy& s);

double expected_cardinality(const SamplingStrategy& s);

}  // namespace adabatch
