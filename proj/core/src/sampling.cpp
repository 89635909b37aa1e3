#include "adabatch/sampling.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace adabatch {

std::string to_string(SamplingVariant v) {
  switch (v) {
    case SamplingVariant::nice: return "nice";
    case SamplingVariant::independent: return "independent";
    case SamplingVariant::partition_nice: return "pnice";
    case SamplingVariant::partition_independent: return "pindependent";
  }
  return "?";
}

SamplingVariant variant_from_string(const std::string& name) {
  if (name == "nice") return SamplingVariant::nice;
  if (name == "independent") return SamplingVariant::independent;
  if (name == "pnice" || name == "partition_nice") return SamplingVariant::partition_nice;
  if (name == "pindependent" || name == "partition_independent")
    return SamplingVariant::partition_independent;
  throw std::invalid_argument(fmt::format("unknown sampling '{}'", name));
}

SamplingStrategy::SamplingStrategy(SamplingVariant v, std::shared_ptr<const Partitioning> part,
                                   std::vector<double> probs, std::size_t tau)
    : variant_(v), part_(std::move(part)), probs_(std::move(probs)), tau_(tau) {
  validate();
}

SamplingStrategy SamplingStrategy::nice(std::size_t n, std::size_t tau) {
  return {SamplingVariant::nice, std::make_shared<const Partitioning>(Partitioning::single(n)), {}, tau};
}

SamplingStrategy SamplingStrategy::independent(std::size_t n, std::size_t tau) {
  return {SamplingVariant::independent, std::make_shared<const Partitioning>(Partitioning::single(n)),
          {}, tau};
}

SamplingStrategy SamplingStrategy::independent(std::vector<double> probs, std::size_t tau) {
  const std::size_t n = probs.size();
  return {SamplingVariant::independent, std::make_shared<const Partitioning>(Partitioning::single(n)),
          std::move(probs), tau};
}

SamplingStrategy SamplingStrategy::partition_nice(Partitioning part, std::size_t tau) {
  return {SamplingVariant::partition_nice, std::make_shared<const Partitioning>(std::move(part)), {}, tau};
}

SamplingStrategy SamplingStrategy::partition_independent(Partitioning part, std::size_t tau) {
  return {SamplingVariant::partition_independent, std::make_shared<const Partitioning>(std::move(part)),
          {}, tau};
}

SamplingStrategy SamplingStrategy::partition_independent(Partitioning part, std::vector<double> probs,
                                                         std::size_t tau) {
  return {SamplingVariant::partition_independent, std::make_shared<const Partitioning>(std::move(part)),
          std::move(probs), tau};
}

SamplingStrategy SamplingStrategy::make(SamplingVariant v, Partitioning part, std::size_t tau) {
  const std::size_t n = part.n();
  switch (v) {
    case SamplingVariant::nice: return nice(n, tau);
    case SamplingVariant::independent: return independent(n, tau);
    case SamplingVariant::partition_nice: return partition_nice(std::move(part), tau);
    case SamplingVariant::partition_independent: return partition_independent(std::move(part), tau);
  }
  throw std::invalid_argument("unknown sampling variant");
}

void SamplingStrategy::validate() const {
  const auto& part = *part_;
  if (tau_ < 1) throw std::invalid_argument("batch size tau must be >= 1");
  if (tau_ > part.min_set_size())
    throw std::invalid_argument(fmt::format("tau={} exceeds the smallest partition size {}", tau_,
                                            part.min_set_size()));
  if (probs_.empty()) return;
  if (is_nice()) throw std::invalid_argument("inclusion probabilities only apply to independent sampling");
  if (probs_.size() != part.n())
    throw std::invalid_argument("one inclusion probability per example is required");
  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    double sum = 0.0;
    for (std::size_t i : part.set(j)) {
      const double p = probs_[i];
      if (!(p > 0.0 && p <= 1.0))
        throw std::invalid_argument(fmt::format("inclusion probability p_{}={} outside (0,1]", i, p));
      sum += p;
    }
    if (std::abs(sum - static_cast<double>(tau_)) > 1e-12 * std::max(1.0, static_cast<double>(tau_)))
      throw std::invalid_argument(fmt::format("inclusion probabilities of set {} sum to {}, expected tau={}",
                                              j, sum, tau_));
  }
}

double SamplingStrategy::inclusion_prob(std::size_t i) const {
  if (!probs_.empty()) return probs_[i];
  return static_cast<double>(tau_) / static_cast<double>(part_->set_size(part_->owner(i)));
}

double SamplingStrategy::weight(std::size_t i) const {
  const std::size_t j = part_->owner(i);
  const double q = part_->prob(j);
  if (is_nice())
    return static_cast<double>(part_->set_size(j)) / (q * static_cast<double>(tau_));
  return 1.0 / (q * inclusion_prob(i));
}

std::size_t SamplingStrategy::max_tau() const { return part_->min_set_size(); }

SamplingStrategy SamplingStrategy::with_tau(std::size_t tau) const {
  if (!probs_.empty())
    throw std::invalid_argument("cannot rescale explicit inclusion probabilities to a new tau");
  return {variant_, part_, {}, tau};
}

namespace {

std::size_t pick_set(const Partitioning& part, Rng& rng) {
  if (part.num_sets() == 1) return 0;
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < part.num_sets(); ++j) {
    acc += part.prob(j);
    if (u < acc) return j;
  }
  return part.num_sets() - 1;
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i)
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

}  // namespace

SampleDraw draw(const SamplingStrategy& s, Rng& rng) {
  const auto& part = s.partitioning();
  const std::size_t j = pick_set(part, rng);
  const auto& set = part.set(j);
  SampleDraw out;
  if (s.is_nice()) {
    // Partial Fisher-Yates: the first tau slots become a uniform subset.
    std::vector<std::size_t> pool = set;
    const std::size_t tau = s.tau();
    for (std::size_t k = 0; k < tau; ++k) {
      const std::size_t r = k + rng.uniform_index(pool.size() - k);
      std::swap(pool[k], pool[r]);
    }
    out.indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(tau));
    std::sort(out.indices.begin(), out.indices.end());
  } else {
    for (std::size_t i : set)
      if (rng.uniform01() < s.inclusion_prob(i)) out.indices.push_back(i);
  }
  out.weights.reserve(out.indices.size());
  for (std::size_t i : out.indices) out.weights.push_back(s.weight(i));
  return out;
}

Eigen::VectorXd stochastic_gradient(const Objective& obj, const SampleDraw& draw,
                                    const Eigen::VectorXd& x) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.d()));
  const double inv_n = 1.0 / static_cast<double>(obj.n());
  for (std::size_t k = 0; k < draw.indices.size(); ++k)
    obj.add_component_gradient(draw.indices[k], x, inv_n * draw.weights[k], g);
  return g;
}

double support_size(const SamplingStrategy& s) {
  const auto& part = s.partitioning();
  double total = 0.0;
  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    const std::size_t m = part.set_size(j);
    total += s.is_nice() ? binomial(m, s.tau()) : std::ldexp(1.0, static_cast<int>(m));
  }
  return total;
}

std::vector<WeightedDraw> enumerate(const SamplingStrategy& s) {
  const double count = support_size(s);
  if (count > kEnumerationLimit)
    throw EnumerationLimitError(fmt::format(
        "sampling support has {:.0f} outcomes (limit {:.0f}); use a smaller instance or Monte Carlo",
        count, kEnumerationLimit));

  const auto& part = s.partitioning();
  std::vector<WeightedDraw> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    const auto& set = part.set(j);
    const std::size_t m = set.size();
    const double q = part.prob(j);
    if (s.is_nice()) {
      const std::size_t tau = s.tau();
      const double p = q / binomial(m, tau);
      std::vector<std::size_t> pos(tau);
      for (std::size_t k = 0; k < tau; ++k) pos[k] = k;
      while (true) {
        WeightedDraw wd{{}, p};
        for (std::size_t k : pos) {
          wd.draw.indices.push_back(set[k]);
          wd.draw.weights.push_back(s.weight(set[k]));
        }
        out.push_back(std::move(wd));
        // Next combination in lexicographic order.
        std::size_t k = tau;
        while (k > 0 && pos[k - 1] == m - tau + (k - 1)) --k;
        if (k == 0) break;
        ++pos[k - 1];
        for (std::size_t t = k; t < tau; ++t) pos[t] = pos[t - 1] + 1;
      }
    } else {
      const std::uint64_t subsets = std::uint64_t{1} << m;
      for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        WeightedDraw wd{{}, q};
        for (std::size_t k = 0; k < m; ++k) {
          const double pi = s.inclusion_prob(set[k]);
          if (mask & (std::uint64_t{1} << k)) {
            wd.probability *= pi;
            wd.draw.indices.push_back(set[k]);
            wd.draw.weights.push_back(s.weight(set[k]));
          } else {
            wd.probability *= 1.0 - pi;
          }
        }
        out.push_back(std::move(wd));
      }
    }
  }
  return out;
}

double expected_cardinality(const SamplingStrategy& s) {
  if (s.is_nice()) return static_cast<double>(s.tau());
  const auto& part = s.partitioning();
  double total = 0.0;
  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    double inner = 0.0;
    for (std::size_t i : part.set(j)) inner += s.inclusion_prob(i);
    total += part.prob(j) * inner;
  }
  return total;
}

}  // namespace adabatch
