#pragma once

/**
 * @file core_metrics.hpp
 * @brief Embedding similarity, diversity, subset selection, repetition and
 * summary statistics.
 *
 * Definitions used throughout the evaluation code:
 *
 * - diversity sigma_p = (1 / (n * d)) * sum_i ||e_i - mean||^2, the trace of
 *   the population covariance divided by the dimension.
 * - repetition r = 1 - distinct_bigrams / total_bigrams over the token
 *   bigrams of all prompts pooled together (text::tokenize tokenization).
 *
 * All functions are pure.
 */

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace promptex {

// Fixed-dimension real vector. Construction rejects non-finite entries and
// the empty vector.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);
  EmbeddingVector(std::initializer_list<double> values)
      : EmbeddingVector(std::vector<double>(values)) {}

  std::size_t dimension() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double norm() const noexcept;
  EmbeddingVector normalized() const;

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

struct MetricsSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;

  bool operator==(const MetricsSummary&) const = default;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

double diversity_sigma(std::span<const EmbeddingVector> embeddings);

// Exhaustive search over all k-subsets for the one with the largest
// diversity_sigma. Ties go to the lexicographically smallest index tuple.
// Returned indices are ascending.
std::vector<std::size_t> posthoc_select(std::span<const EmbeddingVector> embeddings,
                                        std::size_t k);

double repetition_rate(std::span<const std::string> prompts);

MetricsSummary aggregate_stats(std::span<const double> values);

}  // namespace promptex
