#include "promptex/core_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "promptex/error.hpp"
#include "promptex/text.hpp"

namespace promptex {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  require(!values_.empty(), ErrorKind::empty_input, "embedding must have dimension >= 1");
  for (double v : values_) {
    require(std::isfinite(v), ErrorKind::invalid_argument, "embedding entries must be finite");
  }
}

double EmbeddingVector::norm() const noexcept {
  double sum = 0.0;
  for (double v : values_) sum += v * v;
  return std::sqrt(sum);
}

EmbeddingVector EmbeddingVector::normalized() const {
  const double n = norm();
  require(n > 0.0, ErrorKind::zero_norm, "cannot normalize a zero vector");
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i] / n;
  return EmbeddingVector(std::move(out));
}

namespace {

void check_same_dimension(std::span<const EmbeddingVector> embeddings) {
  for (const auto& e : embeddings) {
    if (e.dimension() != embeddings.front().dimension()) {
      fail(ErrorKind::dimension_mismatch,
           "embedding dimensions differ: " + std::to_string(e.dimension()) + " vs " +
               std::to_string(embeddings.front().dimension()));
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    fail(ErrorKind::dimension_mismatch, "cosine_similarity: dimensions " +
                                            std::to_string(a.dimension()) + " and " +
                                            std::to_string(b.dimension()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  require(na > 0.0 && nb > 0.0, ErrorKind::zero_norm, "cosine_similarity: zero-norm input");
  double c = dot(a.values(), b.values()) / (na * nb);
  // Rounding can push |c| a few ulps past 1.
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

double diversity_sigma(std::span<const EmbeddingVector> embeddings) {
  require(!embeddings.empty(), ErrorKind::empty_input, "diversity_sigma: empty embedding list");
  check_same_dimension(embeddings);
  const std::size_t n = embeddings.size();
  const std::size_t d = embeddings.front().dimension();
  bool all_equal = true;
  for (const auto& e : embeddings) all_equal = all_equal && e == embeddings.front();
  if (all_equal) return 0.0;

  std::vector<double> centroid(d, 0.0);
  for (const auto& e : embeddings) {
    for (std::size_t j = 0; j < d; ++j) centroid[j] += e[j];
  }
  for (double& c : centroid) c /= static_cast<double>(n);

  double sum_sq = 0.0;
  for (const auto& e : embeddings) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = e[j] - centroid[j];
      sum_sq += diff * diff;
    }
  }
  return sum_sq / static_cast<double>(n * d);
}

std::vector<std::size_t> posthoc_select(std::span<const EmbeddingVector> embeddings,
                                        std::size_t k) {
  const std::size_t n = embeddings.size();
  require(k >= 1, ErrorKind::invalid_argument, "posthoc_select: k must be >= 1");
  if (k > n) {
    fail(ErrorKind::invalid_argument, "posthoc_select: k=" + std::to_string(k) +
                                          " exceeds n=" + std::to_string(n));
  }
  check_same_dimension(embeddings);

  // For a subset S, sum_i ||e_i - mean||^2 = sum_i G_ii - (1/k) sum_{i,j} G_ij,
  // so every subset is scored from the Gram matrix without touching vectors.
  std::vector<double> gram(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double g = dot(embeddings[i].values(), embeddings[j].values());
      gram[i * n + j] = g;
      gram[j * n + i] = g;
    }
  }

  std::vector<std::size_t> combo(k);
  std::iota(combo.begin(), combo.end(), std::size_t{0});
  std::vector<std::size_t> best = combo;
  double best_score = -1.0;

  const auto score = [&](const std::vector<std::size_t>& s) {
    double diag = 0.0;
    double total = 0.0;
    for (std::size_t a = 0; a < s.size(); ++a) {
      diag += gram[s[a] * n + s[a]];
      total += gram[s[a] * n + s[a]];
      for (std::size_t b = a + 1; b < s.size(); ++b) total += 2.0 * gram[s[a] * n + s[b]];
    }
    return diag - total / static_cast<double>(s.size());
  };

  while (true) {
    const double s = score(combo);
    // Combinations are visited in lexicographic order, so only a strictly
    // larger score may replace the incumbent.
    if (s > best_score + 1e-12 * std::max(1.0, std::abs(best_score))) {
      best_score = s;
      best = combo;
    }
    std::size_t i = k;
    while (i > 0 && combo[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++combo[i - 1];
    for (std::size_t j = i; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }
  return best;
}

double repetition_rate(std::span<const std::string> prompts) {
  require(!prompts.empty(), ErrorKind::empty_input, "repetition_rate: empty prompt list");
  std::set<std::pair<std::string, std::string>> distinct;
  std::size_t total = 0;
  for (const auto& prompt : prompts) {
    const auto tokens = text::tokenize(prompt);
    require(!tokens.empty(), ErrorKind::invalid_argument,
            "repetition_rate: prompt has no tokens");
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      distinct.emplace(tokens[i - 1], tokens[i]);
      ++total;
    }
  }
  require(total > 0, ErrorKind::invalid_argument, "repetition_rate: no token bigrams");
  return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
}

MetricsSummary aggregate_stats(std::span<const double> values) {
  require(!values.empty(), ErrorKind::empty_input, "aggregate_stats: empty value list");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0.0;
  bool all_equal = true;
  for (double v : values) {
    sq += (v - mean) * (v - mean);
    all_equal = all_equal && v == values.front();
  }
  // Identical inputs must report exactly zero spread, which the mean's
  // rounding would otherwise break.
  const double spread = all_equal ? 0.0 : std::sqrt(sq / n);
  return MetricsSummary{all_equal ? values.front() : mean, spread, values.size()};
}

}  // namespace promptex
