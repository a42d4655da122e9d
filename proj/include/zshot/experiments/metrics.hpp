#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "zshot/data/example.hpp"

namespace zshot::experiments {

using Tokens = std::vector<std::string>;

struct MetricsReport {
  double seq = 0.0;
  double tok = 0.0;
  std::optional<double> den;  // only with an executor
  int n_test = 0;
};

namespace detail {

inline void require_pairs(const std::vector<Tokens>& pred, const std::vector<Tokens>& gold,
                          const char* op) {
  if (pred.size() != gold.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(pred.size()) +
                                " predictions for " + std::to_string(gold.size()) + " golds");
  }
  if (pred.empty()) throw std::invalid_argument(std::string(op) + ": no pairs");
}

}  // namespace detail

/// Fraction of exact matches, EOS stripped from both sides.
inline double seq_accuracy(const std::vector<Tokens>& pred, const std::vector<Tokens>& gold) {
  detail::require_pairs(pred, gold, "seq_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    hits += data::strip_eos(pred[i]) == data::strip_eos(gold[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Positional matches over total gold length (micro average). Tokens past the
/// end of a prediction are misses; extra predicted tokens are not penalized.
inline double tok_accuracy(const std::vector<Tokens>& pred, const std::vector<Tokens>& gold) {
  detail::require_pairs(pred, gold, "tok_accuracy");
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = data::strip_eos(pred[i]);
    const auto g = data::strip_eos(gold[i]);
    total += g.size();
    for (std::size_t t = 0; t < std::min(p.size(), g.size()); ++t) hits += p[t] == g[t];
  }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace zshot::experiments
