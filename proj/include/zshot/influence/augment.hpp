#pragma once

// Augmentation distributions built from repeated flip-detection trials.
// p weights a source-domain example by how many trials put it in their top-k
// list; the complement weights it by how many trials did not, renormalized.

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zshot/data/example.hpp"
#include "zshot/data/random.hpp"

namespace zshot::influence {

struct FlipTrial {
  double fraction = 0.0;
  std::vector<std::string> ranked_ids;  // most suspicious first
  std::size_t top_k = 0;
};

struct AugDistribution {
  std::vector<std::string> support;  // distinct ids, sorted
  std::vector<double> weights;       // sums to 1
  int trial_count = 0;
};

struct AugDistributions {
  AugDistribution p;
  AugDistribution complement;  // "1 - p"
  std::vector<int> appearances;  // per support id
};

namespace detail {

inline AugDistribution normalized(const std::vector<std::string>& support,
                                  const std::vector<double>& mass, int trials, const char* what) {
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument(std::string("build_aug_distribution: ") + what);
  AugDistribution d{support, {}, trials};
  for (double m : mass) d.weights.push_back(m / total);
  return d;
}

}  // namespace detail

/// `source_ids` is the support: the source-domain examples that can be drawn.
/// Ids in a top-k list that are outside the support are ignored.
inline AugDistributions build_aug_distribution(const std::vector<FlipTrial>& trials,
                                               const std::vector<std::string>& source_ids) {
  if (trials.empty()) throw std::invalid_argument("build_aug_distribution: no trials");
  const std::set<std::string> unique(source_ids.begin(), source_ids.end());
  if (unique.size() != source_ids.size()) {
    throw std::invalid_argument("build_aug_distribution: duplicate support ids");
  }
  std::map<std::string, int> count;
  for (const auto& id : unique) count[id] = 0;
  for (const auto& t : trials) {
    if (t.top_k > t.ranked_ids.size()) {
      throw std::invalid_argument("build_aug_distribution: top_k exceeds ranking length");
    }
    for (std::size_t i = 0; i < t.top_k; ++i) {
      if (auto it = count.find(t.ranked_ids[i]); it != count.end()) ++it->second;
    }
  }
  const int n = static_cast<int>(trials.size());
  AugDistributions out;
  std::vector<std::string> support;
  std::vector<double> hits, misses;
  for (const auto& [id, c] : count) {
    support.push_back(id);
    out.appearances.push_back(c);
    hits.push_back(c);
    misses.push_back(n - c);
  }
  out.p = detail::normalized(support, hits, n, "no support example appears in any top-k list");
  out.complement = detail::normalized(support, misses, n, "every support example appears in every top-k list");
  return out;
}

struct AugSample {
  std::vector<std::string> draws;          // raw draws, with repeats
  std::map<std::string, int> draw_counts;  // id -> times drawn
  std::vector<std::string> unique_ids;     // deduplicated, first-draw order
};

/// `n` i.i.d. draws with replacement by inverse CDF.
inline AugSample sample_augmentation(const AugDistribution& dist, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_augmentation: n must be >= 1");
  if (dist.support.empty() || dist.support.size() != dist.weights.size()) {
    throw std::invalid_argument("sample_augmentation: malformed distribution");
  }
  std::vector<double> cdf(dist.weights.size());
  std::partial_sum(dist.weights.begin(), dist.weights.end(), cdf.begin());
  auto rng = data::make_rng(seed, 0xA06u);
  AugSample s;
  for (int i = 0; i < n; ++i) {
    // upper_bound skips zero-weight entries: their cdf equals their predecessor's.
    const double u = data::uniform_unit(rng) * cdf.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const auto& id = dist.support[std::min(k, cdf.size() - 1)];
    s.draws.push_back(id);
    if (s.draw_counts[id]++ == 0) s.unique_ids.push_back(id);
  }
  return s;
}

/// Examples of `pool` named by `ids`, in `ids` order.
inline std::vector<data::Example> select_examples(const std::vector<data::Example>& pool,
                                                  const std::vector<std::string>& ids) {
  std::map<std::string, const data::Example*> by_id;
  for (const auto& e : pool) by_id.emplace(e.id, &e);
  std::vector<data::Example> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::invalid_argument("unknown example id: " + id);
    out.push_back(*it->second);
  }
  return out;
}

/// One JSON object per sampled id: {"id", "draws"}.
inline void write_aug_manifest(std::ostream& out, const AugSample& s) {
  for (const auto& id : s.unique_ids) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["draws"] = s.draw_counts.at(id);
    out << j.dump() << '\n';
  }
}

}  // namespace zshot::influence
