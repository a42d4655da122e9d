#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "zshot/data/corpus.hpp"
#include "zshot/data/example.hpp"
#include "zshot/data/random.hpp"

namespace zshot::data {

/// Per-domain nested samples: for each size s, the first s examples of every
/// domain's seeded shuffle. Larger sizes therefore contain smaller ones.
inline std::map<int, std::vector<Example>> sample_subsets(const std::vector<Example>& examples,
                                                          const std::vector<int>& sizes,
                                                          std::uint64_t seed,
                                                          const DomainRegistry* names = nullptr) {
  if (!std::is_sorted(sizes.begin(), sizes.end())) {
    throw std::invalid_argument("sample_subsets: sizes must be ascending");
  }
  std::map<int, std::vector<Example>> by_domain;
  for (const auto& e : examples) by_domain[e.domain.index].push_back(e);
  for (auto& [dom, list] : by_domain) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(dom));
    shuffle(list, rng);
  }
  std::map<int, std::vector<Example>> out;
  for (int size : sizes) {
    if (size < 0) throw std::invalid_argument("sample_subsets: negative size");
    auto& subset = out[size];
    for (const auto& [dom, list] : by_domain) {
      if (static_cast<std::size_t>(size) > list.size()) {
        const std::string name = names ? names->name(TaskId{dom}) : std::to_string(dom);
        throw std::invalid_argument("sample_subsets: domain " + name + " has only " +
                                    std::to_string(list.size()) + " examples, " +
                                    std::to_string(size) + " requested");
      }
      subset.insert(subset.end(), list.begin(), list.begin() + size);
    }
  }
  return out;
}

/// First `n` examples of `domain` under the seeded shuffle used by sample_subsets.
inline std::vector<Example> sample_domain(const std::vector<Example>& examples, TaskId domain,
                                          int n, std::uint64_t seed,
                                          const DomainRegistry* names = nullptr) {
  auto subsets = sample_subsets(filter_domain(examples, domain), {n}, seed, names);
  return subsets[n];
}

struct FlipResult {
  std::vector<Example> examples;
  std::set<std::string> flipped_ids;
  std::vector<FlipRecord> manifest;
};

/// Number of flips for `fraction` of `n` examples, ceil with a guard against
/// products like 0.05 * 100 landing just above an integer.
inline std::size_t flip_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

/// Relabels ceil(fraction * |from|) uniformly chosen `from` examples as `to`.
inline FlipResult flip_labels(const std::vector<Example>& examples, TaskId from, TaskId to,
                              double fraction, std::uint64_t seed,
                              const DomainRegistry& names) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("flip_labels: fraction must be in (0, 1]");
  }
  if (from == to) throw std::invalid_argument("flip_labels: from and to must differ");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].domain == from) pool.push_back(i);
  }
  if (pool.empty()) {
    throw std::invalid_argument("flip_labels: no examples in domain " + names.name(from));
  }
  auto rng = make_rng(seed, 0xF11Bu);
  shuffle(pool, rng);
  pool.resize(std::min(pool.size(), flip_count(fraction, pool.size())));
  std::sort(pool.begin(), pool.end());

  FlipResult out;
  out.examples = examples;
  for (auto i : pool) {
    auto& e = out.examples[i];
    e.domain = to;
    out.flipped_ids.insert(e.id);
    out.manifest.push_back({e.id, names.name(from), names.name(to)});
  }
  return out;
}

}  // namespace zshot::data
