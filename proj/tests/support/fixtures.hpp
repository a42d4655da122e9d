#pragma once

// Experiment configurations for the synthetic property checks. All use the
// d = 16 parser with solver damping 1.0, since trained LSTM Hessians are
// indefinite and the default damping flags nearly every solve.

#include <cstdint>
#include <string>
#include <vector>

#include "zshot/experiments/config.hpp"

namespace zshot::testing {

inline std::vector<std::uint64_t> seed_range(int n) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < n; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

inline experiments::ExperimentConfig base_experiment(std::vector<std::string> domains,
                                                     std::string target, int seeds = 10) {
  experiments::ExperimentConfig c;
  c.synthetic = experiments::SyntheticCorpus{std::move(domains), 150, 1};
  c.target_domain = std::move(target);
  c.seeds = seed_range(seeds);
  c.test_size = 50;
  c.model.hidden_dim = 16;
  c.model.embed_dim = 16;
  c.model.max_decode_len = 30;
  c.solver.damping = 1.0;
  c.solver.tol = 1e-3;
  return c;
}

/// Disjoint vocabularies, 20 training examples per domain, 10% of alpha
/// relabeled as beta.
inline experiments::ExperimentConfig flip_fixture(int seeds = 20) {
  auto c = base_experiment({"alpha", "beta"}, "beta", seeds);
  c.flip.source = "alpha";
  c.flip.victim = "beta";
  c.flip.size = 20;
  c.flip.fractions = {0.10};
  return c;
}

/// Calendar and publications share their logical-form grammar.
inline experiments::ExperimentConfig transfer_fixture() {
  auto c = base_experiment({"calendar", "publications"}, "calendar");
  c.sizes = {10};
  return c;
}

/// Calendar target, publications near, flights far.
inline experiments::ExperimentConfig near_far_fixture() {
  auto c = base_experiment({"calendar", "publications", "flights"}, "calendar");
  c.loo_size = 30;
  return c;
}

/// Flights examples flipped into calendar; p and its complement are built
/// from the five flip fractions and added to calendar training sets.
inline experiments::ExperimentConfig augment_fixture() {
  auto c = base_experiment({"calendar", "flights"}, "calendar");
  c.flip.source = "flights";
  c.flip.victim = "calendar";
  c.flip.size = 20;
  c.augment.sizes = {10, 20, 30, 40};
  c.augment.draws = 100;
  return c;
}

}  // namespace zshot::testing
