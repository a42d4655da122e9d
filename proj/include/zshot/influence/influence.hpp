#pragma once

// Influence of training points on a test loss,
//
//   I(z, z_test) = -grad L(z_test)^T (H + damping I)^{-1} grad L(z)
//
// with H the Hessian of the mean training loss at the trained parameters.
// Removing z from n training points changes the test loss by about -I / n.
// Under a clean solve self-influence I(z, z) is never positive, so the most
// influential points are the most negative ones.

#include <algorithm>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zshot/autodiff/derivatives.hpp"
#include "zshot/io/csv.hpp"

namespace zshot::influence {

using ad::CgOptions;
using ad::GradVector;
using ad::ParamVector;
using ad::SolverDiagnostics;

struct InfluenceScore {
  std::string subject;   // example or domain id
  std::string test_ref;  // test example id or test batch name
  double value = 0.0;
  SolverDiagnostics solver;

  bool clean() const { return solver.converged && !solver.negative_curvature; }
};

/// Scores many training subjects against test points. The inverse-HVP of
/// each test gradient is solved once and cached by test reference.
template <class F, class S>
  requires ad::LossFunction<F, S>
class Influence {
 public:
  Influence(const F& f, ParamVector params, std::span<const S> train, CgOptions solver = {})
      : f_(f), params_(std::move(params)), train_(train), solver_(solver) {
    if (train_.empty()) throw std::invalid_argument("influence: empty training set");
  }

  const CgOptions& solver() const { return solver_; }

  /// Summed gradient of `samples`.
  GradVector gradient(std::span<const S> samples) const {
    return ad::grad(f_, params_, samples, ad::Reduction::kSum);
  }

  /// (H + damping I)^{-1} grad L(test), where the test loss is summed over
  /// `test`. Cached under `test_ref`.
  const ad::InverseHvp& test_solution(std::span<const S> test, const std::string& test_ref) {
    auto it = cache_.find(test_ref);
    if (it == cache_.end()) {
      it = cache_.emplace(test_ref, ad::inverse_hvp(f_, params_, train_, gradient(test), solver_)).first;
    }
    return it->second;
  }

  InfluenceScore example(const S& z, const S& z_test) {
    return batch(std::span<const S>(&z, 1), f_.sample_id(z), std::span<const S>(&z_test, 1),
                 f_.sample_id(z_test));
  }

  /// Influence of the summed loss of `subject` on the summed loss of `test`.
  InfluenceScore batch(std::span<const S> subject, const std::string& subject_id,
                       std::span<const S> test, const std::string& test_ref) {
    if (subject.empty()) throw std::invalid_argument("influence: empty subject batch");
    if (test.empty()) throw std::invalid_argument("influence: empty test batch");
    const auto& sol = test_solution(test, test_ref);
    return {subject_id, test_ref, -ad::dot(sol.solution, gradient(subject)), sol.diagnostics};
  }

  /// I(z, z); needs its own solve, which is not cached.
  InfluenceScore self(const S& z) {
    const auto g = gradient(std::span<const S>(&z, 1));
    const auto sol = ad::inverse_hvp(f_, params_, train_, g, solver_);
    return {f_.sample_id(z), f_.sample_id(z), -ad::dot(sol.solution, g), sol.diagnostics};
  }

 private:
  const F& f_;
  ParamVector params_;
  std::span<const S> train_;
  CgOptions solver_;
  std::map<std::string, ad::InverseHvp> cache_;
};

template <class F, class S>
InfluenceScore influence_example(const F& f, const ParamVector& params, const S& z, const S& z_test,
                                 std::span<const S> train, const CgOptions& solver = {}) {
  return Influence<F, S>(f, params, train, solver).example(z, z_test);
}

template <class F, class S>
InfluenceScore influence_domain(const F& f, const ParamVector& params, std::span<const S> batch,
                                const std::string& domain_id, const S& z_test,
                                std::span<const S> train, const CgOptions& solver = {}) {
  return Influence<F, S>(f, params, train, solver)
      .batch(batch, domain_id, std::span<const S>(&z_test, 1), f.sample_id(z_test));
}

// ------------------------------------------------------------- flip ranking

enum class SuspectScore {
  kSelf,        // I(z, z)
  kValidation,  // I(z, clean validation batch)
};

/// Training ids ordered most suspicious first: clean solves before flagged
/// ones, then by suspicion, then by id. Self-influence is most suspicious
/// when most negative. Influence on a clean validation batch is most
/// suspicious when most positive, since removing such a point lowers the
/// validation loss.
template <class F, class S>
  requires ad::LossFunction<F, S>
std::vector<InfluenceScore> rank_flip_suspects(const F& f, const ParamVector& params,
                                               std::span<const S> train,
                                               const CgOptions& solver = {},
                                               SuspectScore mode = SuspectScore::kSelf,
                                               std::span<const S> validation = {}) {
  if (mode == SuspectScore::kValidation && validation.empty()) {
    throw std::invalid_argument("rank_flip_suspects: validation mode needs a validation batch");
  }
  Influence<F, S> inf(f, params, train, solver);
  std::vector<InfluenceScore> out;
  out.reserve(train.size());
  for (const auto& z : train) {
    out.push_back(mode == SuspectScore::kSelf
                      ? inf.self(z)
                      : inf.batch(std::span<const S>(&z, 1), f.sample_id(z), validation, "validation"));
  }
  const double sign = mode == SuspectScore::kSelf ? 1.0 : -1.0;
  std::sort(out.begin(), out.end(), [sign](const InfluenceScore& a, const InfluenceScore& b) {
    if (a.clean() != b.clean()) return a.clean();
    if (a.value != b.value) return sign * a.value < sign * b.value;
    return a.subject < b.subject;
  });
  return out;
}

inline std::vector<std::string> ranked_ids(const std::vector<InfluenceScore>& ranking) {
  std::vector<std::string> ids;
  ids.reserve(ranking.size());
  for (const auto& s : ranking) ids.push_back(s.subject);
  return ids;
}

/// subject_id, test_id, value, iterations, residual, converged
inline void write_influence_report(std::ostream& out, const std::vector<InfluenceScore>& scores) {
  io::CsvWriter csv(out, {"subject_id", "test_id", "value", "iterations", "residual", "converged"});
  for (const auto& s : scores) {
    csv.row(s.subject, s.test_ref, s.value, s.solver.iterations, s.solver.residual, s.clean());
  }
}

}  // namespace zshot::influence
