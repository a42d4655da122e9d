// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "support/fixtures.hpp"
#include "support/losses.hpp"
#include "support/newton.hpp"
#include "support/oracles.hpp"
#include "zshot/autodiff/derivatives.hpp"
#include "zshot/experiments/runs.hpp"
#include "zshot/influence/influence.hpp"
#include "zshot/model/param_count.hpp"
#include "zshot/model/parser.hpp"

namespace {

using namespace zshot;
using ad::ParamVector;
using data::Example;

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  int number;
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

Example example(std::string id, std::vector<std::string> src, std::vector<std::string> tgt, int dom) {
  tgt.emplace_back(data::kEosToken);
  return {std::move(id), std::move(src), std::move(tgt), data::TaskId{dom}};
}

/// d = 3, K = 2, V = 8 parser with a three-example batch.
struct SmallParser {
  data::Vocab vocab{{"p", "q", "r", "(", ")"}, 3};
  model::Parser parser{[] {
                         model::ModelConfig c;
                         c.hidden_dim = 3;
                         c.embed_dim = 3;
                         c.num_domains = 2;
                         c.max_decode_len = 10;
                         return c;
                       }(),
                       vocab};
  ParamVector theta = [this] {
    auto p = parser.init_params(4);
    std::vector<double> v(p.values().begin(), p.values().end());
    for (double& x : v) x *= 0.5;
    return p.with_values(std::move(v));
  }();
  std::vector<Example> batch{example("g0", {"p", "w"}, {"(", "w", ")"}, 0),
                             example("g1", {"q", "r", "p"}, {"(", "r", "q", ")"}, 1),
                             example("g2", {"r"}, {"r", "r"}, 0)};
  std::span<const Example> span() const { return batch; }
};

Outcome gradient_check() {
  SmallParser m;
  if (m.vocab.size() != 8) return {false, "vocabulary size is not 8"};
  const auto analytic = ad::grad(m.parser, m.theta, m.span());
  const auto numeric = testing::fd_gradient(m.parser, m.theta, m.span());
  const auto r = testing::compare_gradients(analytic.values(), numeric, 1e-4, 1e-8);
  return {r.failures == 0, fmt("%zu params, %zu failures, worst rel %.2e", r.checked, r.failures, r.worst_rel)};
}

Outcome hvp_check() {
  SmallParser m;
  auto rng = data::make_rng(11, 0);
  double worst_fd = 0.0, worst_h = 0.0;
  const auto H = testing::fd_hessian(m.parser, m.theta, m.span());
  for (int k = 0; k < 5; ++k) {
    const auto dir = testing::random_vector(rng, m.theta.size());
    const auto v = ad::GradVector(m.theta.layout_ptr(), dir);
    const auto exact = ad::hvp_exact(m.parser, m.theta, m.span(), v);
    const auto fd = ad::hvp_fd(m.parser, m.theta, m.span(), v, 1e-5);
    std::vector<double> hv(dir.size(), 0.0);
    for (std::size_t i = 0; i < dir.size(); ++i) {
      for (std::size_t j = 0; j < dir.size(); ++j) hv[i] += H[i][j] * dir[j];
    }
    const std::vector<double> ex(exact.values().begin(), exact.values().end());
    worst_fd = std::max(worst_fd, rel_err(ex, std::vector<double>(fd.values().begin(), fd.values().end())));
    worst_h = std::max(worst_h, rel_err(ex, hv));
  }
  return {worst_fd <= 1e-3 && worst_h <= 1e-3,
          fmt("vs hvp_fd %.2e, vs explicit FD Hessian %.2e", worst_fd, worst_h)};
}

Outcome inverse_hvp_check() {
  const std::size_t dim = 49;
  const testing::Logistic f{dim, 0.0};
  const testing::LogisticOracle oracle{dim, 0.0};
  const auto pts = testing::two_blobs(200, dim, 0.3, 21);
  auto rng = data::make_rng(12, 0);
  const auto theta = testing::random_vector(rng, dim + 1, 0.2);
  const auto v = testing::random_vector(rng, dim + 1);
  const auto p = ParamVector::from(theta);
  const auto r = ad::inverse_hvp(f, p, std::span<const testing::Point>(pts), ad::GradVector(p.layout_ptr(), v));
  std::vector<double> g;
  std::vector<std::vector<double>> H;
  oracle.derivatives(theta, pts, g, H);
  double res = 0, vn = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double hx = 0.01 * r.solution[i];
    for (std::size_t j = 0; j < v.size(); ++j) hx += H[i][j] * r.solution[j];
    res += (hx - v[i]) * (hx - v[i]);
    vn += v[i] * v[i];
  }
  const double rel = std::sqrt(res / vn);
  return {rel <= 1e-3, fmt("50 params, %d CG iterations, relative residual %.2e", r.diagnostics.iterations, rel)};
}

Outcome retraining_check() {
  const testing::Logistic f{2, 0.1};
  const testing::LogisticOracle oracle{2, 0.1};
  const auto train = testing::two_blobs(40, 2, 0.7, 3);
  const auto theta = oracle.fit(train, std::vector<double>(3, 0.0));
  const auto z_test = testing::two_blobs(1, 2, 0.7, 99).front();
  const double base = oracle.loss(theta, z_test);
  influence::Influence<testing::Logistic, testing::Point> inf(f, ParamVector::from(theta),
                                                             std::span<const testing::Point>(train));
  std::vector<double> predicted, actual;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto rest = train;
    rest.erase(rest.begin() + static_cast<long>(i));
    actual.push_back(oracle.loss(oracle.fit(rest, theta), z_test) - base);
    predicted.push_back(-inf.example(train[i], z_test).value / static_cast<double>(train.size()));
  }
  const double r = testing::pearson(predicted, actual);
  return {r >= 0.9, fmt("Pearson r %.4f over 40 retrains", r)};
}

struct Loaded {
  experiments::ExperimentConfig config;
  data::DomainRegistry domains;
  std::vector<Example> corpus;
  explicit Loaded(experiments::ExperimentConfig c) : config(std::move(c)) {
    corpus = experiments::load_config_corpus(config, domains);
  }
  experiments::Context ctx() const { return {config, corpus, domains}; }
};

Outcome flip_check() {
  Loaded l(testing::flip_fixture(20));
  const auto r = experiments::run_flip_experiment(l.ctx());
  double hits = 0, random = 0;
  std::size_t flagged = 0;
  for (const auto& t : r.trials) {
    const auto m = t.flipped.size();
    hits += static_cast<double>(t.detected_at(m)) / 20.0;
    random += experiments::random_expected(m, m, t.ranking.size()) / 20.0;
    flagged += t.flagged();
  }
  return {hits >= 2.0 * random,
          fmt("mean detections %.3f vs random %.3f at budget = flips, %zu flagged solves", hits, random, flagged)};
}

Outcome transfer_check() {
  Loaded l(testing::transfer_fixture());
  const auto rows = experiments::run_learning_curve(l.ctx());
  int wins = 0, seeds = 0;
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
    ++seeds;
    wins += rows[i + 1].metrics.tok > rows[i].metrics.tok;
  }
  return {wins >= 8, fmt("aggregate > single token accuracy at n=10 in %d/%d seeds", wins, seeds)};
}

Outcome loo_check() {
  Loaded l(testing::near_far_fixture());
  const auto r = experiments::run_leave_one_out(l.ctx());
  std::map<std::uint64_t, std::map<std::string, double>> delta;
  for (const auto& x : r.rows) delta[x.seed][x.row] = x.d_tok;
  int wins = 0;
  for (auto& [seed, d] : delta) wins += d.at("publications") < d.at("flights");
  return {wins >= 8, fmt("near-domain removal drops token accuracy more in %d/%zu seeds", wins, delta.size())};
}

Outcome augment_check() {
  Loaded l(testing::augment_fixture());
  const auto r = experiments::run_augmentation(l.ctx());
  std::map<std::uint64_t, std::map<std::string, double>> mean;
  for (const auto& x : r.rows) {
    if (x.size <= 40) mean[x.seed][x.variant] += x.metrics.tok;
  }
  int wins = 0, complement_wins = 0;
  for (auto& [seed, m] : mean) {
    wins += m.at("p") > m.at("baseline");
    complement_wins += m.at("complement") > m.at("baseline");
  }
  return {wins >= 7, fmt("p-augmentation beats baseline mean token accuracy (n<=40) in %d/%zu seeds"
                         " (complement: %d)", wins, mean.size(), complement_wins)};
}

Outcome param_count_check() {
  model::ModelConfig c;
  c.hidden_dim = 4;
  c.embed_dim = 5;
  c.num_domains = 3;
  // Hand expansion at d=4, e=5, V=10, K=3.
  //   emb 50, enc 2*(60+48+12)=240, init 64, dec 120+192+24=336, attn 64, out 160, W_T 48
  const std::map<std::string, std::size_t> hand{
      {"o2o", 914}, {"zshot", 962}, {"e2d", 986}, {"o2m", 1234}, {"m2m", 50 + 4 * 240 + 128 + 336 + 64 + 480}};
  const auto n = model::count_params(c, 10);
  bool ok = n == hand;
  const model::Parser parser(c, data::Vocab({"t1", "t2", "t3", "t4", "t5", "t6", "t7"}, 4));
  ok = ok && parser.vocab().size() == 10 && parser.num_params() == hand.at("zshot");
  // Dominant term doubles exactly; the total approaches 2x once dV dominates.
  const auto b1 = model::block_counts(c, 10000), b2 = model::block_counts(c, 20000);
  const double dom = static_cast<double>(b2.out + b2.emb) / static_cast<double>(b1.out + b1.emb);
  const double total = static_cast<double>(model::count_params(c, 20000).at("zshot")) /
                       static_cast<double>(model::count_params(c, 10000).at("zshot"));
  ok = ok && dom == 2.0 && std::abs(total - 2.0) <= 0.1;
  return {ok, fmt("zshot %zu params (hand 962), dominant-term ratio %.4f, total ratio %.4f", parser.num_params(),
                  dom, total)};
}

Outcome readme_check() {
  std::ifstream in(ZSHOT_SOURCE_DIR "/README.md");
  if (!in) return {false, "README.md not found"};
  std::stringstream s;
  s << in.rdbuf();
  const std::string text = s.str();
  const std::vector<std::string> required{"not reproducible", "0.101", "leave-one-out table",
                                          "Flip detection", "Transfer at small n", "Leave-one-out ordering",
                                          "Augmentation benefit"};
  std::string missing;
  for (const auto& r : required) {
    if (text.find(r) == std::string::npos) missing += " \"" + r + "\"";
  }
  return {missing.empty(), missing.empty() ? "non-reproducibility statement and mapping present"
                                           : "missing:" + missing};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "gradient vs central differences", 10, gradient_check},
      {2, "exact HVP vs finite differences", 30, hvp_check},
      {3, "inverse-HVP round trip", 10, inverse_hvp_check},
      {4, "influence vs leave-one-out retraining", 120, retraining_check},
      {5, "flip detection beats random", 900, flip_check},
      {6, "transfer benefit at n=10", 1200, transfer_check},
      {7, "leave-one-out near/far ordering", 1800, loo_check},
      {8, "augmentation benefit at n<=40", 1800, augment_check},
      {9, "parameter accounting", 10, param_count_check},
      {10, "non-reproducibility statement", 10, readme_check},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs < c.limit_s;
    failures += !pass;
    std::printf("criterion %2d %s: %s; %s; %.1f s (limit %.0f s)\n", c.number, pass ? "PASS" : "FAIL",
                c.name.c_str(), o.detail.c_str(), secs, c.limit_s);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
