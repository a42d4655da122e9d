#pragma once

// Experiment runners. Each is a pure function of (config, corpus, seeds): the
// returned rows and the CSV written from them are byte-identical across
// reruns. Every training cell goes through train_and_evaluate, so the same
// (training set, seed) gives the same model whichever experiment asks.
//
// The model's K is always the number of domains in the corpus registry, so
// removing a domain from the training set does not change the architecture.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zshot/data/sampling.hpp"
#include "zshot/data/vocab.hpp"
#include "zshot/experiments/config.hpp"
#include "zshot/experiments/executor.hpp"
#include "zshot/experiments/metrics.hpp"
#include "zshot/influence/augment.hpp"
#include "zshot/influence/influence.hpp"
#include "zshot/io/csv.hpp"
#include "zshot/model/parser.hpp"
#include "zshot/model/train.hpp"

namespace zshot::experiments {

using data::DomainRegistry;
using data::Example;
using data::TaskId;

/// Training or influence hit a non-finite value (CLI exit code 3).
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSONL experiment log; a null stream discards events.
class EventLog {
 public:
  explicit EventLog(std::ostream* out = nullptr) : out_(out) {}
  void write(const nlohmann::ordered_json& event) {
    if (out_) *out_ << event.dump() << '\n';
  }

 private:
  std::ostream* out_;
};

/// Everything an experiment needs besides its own settings.
struct Context {
  const ExperimentConfig& config;
  const std::vector<Example>& corpus;
  const DomainRegistry& domains;
  const Executor* executor = nullptr;
  EventLog* log = nullptr;

  TaskId target() const { return domains.at(config.target_domain); }
  TaskId domain(const std::string& name) const {
    if (!domains.contains(name)) throw ConfigError("config: unknown domain \"" + name + "\"");
    return domains.at(name);
  }
  void event(const nlohmann::ordered_json& e) const {
    if (log) log->write(e);
  }
};

// ------------------------------------------------------------------ split

struct Split {
  std::vector<Example> test;  // held-out target-domain examples
  std::vector<Example> pool;  // everything else, all domains
};

/// The first test_size target examples of a split_seed shuffle are the test
/// set. The split is shared by every seed.
inline Split split_corpus(const Context& ctx) {
  const TaskId target = ctx.target();
  std::vector<Example> tgt = data::filter_domain(ctx.corpus, target);
  const auto n_test = static_cast<std::size_t>(ctx.config.test_size);
  if (tgt.size() <= n_test) {
    throw ConfigError("config: target domain has " + std::to_string(tgt.size()) +
                      " examples, test_size " + std::to_string(n_test) + " leaves none for training");
  }
  auto rng = data::make_rng(ctx.config.split_seed, 0x7E57u);
  data::shuffle(tgt, rng);
  Split s;
  s.test.assign(tgt.begin(), tgt.begin() + static_cast<long>(n_test));
  std::set<std::string> held;
  for (const auto& e : s.test) held.insert(e.id);
  for (const auto& e : ctx.corpus) {
    if (held.count(e.id) == 0) s.pool.push_back(e);
  }
  return s;
}

/// Per-domain nested sample of size n from the pool, restricted to `keep`
/// (all domains when empty).
inline std::vector<Example> training_subset(const Context& ctx, const std::vector<Example>& pool,
                                            int n, std::uint64_t seed,
                                            const std::set<int>& keep = {}) {
  std::vector<Example> src;
  for (const auto& e : pool) {
    if (keep.empty() || keep.count(e.domain.index)) src.push_back(e);
  }
  try {
    return data::sample_subsets(src, {n}, seed, &ctx.domains).at(n);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline std::vector<Example> without_domain(const std::vector<Example>& v, TaskId d) {
  std::vector<Example> out;
  for (const auto& e : v) {
    if (e.domain != d) out.push_back(e);
  }
  return out;
}

// ------------------------------------------------------------ train + eval

inline model::ModelConfig model_config(const Context& ctx) {
  model::ModelConfig m = ctx.config.model;
  m.num_domains = std::max(1, ctx.domains.size());
  return m;
}

struct TrainedModel {
  model::Parser parser;
  model::TrainResult result;
};

inline TrainedModel train_model(const Context& ctx, const std::vector<Example>& train_set,
                                std::uint64_t seed, const std::string& what) {
  if (train_set.empty()) throw ConfigError(what + ": empty training set");
  model::Parser parser(model_config(ctx), data::build_vocab(train_set));
  try {
    auto r = model::train(parser, parser.init_params(seed), train_set, ctx.config.train, seed);
    return {std::move(parser), std::move(r)};
  } catch (const model::TrainingError& e) {
    throw NumericFailure(what + ", seed " + std::to_string(seed) + ": " + e.what());
  }
}

inline MetricsReport evaluate(const model::Parser& parser, const ad::ParamVector& params,
                              const std::vector<Example>& test, const Executor* exec,
                              std::vector<std::string>* den_failures = nullptr) {
  std::vector<Tokens> pred, gold;
  for (const auto& e : test) {
    pred.push_back(parser.greedy_decode(params, e.source));
    gold.push_back(e.target);
  }
  MetricsReport r;
  r.seq = seq_accuracy(pred, gold);
  r.tok = tok_accuracy(pred, gold);
  r.n_test = static_cast<int>(test.size());
  if (exec) {
    auto den = den_accuracy(pred, gold, *exec);
    r.den = den.accuracy;
    if (den_failures) *den_failures = std::move(den.failures);
  }
  return r;
}

inline nlohmann::ordered_json metrics_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["seq"] = m.seq;
  j["tok"] = m.tok;
  j["den"] = m.den ? nlohmann::ordered_json(*m.den) : nlohmann::ordered_json(nullptr);
  j["n_test"] = m.n_test;
  return j;
}

/// Trains on `train_set` with `seed` and evaluates on `test`; logs one event
/// tagged with `tags`.
inline MetricsReport train_and_evaluate(const Context& ctx, const std::vector<Example>& train_set,
                                        const std::vector<Example>& test, std::uint64_t seed,
                                        nlohmann::ordered_json tags) {
  const std::string what = tags.value("experiment", std::string("train"));
  const auto m = train_model(ctx, train_set, seed, what);
  std::vector<std::string> den_failures;
  const auto report = evaluate(m.parser, m.result.params, test, ctx.executor, &den_failures);
  tags["event"] = "cell";
  tags["seed"] = seed;
  tags["train_size"] = train_set.size();
  tags["epoch_loss"] = m.result.epoch_loss;
  tags["metrics"] = metrics_json(report);
  if (!den_failures.empty()) tags["executor_failures"] = den_failures;
  ctx.event(tags);
  return report;
}

inline std::string den_cell(const MetricsReport& m) {
  return m.den ? io::format_double(*m.den) : std::string();
}

// --------------------------------------------------------- learning curve

struct CurveRow {
  int size;
  std::uint64_t seed;
  std::string setting;  // "single" or "aggregate"
  MetricsReport metrics;
};

/// For each size and seed: the target domain alone, and all domains.
inline std::vector<CurveRow> run_learning_curve(const Context& ctx) {
  const auto split = split_corpus(ctx);
  const TaskId target = ctx.target();
  std::vector<CurveRow> rows;
  for (auto seed : ctx.config.seeds) {
    for (int n : ctx.config.sizes) {
      const auto all = training_subset(ctx, split.pool, n, seed);
      const auto single = data::filter_domain(all, target);
      rows.push_back({n, seed, "single",
                      train_and_evaluate(ctx, single, split.test, seed,
                                         {{"experiment", "curve"}, {"setting", "single"}, {"size", n}})});
      rows.push_back({n, seed, "aggregate",
                      train_and_evaluate(ctx, all, split.test, seed,
                                         {{"experiment", "curve"}, {"setting", "aggregate"}, {"size", n}})});
    }
  }
  return rows;
}

inline void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
  io::CsvWriter csv(out, {"size", "seed", "setting", "seq", "tok", "den", "n_test"});
  for (const auto& r : rows) {
    csv.row(r.size, r.seed, r.setting, r.metrics.seq, r.metrics.tok, den_cell(r.metrics), r.metrics.n_test);
  }
}

// ---------------------------------------------------------- leave one out

struct LooRow {
  std::uint64_t seed;
  std::string row;      // "all", "single", or the removed domain's name
  MetricsReport metrics;
  double d_seq = 0.0;   // row minus the "all" row
  double d_tok = 0.0;
  std::optional<double> d_den;
};

struct LooResult {
  std::vector<LooRow> rows;
  /// Per seed, the removed domain with the largest token-accuracy drop
  /// (ties: larger sequence drop, then name).
  std::map<std::uint64_t, std::string> closest;
};

inline LooResult run_leave_one_out(const Context& ctx) {
  if (ctx.domains.size() < 2) throw ConfigError("loo: needs at least two domains");
  const auto split = split_corpus(ctx);
  const TaskId target = ctx.target();
  const int n = ctx.config.loo_size;
  LooResult out;
  for (auto seed : ctx.config.seeds) {
    const auto all = training_subset(ctx, split.pool, n, seed);
    const auto base = train_and_evaluate(ctx, all, split.test, seed,
                                         {{"experiment", "loo"}, {"row", "all"}, {"size", n}});
    auto delta_row = [&](const std::string& name, const MetricsReport& m) {
      LooRow r{seed, name, m, m.seq - base.seq, m.tok - base.tok, std::nullopt};
      if (m.den && base.den) r.d_den = *m.den - *base.den;
      return r;
    };
    out.rows.push_back(delta_row("all", base));
    const LooRow* best = nullptr;
    std::vector<LooRow> removed;
    for (int d = 0; d < ctx.domains.size(); ++d) {
      if (d == target.index) continue;
      const auto& name = ctx.domains.name(TaskId{d});
      const auto m = train_and_evaluate(ctx, without_domain(all, TaskId{d}), split.test, seed,
                                        {{"experiment", "loo"}, {"row", "-" + name}, {"size", n}});
      removed.push_back(delta_row(name, m));
    }
    for (const auto& r : removed) {
      if (best == nullptr || r.d_tok < best->d_tok ||
          (r.d_tok == best->d_tok && r.d_seq < best->d_seq)) {
        best = &r;
      }
    }
    out.closest[seed] = best->row;
    out.rows.insert(out.rows.end(), removed.begin(), removed.end());
    const auto single = train_and_evaluate(ctx, data::filter_domain(all, target), split.test, seed,
                                           {{"experiment", "loo"}, {"row", "single"}, {"size", n}});
    out.rows.push_back(delta_row("single", single));
    ctx.event({{"event", "loo_closest"}, {"seed", seed}, {"domain", out.closest[seed]}});
  }
  return out;
}

inline void write_loo_csv(std::ostream& out, const LooResult& r) {
  io::CsvWriter csv(out, {"seed", "row", "seq", "tok", "den", "d_seq", "d_tok", "d_den", "n_test"});
  for (const auto& x : r.rows) {
    csv.row(x.seed, x.row, x.metrics.seq, x.metrics.tok, den_cell(x.metrics), x.d_seq, x.d_tok,
            x.d_den ? io::format_double(*x.d_den) : std::string(), x.metrics.n_test);
  }
}

/// Mean metrics and deltas per row name over seeds, rows in first-seen order.
inline void write_loo_summary_csv(std::ostream& out, const LooResult& r) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const LooRow*>> by_row;
  for (const auto& x : r.rows) {
    if (by_row[x.row].empty()) order.push_back(x.row);
    by_row[x.row].push_back(&x);
  }
  std::map<std::string, int> closest_count;
  for (const auto& [seed, name] : r.closest) ++closest_count[name];
  io::CsvWriter csv(out, {"row", "seq", "tok", "d_seq", "d_tok", "closest_in_seeds", "seeds"});
  for (const auto& name : order) {
    const auto& xs = by_row[name];
    double seq = 0, tok = 0, dseq = 0, dtok = 0;
    for (const auto* x : xs) {
      seq += x->metrics.seq;
      tok += x->metrics.tok;
      dseq += x->d_seq;
      dtok += x->d_tok;
    }
    const double k = static_cast<double>(xs.size());
    csv.row(name, seq / k, tok / k, dseq / k, dtok / k, closest_count[name], xs.size());
  }
}

// -------------------------------------------------------- flip detection

struct FlipTrialResult {
  double fraction;
  std::uint64_t seed;
  std::set<std::string> flipped;
  std::vector<influence::InfluenceScore> ranking;
  std::vector<std::string> source_ids;  // source-domain ids in the training set
  std::size_t top_k;                    // ceil(fraction * |train|)

  std::size_t detected_at(std::size_t budget) const {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(budget, ranking.size()); ++i) {
      hits += flipped.count(ranking[i].subject);
    }
    return hits;
  }
  std::size_t flagged() const {
    return static_cast<std::size_t>(std::count_if(ranking.begin(), ranking.end(),
                                                  [](const auto& s) { return !s.clean(); }));
  }
};

/// Expected hits when `budget` of `n` items are picked uniformly without
/// replacement and `m` of them are marked: the hypergeometric mean.
inline double random_expected(std::size_t budget, std::size_t m, std::size_t n) {
  return n == 0 ? 0.0 : static_cast<double>(std::min(budget, n)) * static_cast<double>(m) /
                            static_cast<double>(n);
}

/// One trial: sample flip.size examples per domain of (source, victim),
/// relabel `fraction` of the source examples as victim, train, rank.
inline FlipTrialResult run_flip_trial(const Context& ctx, const std::vector<Example>& pool,
                                      double fraction, std::uint64_t seed) {
  const auto& fs = ctx.config.flip;
  const TaskId src = ctx.domain(fs.source), vic = ctx.domain(fs.victim);
  if (src == vic) throw ConfigError("flip: source and victim must differ");
  const auto train0 = training_subset(ctx, pool, fs.size, seed, {src.index, vic.index});
  const auto flipped = data::flip_labels(train0, src, vic, fraction, seed, ctx.domains);
  const auto m = train_model(ctx, flipped.examples, seed, "flip");

  std::vector<Example> validation;
  if (fs.mode == influence::SuspectScore::kValidation) {
    std::set<std::string> used;
    for (const auto& e : train0) used.insert(e.id);
    std::vector<Example> rest;
    for (const auto& e : pool) {
      if (!used.count(e.id) && (e.domain == src || e.domain == vic)) rest.push_back(e);
    }
    validation = training_subset(ctx, rest, fs.validation_size, seed ^ 0x5A11DULL, {src.index, vic.index});
  }
  FlipTrialResult t{fraction, seed, flipped.flipped_ids, {}, {}, 0};
  try {
    t.ranking = influence::rank_flip_suspects(m.parser, m.result.params,
                                              std::span<const Example>(flipped.examples),
                                              ctx.config.solver, fs.mode,
                                              std::span<const Example>(validation));
  } catch (const ad::NumericError& e) {
    throw NumericFailure(std::string("flip ranking: ") + e.what());
  }
  for (const auto& e : train0) {
    if (e.domain == src) t.source_ids.push_back(e.id);
  }
  t.top_k = data::flip_count(fraction, flipped.examples.size());
  ctx.event({{"event", "flip_trial"},
             {"fraction", fraction},
             {"seed", seed},
             {"flips", t.flipped.size()},
             {"top_k", t.top_k},
             {"detected_at_flips", t.detected_at(t.flipped.size())},
             {"flagged_solves", t.flagged()},
             {"epoch_loss", m.result.epoch_loss}});
  return t;
}

struct FlipCurveRow {
  double fraction;
  std::size_t budget;
  double influence_detected;  // mean over seeds
  double random_expected;
};

struct FlipResultSet {
  std::vector<FlipTrialResult> trials;  // fraction-major
  std::vector<FlipCurveRow> curve;
};

inline FlipResultSet run_flip_experiment(const Context& ctx) {
  const auto split = split_corpus(ctx);
  FlipResultSet out;
  for (double f : ctx.config.flip.fractions) {
    std::vector<const FlipTrialResult*> mine;
    for (auto seed : ctx.config.seeds) {
      out.trials.push_back(run_flip_trial(ctx, split.pool, f, seed));
    }
    for (const auto& t : out.trials) {
      if (t.fraction == f) mine.push_back(&t);
    }
    const std::size_t n = mine.front()->ranking.size();
    for (std::size_t b = 0; b <= n; ++b) {
      double hits = 0.0, expect = 0.0;
      for (const auto* t : mine) {
        hits += static_cast<double>(t->detected_at(b));
        expect += random_expected(b, t->flipped.size(), t->ranking.size());
      }
      const double k = static_cast<double>(mine.size());
      out.curve.push_back({f, b, hits / k, expect / k});
    }
  }
  return out;
}

inline void write_flip_curve_csv(std::ostream& out, const FlipResultSet& r) {
  io::CsvWriter csv(out, {"fraction", "budget", "influence_detected", "random_expected"});
  for (const auto& x : r.curve) csv.row(x.fraction, x.budget, x.influence_detected, x.random_expected);
}

inline void write_flip_trials_csv(std::ostream& out, const FlipResultSet& r) {
  io::CsvWriter csv(out, {"fraction", "seed", "train_size", "flips", "top_k", "detected_at_flips",
                          "detected_at_top_k", "random_at_flips", "flagged_solves"});
  for (const auto& t : r.trials) {
    const auto m = t.flipped.size();
    csv.row(t.fraction, t.seed, t.ranking.size(), m, t.top_k, t.detected_at(m), t.detected_at(t.top_k),
            random_expected(m, m, t.ranking.size()), t.flagged());
  }
}

// ----------------------------------------------------------- augmentation

struct AugmentRow {
  int size;
  std::uint64_t seed;
  std::string variant;  // "baseline", "p", "complement"
  std::size_t added;    // distinct augment examples
  MetricsReport metrics;
};

struct AugmentResult {
  std::vector<AugmentRow> rows;
  /// Per seed: the two distributions and their draws.
  struct SeedArtifacts {
    std::uint64_t seed;
    influence::AugDistributions dists;
    influence::AugSample p_draws, complement_draws;
  };
  std::vector<SeedArtifacts> artifacts;
};

/// Flip trials over all configured fractions for one seed, as inputs to
/// build_aug_distribution.
inline std::vector<influence::FlipTrial> flip_trials_for_seed(const Context& ctx,
                                                             const std::vector<Example>& pool,
                                                             std::uint64_t seed,
                                                             std::vector<std::string>* source_ids) {
  std::vector<influence::FlipTrial> trials;
  for (double f : ctx.config.flip.fractions) {
    const auto t = run_flip_trial(ctx, pool, f, seed);
    trials.push_back({f, influence::ranked_ids(t.ranking), t.top_k});
    if (source_ids) *source_ids = t.source_ids;
  }
  return trials;
}

/// Target-domain training at each augment size, alone and with the distinct
/// examples drawn from p and from its complement. Augment examples keep
/// their own domain label.
inline AugmentResult run_augmentation(const Context& ctx) {
  const auto split = split_corpus(ctx);
  const TaskId target = ctx.target();
  const auto& as = ctx.config.augment;
  AugmentResult out;
  for (auto seed : ctx.config.seeds) {
    std::vector<std::string> support;
    const auto trials = flip_trials_for_seed(ctx, split.pool, seed, &support);
    AugmentResult::SeedArtifacts art{seed, influence::build_aug_distribution(trials, support), {}, {}};
    art.p_draws = influence::sample_augmentation(art.dists.p, as.draws, seed);
    art.complement_draws = influence::sample_augmentation(art.dists.complement, as.draws, seed);
    const auto p_extra = influence::select_examples(ctx.corpus, art.p_draws.unique_ids);
    const auto c_extra = influence::select_examples(ctx.corpus, art.complement_draws.unique_ids);
    for (int n : as.sizes) {
      const auto base = training_subset(ctx, split.pool, n, seed, {target.index});
      auto with = [&](const std::vector<Example>& extra) {
        auto v = base;
        std::set<std::string> ids;
        for (const auto& e : v) ids.insert(e.id);
        for (const auto& e : extra) {
          if (ids.insert(e.id).second) v.push_back(e);
        }
        return v;
      };
      for (const auto& [variant, extra] :
           {std::pair<std::string, const std::vector<Example>*>{"baseline", nullptr},
            {"p", &p_extra},
            {"complement", &c_extra}}) {
        const auto train_set = extra ? with(*extra) : base;
        out.rows.push_back({n, seed, variant, train_set.size() - base.size(),
                            train_and_evaluate(ctx, train_set, split.test, seed,
                                               {{"experiment", "augment"}, {"variant", variant}, {"size", n}})});
      }
    }
    out.artifacts.push_back(std::move(art));
  }
  return out;
}

inline void write_augment_csv(std::ostream& out, const AugmentResult& r) {
  io::CsvWriter csv(out, {"size", "seed", "variant", "added", "seq", "tok", "den", "n_test"});
  for (const auto& x : r.rows) {
    csv.row(x.size, x.seed, x.variant, x.added, x.metrics.seq, x.metrics.tok, den_cell(x.metrics),
            x.metrics.n_test);
  }
}

/// {"seed", "variant", "id", "draws"} per distinct sampled id.
inline void write_augment_manifest(std::ostream& out, const AugmentResult& r) {
  for (const auto& a : r.artifacts) {
    for (const auto& [variant, s] : {std::pair<const char*, const influence::AugSample*>{"p", &a.p_draws},
                                     {"complement", &a.complement_draws}}) {
      for (const auto& id : s->unique_ids) {
        nlohmann::ordered_json j;
        j["seed"] = a.seed;
        j["variant"] = variant;
        j["id"] = id;
        j["draws"] = s->draw_counts.at(id);
        out << j.dump() << '\n';
      }
    }
  }
}

}  // namespace zshot::experiments
