// zshot: command-line driver for the experiments.
//
//   zshot <train|eval|loo|curve|flip|augment|influence|synth> --config FILE
//         [--seed N] [--out-dir DIR]
//
// Exit status: 0 success, 2 configuration error, 3 numeric failure, 1 other.

#include <CLI11.hpp>
#include <toml.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "zshot/data/corpus.hpp"
#include "zshot/experiments/config.hpp"
#include "zshot/experiments/runs.hpp"
#include "zshot/influence/influence.hpp"
#include "zshot/model/checkpoint.hpp"

namespace fs = std::filesystem;
namespace ex = zshot::experiments;
using zshot::data::Example;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

nlohmann::json read_config_json(const std::string& path) {
  if (fs::path(path).extension() == ".toml") {
    try {
      const auto table = toml::parse_file(path);
      std::ostringstream s;
      s << toml::json_formatter{table};
      return nlohmann::json::parse(s.str());
    } catch (const toml::parse_error& e) {
      throw ex::ConfigError("config: " + std::string(e.description()) + " at line " +
                            std::to_string(e.source().begin.line));
    }
  }
  std::ifstream in(path);
  if (!in) throw ex::ConfigError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ex::ConfigError(std::string("config: ") + e.what());
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string checkpoint;
};

/// Loaded config, corpus, and output directory shared by every subcommand.
class Session {
 public:
  explicit Session(const Options& o) : config_(ex::parse_experiment_config(read_config_json(o.config))) {
    if (o.seed) config_.seeds = {*o.seed};
    if (!o.out_dir.empty()) config_.output_dir = o.out_dir;
    corpus_ = ex::load_config_corpus(config_, domains_);
    if (auto e = ex::Executor::from_env()) executor_.emplace(std::move(*e));
    out_dir_ = config_.output_dir;
    fs::create_directories(out_dir_);
    log_file_ = open_out(out_dir_ / "log.jsonl");
    log_ = ex::EventLog(&log_file_);
  }

  ex::Context context() {
    return {config_, corpus_, domains_, executor_ ? &*executor_ : nullptr, &log_};
  }
  const ex::ExperimentConfig& config() const { return config_; }
  const zshot::data::DomainRegistry& domains() const { return domains_; }
  const fs::path& out_dir() const { return out_dir_; }

  template <class Write>
  void emit(const std::string& name, Write&& write) {
    auto out = open_out(out_dir_ / name);
    write(out);
    std::cout << (out_dir_ / name).string() << '\n';
  }

  /// The train subcommand's training set: every domain at the largest size.
  std::vector<Example> aggregate_set(const ex::Split& split) {
    return ex::training_subset(context(), split.pool, config_.sizes.back(), config_.seeds.front());
  }

 private:
  ex::ExperimentConfig config_;
  zshot::data::DomainRegistry domains_;
  std::vector<Example> corpus_;
  std::optional<ex::Executor> executor_;
  fs::path out_dir_;
  std::ofstream log_file_;
  ex::EventLog log_;
};

std::string checkpoint_path(const Options& o, const Session& s) {
  return o.checkpoint.empty() ? (s.out_dir() / "model.json").string() : o.checkpoint;
}

zshot::model::Checkpoint load_matching_checkpoint(const Options& o, const Session& s) {
  auto ck = zshot::model::load_checkpoint(checkpoint_path(o, s));
  if (!(ck.domains == s.domains())) {
    throw ex::ConfigError("checkpoint domains do not match the configured corpus");
  }
  return ck;
}

void cmd_train(const Options& o) {
  Session s(o);
  auto ctx = s.context();
  const auto split = ex::split_corpus(ctx);
  const auto train_set = s.aggregate_set(split);
  const auto seed = s.config().seeds.front();
  const auto m = ex::train_model(ctx, train_set, seed, "train");
  zshot::model::save_checkpoint(checkpoint_path(o, s),
                                {m.parser.config(), m.parser.vocab(), s.domains(), m.result.params});
  std::cout << checkpoint_path(o, s) << '\n';
  s.emit("train_loss.csv", [&](std::ostream& out) {
    zshot::io::CsvWriter csv(out, {"epoch", "loss"});
    for (std::size_t e = 0; e < m.result.epoch_loss.size(); ++e) csv.row(e, m.result.epoch_loss[e]);
  });
  ctx.event({{"event", "train"}, {"seed", seed}, {"train_size", train_set.size()},
             {"epoch_loss", m.result.epoch_loss}});
}

void cmd_eval(const Options& o) {
  Session s(o);
  auto ctx = s.context();
  const auto ck = load_matching_checkpoint(o, s);
  const zshot::model::Parser parser(ck.config, ck.vocab);
  const auto split = ex::split_corpus(ctx);
  std::vector<std::string> failures;
  const auto report = ex::evaluate(parser, ck.params, split.test, ctx.executor, &failures);
  s.emit("eval.csv", [&](std::ostream& out) {
    zshot::io::CsvWriter csv(out, {"seq", "tok", "den", "n_test"});
    csv.row(report.seq, report.tok, ex::den_cell(report), report.n_test);
  });
  s.emit("predictions.csv", [&](std::ostream& out) {
    zshot::io::CsvWriter csv(out, {"id", "prediction", "gold"});
    auto join = [](const std::vector<std::string>& v) {
      std::string r;
      for (const auto& t : zshot::data::strip_eos(v)) r += (r.empty() ? "" : " ") + t;
      return r;
    };
    for (const auto& e : split.test) csv.row(e.id, join(parser.greedy_decode(ck.params, e.source)), join(e.target));
  });
  nlohmann::ordered_json ev{{"event", "eval"}, {"metrics", ex::metrics_json(report)}};
  if (!failures.empty()) ev["executor_failures"] = failures;
  ctx.event(ev);
}

/// Influence of every training example, and of each domain's examples as a
/// batch, on the summed loss of the target test set.
void cmd_influence(const Options& o) {
  Session s(o);
  auto ctx = s.context();
  const auto ck = load_matching_checkpoint(o, s);
  const zshot::model::Parser parser(ck.config, ck.vocab);
  const auto split = ex::split_corpus(ctx);
  const auto train_set = s.aggregate_set(split);
  zshot::influence::Influence<zshot::model::Parser, Example> inf(
      parser, ck.params, std::span<const Example>(train_set), s.config().solver);
  const std::span<const Example> test(split.test);
  std::vector<zshot::influence::InfluenceScore> per_example, per_domain;
  for (const auto& z : train_set) {
    per_example.push_back(inf.batch(std::span<const Example>(&z, 1), z.id, test, "test"));
  }
  for (int d = 0; d < s.domains().size(); ++d) {
    const auto batch = zshot::data::filter_domain(train_set, zshot::data::TaskId{d});
    if (batch.empty()) continue;
    per_domain.push_back(inf.batch(std::span<const Example>(batch), s.domains().name(zshot::data::TaskId{d}),
                                   test, "test"));
  }
  s.emit("influence.csv", [&](std::ostream& out) { zshot::influence::write_influence_report(out, per_example); });
  s.emit("influence_domains.csv",
         [&](std::ostream& out) { zshot::influence::write_influence_report(out, per_domain); });
  const auto& diag = per_example.front().solver;
  ctx.event({{"event", "influence"}, {"train_size", train_set.size()}, {"cg_iterations", diag.iterations},
             {"cg_residual", diag.residual}, {"converged", diag.converged},
             {"negative_curvature", diag.negative_curvature}});
}

void cmd_curve(const Options& o) {
  Session s(o);
  const auto rows = ex::run_learning_curve(s.context());
  s.emit("curve.csv", [&](std::ostream& out) { ex::write_curve_csv(out, rows); });
}

void cmd_loo(const Options& o) {
  Session s(o);
  const auto r = ex::run_leave_one_out(s.context());
  s.emit("loo.csv", [&](std::ostream& out) { ex::write_loo_csv(out, r); });
  s.emit("loo_summary.csv", [&](std::ostream& out) { ex::write_loo_summary_csv(out, r); });
}

void cmd_flip(const Options& o) {
  Session s(o);
  auto ctx = s.context();
  const auto r = ex::run_flip_experiment(ctx);
  s.emit("flip_curve.csv", [&](std::ostream& out) { ex::write_flip_curve_csv(out, r); });
  s.emit("flip_trials.csv", [&](std::ostream& out) { ex::write_flip_trials_csv(out, r); });
  s.emit("flip_manifest.jsonl", [&](std::ostream& out) {
    for (const auto& t : r.trials) {
      for (const auto& id : t.flipped) {
        nlohmann::ordered_json j{{"fraction", t.fraction}, {"seed", t.seed}, {"id", id},
                                 {"original_domain", s.config().flip.source},
                                 {"flipped_domain", s.config().flip.victim}};
        out << j.dump() << '\n';
      }
    }
  });
}

void cmd_augment(const Options& o) {
  Session s(o);
  const auto r = ex::run_augmentation(s.context());
  s.emit("augment.csv", [&](std::ostream& out) { ex::write_augment_csv(out, r); });
  s.emit("augment_manifest.jsonl", [&](std::ostream& out) { ex::write_augment_manifest(out, r); });
}

/// Writes the configured synthetic corpus as one JSONL file.
void cmd_synth(const Options& o) {
  Session s(o);
  if (!s.config().synthetic) throw ex::ConfigError("synth: config has no corpus.synthetic section");
  zshot::data::DomainRegistry domains;
  const auto corpus = ex::load_config_corpus(s.config(), domains);
  s.emit("corpus.jsonl", [&](std::ostream& out) { zshot::data::write_corpus(out, corpus, domains); });
}

int run_guarded(const std::function<void()>& f) {
  try {
    f();
    return 0;
  } catch (const ex::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const zshot::data::CorpusError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ex::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const zshot::model::TrainingError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const zshot::ad::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot multi-domain semantic parsing experiments"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;

  const std::vector<std::pair<std::string, std::pair<std::string, void (*)(const Options&)>>> commands{
      {"train", {"Train on every domain at the largest size and save a checkpoint", cmd_train}},
      {"eval", {"Evaluate a checkpoint on the target test split", cmd_eval}},
      {"loo", {"Leave-one-domain-out table", cmd_loo}},
      {"curve", {"Learning curves, single-domain and aggregate", cmd_curve}},
      {"flip", {"Flipped-label detection curves", cmd_flip}},
      {"augment", {"Influence-guided augmentation", cmd_augment}},
      {"influence", {"Influence of training examples and domains on the test loss", cmd_influence}},
      {"synth", {"Write the configured synthetic corpus as JSONL", cmd_synth}},
  };
  std::vector<std::pair<CLI::App*, void (*)(const Options&)>> subs;
  for (const auto& [name, info] : commands) {
    auto* sub = app.add_subcommand(name, info.first);
    sub->add_option("--config", opt.config, "TOML or JSON experiment config")->required();
    sub->add_option("--seed", seed, "Run this seed only");
    sub->add_option("--out-dir", opt.out_dir, "Output directory (overrides output_dir)");
    if (name == "train" || name == "eval" || name == "influence") {
      sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint path (default <out-dir>/model.json)");
    }
    subs.emplace_back(sub, info.second);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  for (const auto& [sub, fn] : subs) {
    if (sub->parsed()) {
      if (sub->count("--seed") > 0) opt.seed = seed;
      return run_guarded([&, fn = fn] { fn(opt); });
    }
  }
  return kExitOther;
}
