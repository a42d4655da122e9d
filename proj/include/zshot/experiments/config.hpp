#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zshot/autodiff/derivatives.hpp"
#include "zshot/data/corpus.hpp"
#include "zshot/data/synthetic.hpp"
#include "zshot/influence/influence.hpp"
#include "zshot/model/checkpoint.hpp"
#include "zshot/model/config.hpp"

namespace zshot::experiments {

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SyntheticCorpus {
  std::vector<std::string> domains;  // preset grammar names
  int per_domain = 150;
  std::uint64_t seed = 1;
};

struct FlipSettings {
  std::string source;  // examples relabeled from this domain
  std::string victim;  // to this one
  std::vector<double> fractions{0.05, 0.10, 0.15, 0.20, 0.25};
  int size = 20;  // per-domain training examples
  influence::SuspectScore mode = influence::SuspectScore::kSelf;
  int validation_size = 10;  // per domain, validation mode only
};

/// Augment draws come from flip.source, using the flip trials' rankings.
struct AugmentSettings {
  int draws = 100;
  std::vector<int> sizes{10, 20, 30, 40};
};

struct ExperimentConfig {
  std::vector<std::string> corpus_paths;
  std::optional<SyntheticCorpus> synthetic;
  std::string target_domain;
  std::vector<int> sizes{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::vector<std::uint64_t> seeds{0};
  int test_size = 50;
  std::uint64_t split_seed = 12345;
  model::ModelConfig model;
  model::TrainConfig train;
  ad::CgOptions solver;
  int loo_size = 100;
  FlipSettings flip;
  AugmentSettings augment;
  std::string output_dir = "out";

  void validate() const {
    if (corpus_paths.empty() == !synthetic.has_value()) {
      throw ConfigError("config: give exactly one of corpus.paths or corpus.synthetic");
    }
    if (target_domain.empty()) throw ConfigError("config: target_domain is required");
    if (seeds.empty()) throw ConfigError("config: at least one seed is required");
    if (sizes.empty() || !std::is_sorted(sizes.begin(), sizes.end()) || sizes.front() < 1) {
      throw ConfigError("config: sizes must be positive and ascending");
    }
    if (test_size < 1) throw ConfigError("config: test_size must be >= 1");
    if (loo_size < 1) throw ConfigError("config: loo.size must be >= 1");
    if (train.epochs < 0) throw ConfigError("config: train.epochs must be >= 0");
    if (solver.damping < 0.0 || !(solver.tol > 0.0) || solver.max_iter < 1) {
      throw ConfigError("config: solver needs damping >= 0, tol > 0, max_iter >= 1");
    }
    for (double f : flip.fractions) {
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("config: flip fractions must be in (0, 1]");
    }
    if (flip.size < 1) throw ConfigError("config: flip.size must be >= 1");
    if (augment.draws < 1) throw ConfigError("config: augment.draws must be >= 1");
    try {
      model.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: model: ") + e.what());
    }
  }
};

namespace detail {

template <class T>
T get(const nlohmann::json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: field \"") + key + "\" has the wrong type");
  }
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("config: \"") + key + "\" must be a table");
  return j.at(key);
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
  }
}

}  // namespace detail

/// Keys, all optional except the corpus and target_domain:
///   corpus.paths | corpus.synthetic{domains, per_domain, seed}, target_domain,
///   sizes, seeds, test_size, split_seed, output_dir,
///   model{...}, train{epochs, lr0, decay, clip_norm},
///   solver{damping, tol, max_iter}, loo{size},
///   flip{source, victim, fractions, size, mode, validation_size},
///   augment{draws, sizes}
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using detail::get;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j, {"corpus", "target_domain", "sizes", "seeds", "test_size", "split_seed",
                             "output_dir", "model", "train", "solver", "loo", "flip", "augment"},
                         "top level");
  ExperimentConfig c;
  const auto& corpus = detail::section(j, "corpus");
  detail::reject_unknown(corpus, {"paths", "synthetic"}, "corpus");
  c.corpus_paths = get(corpus, "paths", c.corpus_paths);
  if (corpus.contains("synthetic")) {
    const auto& s = detail::section(corpus, "synthetic");
    detail::reject_unknown(s, {"domains", "per_domain", "seed"}, "corpus.synthetic");
    SyntheticCorpus syn;
    syn.domains = get(s, "domains", syn.domains);
    syn.per_domain = get(s, "per_domain", syn.per_domain);
    syn.seed = get(s, "seed", syn.seed);
    if (syn.domains.empty()) throw ConfigError("config: corpus.synthetic.domains is empty");
    c.synthetic = syn;
  }
  c.target_domain = get(j, "target_domain", c.target_domain);
  c.sizes = get(j, "sizes", c.sizes);
  c.seeds = get(j, "seeds", c.seeds);
  c.test_size = get(j, "test_size", c.test_size);
  c.split_seed = get(j, "split_seed", c.split_seed);
  c.output_dir = get(j, "output_dir", c.output_dir);

  const auto& m = detail::section(j, "model");
  detail::reject_unknown(m, {"hidden_dim", "embed_dim", "num_domains", "max_decode_len", "init_range",
                             "decoder_reg_weight", "encoder_reg_weight", "decoder_pooling"},
                         "model");
  try {
    c.model = model::config_from_json(m, c.model);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: model: ") + e.what());
  }

  const auto& t = detail::section(j, "train");
  detail::reject_unknown(t, {"epochs", "lr0", "decay", "clip_norm"}, "train");
  c.train.epochs = get(t, "epochs", c.train.epochs);
  c.train.lr0 = get(t, "lr0", c.train.lr0);
  c.train.decay = get(t, "decay", c.train.decay);
  c.train.clip_norm = get(t, "clip_norm", c.train.clip_norm);

  const auto& s = detail::section(j, "solver");
  detail::reject_unknown(s, {"damping", "tol", "max_iter"}, "solver");
  c.solver.damping = get(s, "damping", c.solver.damping);
  c.solver.tol = get(s, "tol", c.solver.tol);
  c.solver.max_iter = get(s, "max_iter", c.solver.max_iter);

  detail::reject_unknown(detail::section(j, "loo"), {"size"}, "loo");
  c.loo_size = get(detail::section(j, "loo"), "size", c.loo_size);

  const auto& f = detail::section(j, "flip");
  detail::reject_unknown(f, {"source", "victim", "fractions", "size", "mode", "validation_size"}, "flip");
  c.flip.source = get(f, "source", c.flip.source);
  c.flip.victim = get(f, "victim", c.flip.victim);
  c.flip.fractions = get(f, "fractions", c.flip.fractions);
  c.flip.size = get(f, "size", c.flip.size);
  c.flip.validation_size = get(f, "validation_size", c.flip.validation_size);
  const auto mode = get(f, "mode", std::string("self"));
  if (mode == "self") {
    c.flip.mode = influence::SuspectScore::kSelf;
  } else if (mode == "validation") {
    c.flip.mode = influence::SuspectScore::kValidation;
  } else {
    throw ConfigError("config: flip.mode must be \"self\" or \"validation\"");
  }

  const auto& a = detail::section(j, "augment");
  detail::reject_unknown(a, {"draws", "sizes"}, "augment");
  c.augment.draws = get(a, "draws", c.augment.draws);
  c.augment.sizes = get(a, "sizes", c.augment.sizes);

  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return parse_experiment_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline const data::DomainGrammar& preset_grammar(const std::string& name) {
  static const auto presets = data::grammars::all();
  for (const auto& g : presets) {
    if (g.name == name) return g;
  }
  throw ConfigError("config: no synthetic grammar named \"" + name + "\"");
}

/// The corpus named by the config, with its domain registry.
inline std::vector<data::Example> load_config_corpus(const ExperimentConfig& c,
                                                     data::DomainRegistry& domains) {
  std::vector<data::Example> out;
  if (c.synthetic) {
    for (const auto& name : c.synthetic->domains) {
      auto part = data::generate(preset_grammar(name), c.synthetic->per_domain, c.synthetic->seed, domains);
      out.insert(out.end(), part.begin(), part.end());
    }
  } else {
    std::set<std::string> ids;
    for (const auto& p : c.corpus_paths) {
      auto part = data::load_corpus(p, domains);
      for (const auto& e : part) {
        if (!ids.insert(e.id).second) throw ConfigError("duplicate example id across corpora: " + e.id);
      }
      out.insert(out.end(), part.begin(), part.end());
    }
  }
  if (!domains.contains(c.target_domain)) {
    throw ConfigError("config: target domain \"" + c.target_domain + "\" is not in the corpus");
  }
  return out;
}

}  // namespace zshot::experiments
