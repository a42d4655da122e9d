#pragma once

// Self-describing JSON checkpoint: config, vocabulary, domain names, segment
// table and parameter values. Doubles are written in shortest round-trip form,
// so save/load is bit exact.

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zshot/data/example.hpp"
#include "zshot/data/vocab.hpp"
#include "zshot/model/config.hpp"
#include "zshot/model/parser.hpp"

namespace zshot::model {

inline constexpr const char* kCheckpointFormat = "zshot-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  data::Vocab vocab;
  data::DomainRegistry domains;
  ParamVector params;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"hidden_dim", c.hidden_dim},
          {"embed_dim", c.embed_dim},
          {"num_domains", c.num_domains},
          {"max_decode_len", c.max_decode_len},
          {"init_range", c.init_range},
          {"decoder_reg_weight", c.decoder_reg_weight},
          {"encoder_reg_weight", c.encoder_reg_weight},
          {"decoder_pooling", to_string(c.decoder_pooling)}};
}

/// Reads known keys, leaving defaults for absent ones.
inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.num_domains = j.value("num_domains", c.num_domains);
  c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
  c.init_range = j.value("init_range", c.init_range);
  c.decoder_reg_weight = j.value("decoder_reg_weight", c.decoder_reg_weight);
  c.encoder_reg_weight = j.value("encoder_reg_weight", c.encoder_reg_weight);
  if (j.contains("decoder_pooling")) {
    c.decoder_pooling = parse_pooling(j.at("decoder_pooling").get<std::string>());
  }
  return c;
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : ck.params.layout().segments()) {
    segs.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config", config_to_json(ck.config)},
          {"vocab", {{"tokens", ck.vocab.entries()}, {"max_source_len", ck.vocab.max_source_len()}}},
          {"domains", ck.domains.names()},
          {"segments", segs},
          {"params", std::vector<double>(ck.params.values().begin(), ck.params.values().end())}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != kCheckpointFormat) {
    throw std::runtime_error("not a zshot checkpoint");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  Checkpoint ck;
  ck.config = config_from_json(j.at("config"));
  ck.vocab = data::Vocab(j.at("vocab").at("tokens").get<std::vector<std::string>>(),
                         j.at("vocab").at("max_source_len").get<std::size_t>());
  ck.domains = data::DomainRegistry(j.at("domains").get<std::vector<std::string>>());
  const Parser parser(ck.config, ck.vocab);
  const auto& segs = j.at("segments");
  const auto& expected = parser.layout()->segments();
  if (segs.size() != expected.size()) throw std::runtime_error("checkpoint segment table mismatch");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = segs[i];
    if (s.at("name").get<std::string>() != expected[i].name ||
        s.at("offset").get<std::size_t>() != expected[i].offset ||
        s.at("rows").get<std::size_t>() != expected[i].rows ||
        s.at("cols").get<std::size_t>() != expected[i].cols) {
      throw std::runtime_error("checkpoint segment " + expected[i].name + " does not match config");
    }
  }
  ck.params = ParamVector(parser.layout(), j.at("params").get<std::vector<double>>());
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << checkpoint_to_json(ck).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace zshot::model
