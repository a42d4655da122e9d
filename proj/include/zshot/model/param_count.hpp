#pragma once

// Closed-form parameter counts for the transfer architectures compared in the
// README. Only "zshot" is implemented (Parser); the others are analytic and
// share its building blocks:
//
//   emb   = V e                         enc_dir = 3d e + 3d^2 + 3d
//   enc   = 2 enc_dir                   init    = (2d)^2
//   dec   = 6d e + 12d^2 + 6d           attn    = (2d)^2
//   out   = 4d V
//
//   o2o   = emb + enc + init + dec + attn + out                 O(d^2 + dV)
//   zshot = o2o + 4d K                  (domain head W_T)       O(d^2 + dV)
//   e2d   = o2o + 2 * 3d K              (one-hot domain input)  O(d^2 + dV)
//   o2m   = o2o + (K - 1) 4d V          (one output layer/task) O(d^2 + KdV)
//   m2m   = emb + (K + 1) enc + 8d^2 + dec + attn + K out       O((K+1)d^2 + KdV)
//
// m2m's decoder init reads [shared, task-specific] final states, so W_s is 2d x 4d.

#include <cstddef>
#include <map>
#include <string>

#include "zshot/model/config.hpp"

namespace zshot::model {

struct BlockCounts {
  std::size_t emb, enc, init, dec, attn, out, domain_head;
};

inline BlockCounts block_counts(const ModelConfig& cfg, std::size_t vocab_size) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.hidden_dim);
  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  const auto K = static_cast<std::size_t>(cfg.num_domains);
  const auto V = vocab_size;
  const std::size_t enc_dir = 3 * d * e + 3 * d * d + 3 * d;
  return {V * e,
          2 * enc_dir,
          4 * d * d,
          6 * d * e + 12 * d * d + 6 * d,
          4 * d * d,
          4 * d * V,
          4 * d * K};
}

/// Exact counts keyed by architecture: o2o, o2m, m2m, e2d, zshot.
inline std::map<std::string, std::size_t> count_params(const ModelConfig& cfg,
                                                       std::size_t vocab_size) {
  const auto b = block_counts(cfg, vocab_size);
  const auto d = static_cast<std::size_t>(cfg.hidden_dim);
  const auto K = static_cast<std::size_t>(cfg.num_domains);
  const std::size_t o2o = b.emb + b.enc + b.init + b.dec + b.attn + b.out;
  return {
      {"o2o", o2o},
      {"o2m", o2o + (K - 1) * b.out},
      {"m2m", b.emb + (K + 1) * b.enc + 8 * d * d + b.dec + b.attn + K * b.out},
      {"e2d", o2o + 2 * 3 * d * K},
      {"zshot", o2o + b.domain_head},
  };
}

}  // namespace zshot::model
