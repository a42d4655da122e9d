#pragma once

#include <stdexcept>
#include <string>

namespace zshot::model {

/// How decoder-side domain probabilities are pooled in the regularizer.
enum class DecoderPooling {
  kMean,   // mean over decoder steps
  kFinal,  // last decoder step only
};

struct ModelConfig {
  int hidden_dim = 200;  // d; the decoder state and contexts are 2d wide
  int embed_dim = 100;
  int num_domains = 1;  // K
  int max_decode_len = 100;
  double init_range = 1.0;  // weights ~ U[-init_range, init_range]
  double decoder_reg_weight = 0.5;
  double encoder_reg_weight = 0.5;
  DecoderPooling decoder_pooling = DecoderPooling::kMean;

  void validate() const {
    if (hidden_dim <= 0) throw std::invalid_argument("hidden_dim must be positive");
    if (embed_dim <= 0) throw std::invalid_argument("embed_dim must be positive");
    if (num_domains <= 0) throw std::invalid_argument("num_domains must be positive");
    if (max_decode_len < 1) throw std::invalid_argument("max_decode_len must be >= 1");
    if (!(init_range >= 0.0)) throw std::invalid_argument("init_range must be >= 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline std::string to_string(DecoderPooling p) { return p == DecoderPooling::kMean ? "mean" : "final"; }

inline DecoderPooling parse_pooling(const std::string& s) {
  if (s == "mean") return DecoderPooling::kMean;
  if (s == "final") return DecoderPooling::kFinal;
  throw std::invalid_argument("unknown decoder pooling: " + s);
}

/// Plain SGD schedule: lr at epoch e is lr0 * decay^e.
struct TrainConfig {
  int epochs = 15;
  double lr0 = 0.5;
  double decay = 0.5;
  double clip_norm = 5.0;  // <= 0 disables clipping

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace zshot::model
