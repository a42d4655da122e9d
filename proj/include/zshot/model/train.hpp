#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zshot/autodiff/derivatives.hpp"
#include "zshot/data/random.hpp"
#include "zshot/model/config.hpp"
#include "zshot/model/parser.hpp"

namespace zshot::model {

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch, std::string example_id)
      : std::runtime_error(what + " at epoch " + std::to_string(epoch) + ", example " + example_id),
        epoch_(epoch),
        example_id_(std::move(example_id)) {}
  int epoch() const { return epoch_; }
  const std::string& example_id() const { return example_id_; }

 private:
  int epoch_;
  std::string example_id_;
};

struct TrainResult {
  ParamVector params;
  std::vector<double> epoch_loss;  // mean per-example loss seen during each epoch
};

/// Per-example SGD over a seeded shuffle per epoch with global-norm clipping.
template <class Loss, class Sample>
  requires ad::LossFunction<Loss, Sample>
TrainResult sgd(const Loss& loss, const ParamVector& init, const std::vector<Sample>& train_set,
                const TrainConfig& cfg, std::uint64_t seed) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  std::vector<double> theta(init.values().begin(), init.values().end());
  std::vector<double> g(theta.size());
  std::vector<std::size_t> order(train_set.size());
  TrainResult out{init, {}};
  double lr = cfg.lr0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = data::make_rng(seed, 0x5EED0000u + static_cast<std::uint64_t>(epoch));
    data::shuffle(order, rng);
    double total = 0.0;
    for (auto idx : order) {
      const auto& s = train_set[idx];
      std::fill(g.begin(), g.end(), 0.0);
      ad::Tape<double> tape(theta, g);
      const auto out_var = loss.evaluate(tape, s);
      const double v = tape.scalar(out_var);
      if (!std::isfinite(v)) throw TrainingError("non-finite loss", epoch, loss.sample_id(s));
      tape.backward(out_var);
      double sq = 0.0;
      for (double x : g) sq += x * x;
      if (!std::isfinite(sq)) throw TrainingError("non-finite gradient", epoch, loss.sample_id(s));
      double step = lr;
      const double gn = std::sqrt(sq);
      if (cfg.clip_norm > 0.0 && gn > cfg.clip_norm) step *= cfg.clip_norm / gn;
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= step * g[i];
      total += v;
    }
    out.epoch_loss.push_back(total / static_cast<double>(train_set.size()));
    lr *= cfg.decay;
  }
  out.params = init.with_values(std::move(theta));
  return out;
}

inline TrainResult train(const Parser& parser, const ParamVector& init,
                         const std::vector<data::Example>& train_set, const TrainConfig& cfg,
                         std::uint64_t seed) {
  return sgd(parser, init, train_set, cfg, seed);
}

}  // namespace zshot::model
