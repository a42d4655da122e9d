#pragma once

// Shared-encoder/shared-decoder semantic parser with a K x 4d domain head.
//
//   encoder   bidirectional LSTM without forget gate, d units per direction
//   decoder   LSTM (same cell) with 2d units, s_0 = tanh(W_s [h_fwd_n, h_bwd_1])
//   attention e_{j,i} = s_j^T W_a h_i, context c_j = sum_i softmax(e_j)_i h_i
//   output    softmax over [U [s_j, c_j] | e_{j,1..n}] (vocabulary, then copies)
//   domains   W_T [s_j, c_j], and W_T [b_n, c_n] on the encoder side
//
// The loss per example is
//   -sum_j log p(y_j) + w_dec/2 ||onehot(t) - pool_j softmax(W_T[s_j,c_j])||^2
//                     + w_enc/2 ||onehot(t) - softmax(W_T[b_n, c_n])||^2
// where b_n = [h_fwd_n, h_bwd_1] and c_n attends from s_0.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "zshot/autodiff/derivatives.hpp"
#include "zshot/autodiff/dual.hpp"
#include "zshot/autodiff/param_vector.hpp"
#include "zshot/autodiff/tape.hpp"
#include "zshot/data/example.hpp"
#include "zshot/data/random.hpp"
#include "zshot/data/vocab.hpp"
#include "zshot/model/config.hpp"

namespace zshot::model {

using ad::GradVector;
using ad::ParamVector;
using ad::Tape;
using ad::Var;
using data::Example;
using data::TaskId;
using data::Vocab;

struct DomainScores {
  std::vector<double> raw;
  std::vector<double> probs;
};

struct EncoderStates {
  std::vector<std::vector<double>> states;  // n vectors of width 2d
  std::vector<double> final_forward;        // forward state at position n
  std::vector<double> final_backward;       // backward state at position 1
  std::vector<int> source_rows;             // vocabulary index of each source token
  std::size_t length() const { return states.size(); }
};

struct DecoderStep {
  std::vector<double> state;      // s_j, width 2d
  std::vector<double> cell;       // LSTM memory, width 2d
  std::vector<double> context;    // c_j, width 2d (empty for the initial state)
  std::vector<double> attention;  // e_{j,i}, one per source position
  std::vector<double> token_probs;  // V + n entries
  DomainScores domain;
};

/// Names of the parameter blocks, in layout order.
namespace seg {
inline constexpr const char* kEmbedding = "embedding";
inline constexpr const char* kEncFwdWx = "encoder.forward.W_x";
inline constexpr const char* kEncFwdWh = "encoder.forward.W_h";
inline constexpr const char* kEncFwdB = "encoder.forward.b";
inline constexpr const char* kEncBwdWx = "encoder.backward.W_x";
inline constexpr const char* kEncBwdWh = "encoder.backward.W_h";
inline constexpr const char* kEncBwdB = "encoder.backward.b";
inline constexpr const char* kDecInit = "decoder_init.W_s";
inline constexpr const char* kDecWx = "decoder.W_x";
inline constexpr const char* kDecWh = "decoder.W_h";
inline constexpr const char* kDecB = "decoder.b";
inline constexpr const char* kAttention = "attention.W_a";
inline constexpr const char* kOutput = "output.U";
inline constexpr const char* kDomain = "domain.W_T";
}  // namespace seg

class Parser {
 public:
  Parser(ModelConfig config, Vocab vocab) : config_(config), vocab_(std::move(vocab)) {
    config_.validate();
    const auto d = static_cast<std::size_t>(config_.hidden_dim);
    const auto e = static_cast<std::size_t>(config_.embed_dim);
    const auto V = static_cast<std::size_t>(vocab_.size());
    const auto K = static_cast<std::size_t>(config_.num_domains);
    auto layout = std::make_shared<ad::Layout>();
    off_.emb = layout->add(seg::kEmbedding, V, e);
    off_.fwd_wx = layout->add(seg::kEncFwdWx, 3 * d, e);
    off_.fwd_wh = layout->add(seg::kEncFwdWh, 3 * d, d);
    off_.fwd_b = layout->add(seg::kEncFwdB, 3 * d);
    off_.bwd_wx = layout->add(seg::kEncBwdWx, 3 * d, e);
    off_.bwd_wh = layout->add(seg::kEncBwdWh, 3 * d, d);
    off_.bwd_b = layout->add(seg::kEncBwdB, 3 * d);
    off_.init = layout->add(seg::kDecInit, 2 * d, 2 * d);
    off_.dec_wx = layout->add(seg::kDecWx, 6 * d, e);
    off_.dec_wh = layout->add(seg::kDecWh, 6 * d, 2 * d);
    off_.dec_b = layout->add(seg::kDecB, 6 * d);
    off_.attn = layout->add(seg::kAttention, 2 * d, 2 * d);
    off_.out = layout->add(seg::kOutput, V, 4 * d);
    off_.dom = layout->add(seg::kDomain, K, 4 * d);
    layout_ = std::move(layout);
  }

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const std::shared_ptr<const ad::Layout>& layout() const { return layout_; }
  std::size_t num_params() const { return layout_->size(); }

  /// Every weight i.i.d. uniform on [-init_range, init_range].
  ParamVector init_params(std::uint64_t seed) const {
    auto rng = data::make_rng(seed, 0x1417);
    std::vector<double> v(layout_->size());
    for (double& x : v) x = data::uniform_real(rng, -config_.init_range, config_.init_range);
    return ParamVector(layout_, std::move(v));
  }

  // ------------------------------------------------------- LossFunction

  template <class T>
  Var evaluate(Tape<T>& tape, const Example& ex) const {
    return Graph<T>(*this, tape).loss(ex);
  }

  std::string sample_id(const Example& ex) const { return ex.id; }

  // ------------------------------------------------------ value API

  EncoderStates encode(const ParamVector& params, const std::vector<std::string>& source) const {
    check_params(params);
    Tape<double> tape(params.values(), {});
    Graph<double> g(*this, tape);
    const auto enc = g.encode(source);
    EncoderStates out;
    for (Var h : enc.states) out.states.push_back(tape.value(h));
    out.final_forward = tape.value(enc.final_fwd);
    out.final_backward = tape.value(enc.final_bwd);
    out.source_rows = enc.source_rows;
    return out;
  }

  DecoderStep init_decoder(const ParamVector& params, const EncoderStates& enc) const {
    check_params(params);
    Tape<double> tape(params.values(), {});
    Graph<double> g(*this, tape);
    const auto ge = g.from_values(enc);
    DecoderStep out;
    out.state = tape.value(ge.init_state);
    out.cell.assign(out.state.size(), 0.0);
    return out;
  }

  DecoderStep decode_step(const ParamVector& params, const DecoderStep& prev, int prev_token,
                          const EncoderStates& enc) const {
    check_params(params);
    if (prev_token < 0 || static_cast<std::size_t>(prev_token) >=
                              static_cast<std::size_t>(vocab_.size()) + enc.length()) {
      throw std::out_of_range("decode_step: token index out of range");
    }
    Tape<double> tape(params.values(), {});
    Graph<double> g(*this, tape);
    const auto ge = g.from_values(enc);
    const int row = vocab_.is_copy_index(prev_token)
                        ? ge.source_rows.at(static_cast<std::size_t>(prev_token - vocab_.size()))
                        : prev_token;
    const auto step = g.step(tape.constant(prev.state), tape.constant(prev.cell), row, ge);
    DecoderStep out;
    out.state = tape.value(step.state);
    out.cell = tape.value(step.cell);
    out.context = tape.value(step.context);
    out.attention = tape.value(step.attention);
    out.token_probs = Tape<double>::softmax_values(tape.value(step.logits));
    out.domain.raw = tape.value(step.domain);
    out.domain.probs = Tape<double>::softmax_values(out.domain.raw);
    return out;
  }

  double sequence_loss(const ParamVector& params, const Example& ex) const {
    check_params(params);
    Tape<double> tape(params.values(), {});
    return tape.scalar(evaluate(tape, ex));
  }

  /// Encoder-side domain scores W_T [b_n, c_n].
  DomainScores encoder_domain_scores(const ParamVector& params,
                                     const std::vector<std::string>& source) const {
    check_params(params);
    Tape<double> tape(params.values(), {});
    Graph<double> g(*this, tape);
    const auto enc = g.encode(source);
    DomainScores out;
    out.raw = tape.value(g.encoder_domain_logits(enc));
    out.probs = Tape<double>::softmax_values(out.raw);
    return out;
  }

  /// Raw domain scores summed over teacher-forced decoder steps.
  std::vector<double> summed_domain_scores(const ParamVector& params, const Example& ex) const {
    check_params(params);
    Tape<double> tape(params.values(), {});
    Graph<double> g(*this, tape);
    const auto enc = g.encode(ex.source);
    std::vector<double> total(static_cast<std::size_t>(config_.num_domains), 0.0);
    Var s = enc.init_state;
    Var c = enc.init_cell;
    int prev = Vocab::kEos;
    for (const auto& y : ex.target) {
      const auto st = g.step(s, c, prev, enc);
      const auto& raw = tape.value(st.domain);
      for (std::size_t k = 0; k < total.size(); ++k) total[k] += raw[k];
      s = st.state;
      c = st.cell;
      prev = vocab_.index(y);
    }
    return total;
  }

  /// argmax_k of the summed raw domain scores (lowest index wins ties).
  /// With an empty target the greedy-decoded steps are used instead.
  TaskId predict_task(const ParamVector& params, const Example& ex) const {
    if (ex.target.empty()) return predict_task(params, ex.source);
    return TaskId{argmax(summed_domain_scores(params, ex))};
  }

  TaskId predict_task(const ParamVector& params, const std::vector<std::string>& source) const {
    std::vector<double> total(static_cast<std::size_t>(config_.num_domains), 0.0);
    greedy(params, source, &total);
    return TaskId{argmax(total)};
  }

  /// Argmax decoding until EOS or max_decode_len tokens. Copy events emit the
  /// source token at that position. Padding is never emitted.
  std::vector<std::string> greedy_decode(const ParamVector& params,
                                         const std::vector<std::string>& source) const {
    return greedy(params, source, nullptr);
  }

  /// Gold events whose target token is neither in the vocabulary nor in the
  /// source and therefore fall back to the unknown index.
  std::size_t coverage_misses(const Example& ex) const {
    std::size_t n = 0;
    for (const auto& y : ex.target) {
      if (!vocab_.contains(y) && std::find(ex.source.begin(), ex.source.end(), y) == ex.source.end()) {
        ++n;
      }
    }
    return n;
  }

  /// Vocabulary index plus copy positions that realise gold token `y`.
  std::vector<std::size_t> gold_event(const std::string& y,
                                      const std::vector<std::string>& source) const {
    std::vector<std::size_t> ev;
    if (vocab_.contains(y)) ev.push_back(static_cast<std::size_t>(vocab_.index(y)));
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] == y) ev.push_back(static_cast<std::size_t>(vocab_.copy_index(i)));
    }
    if (ev.empty()) ev.push_back(static_cast<std::size_t>(Vocab::kUnk));
    return ev;
  }

 private:
  struct Offsets {
    std::size_t emb, fwd_wx, fwd_wh, fwd_b, bwd_wx, bwd_wh, bwd_b, init, dec_wx, dec_wh, dec_b,
        attn, out, dom;
  };

  template <class T>
  struct Encoded {
    std::vector<Var> states;  // [h_fwd_i, h_bwd_i]
    std::vector<Var> keys;    // W_a h_i
    std::vector<int> source_rows;
    Var final_fwd, final_bwd;
    Var summary;  // b_n
    Var init_state, init_cell;
  };

  template <class T>
  struct Step {
    Var state, cell, context, attention, logits, domain;
  };

  template <class T>
  class Graph {
   public:
    Graph(const Parser& p, Tape<T>& tape)
        : p_(p),
          t_(tape),
          d_(static_cast<std::size_t>(p.config_.hidden_dim)),
          e_(static_cast<std::size_t>(p.config_.embed_dim)),
          V_(static_cast<std::size_t>(p.vocab_.size())),
          K_(static_cast<std::size_t>(p.config_.num_domains)) {}

    Encoded<T> encode(const std::vector<std::string>& source) {
      const auto n = source.size();
      if (n == 0) throw std::invalid_argument("encode: empty source");
      if (n > p_.vocab_.max_source_len()) {
        throw std::invalid_argument("encode: source longer than the copy block (" +
                                    std::to_string(n) + " > " +
                                    std::to_string(p_.vocab_.max_source_len()) + ")");
      }
      const auto& o = p_.off_;
      Encoded<T> enc;
      std::vector<Var> x(n);
      for (std::size_t t = 0; t < n; ++t) {
        enc.source_rows.push_back(p_.vocab_.index(source[t]));
        x[t] = t_.param_row(o.emb, static_cast<std::size_t>(enc.source_rows[t]), e_);
      }
      std::vector<Var> fwd(n), bwd(n);
      Var h = t_.zeros(d_), c = t_.zeros(d_);
      for (std::size_t t = 0; t < n; ++t) {
        h = lstm(o.fwd_wx, o.fwd_wh, o.fwd_b, d_, x[t], h, c);
        fwd[t] = h;
      }
      h = t_.zeros(d_);
      c = t_.zeros(d_);
      for (std::size_t t = n; t-- > 0;) {
        h = lstm(o.bwd_wx, o.bwd_wh, o.bwd_b, d_, x[t], h, c);
        bwd[t] = h;
      }
      for (std::size_t t = 0; t < n; ++t) enc.states.push_back(t_.concat(fwd[t], bwd[t]));
      enc.final_fwd = fwd[n - 1];
      enc.final_bwd = bwd[0];
      finish(enc);
      return enc;
    }

    /// Rebuilds encoder nodes from stored values (no gradient flows into them).
    Encoded<T> from_values(const EncoderStates& es) {
      Encoded<T> enc;
      for (const auto& h : es.states) enc.states.push_back(t_.constant(lift(h)));
      enc.final_fwd = t_.constant(lift(es.final_forward));
      enc.final_bwd = t_.constant(lift(es.final_backward));
      enc.source_rows = es.source_rows;
      if (enc.source_rows.size() != es.states.size()) {
        enc.source_rows.assign(es.states.size(), Vocab::kUnk);
      }
      finish(enc);
      return enc;
    }

    Step<T> step(Var prev_state, Var prev_cell, int prev_row, const Encoded<T>& enc) {
      const auto& o = p_.off_;
      Step<T> st;
      const Var x = t_.param_row(o.emb, static_cast<std::size_t>(prev_row), e_);
      Var c = prev_cell;
      st.state = lstm(o.dec_wx, o.dec_wh, o.dec_b, 2 * d_, x, prev_state, c);
      st.cell = c;
      st.attention = t_.dots(st.state, enc.keys);
      st.context = t_.weighted_sum(t_.softmax(st.attention), enc.states);
      const Var sc = t_.concat(st.state, st.context);
      st.logits = t_.concat(t_.matvec(o.out, V_, 4 * d_, sc), st.attention);
      st.domain = t_.matvec(o.dom, K_, 4 * d_, sc);
      return st;
    }

    Var encoder_domain_logits(const Encoded<T>& enc) {
      const Var ctx = t_.weighted_sum(t_.softmax(t_.dots(enc.init_state, enc.keys)), enc.states);
      return t_.matvec(p_.off_.dom, K_, 4 * d_, t_.concat(enc.summary, ctx));
    }

    Var loss(const Example& ex) {
      if (ex.target.empty()) throw std::invalid_argument("sequence_loss: empty target");
      const auto k = static_cast<std::size_t>(ex.domain.index);
      if (k >= K_) throw std::out_of_range("sequence_loss: domain outside the domain head");
      const auto enc = encode(ex.source);
      std::vector<Var> terms;
      std::vector<Var> dom_probs;
      Var s = enc.init_state;
      Var c = enc.init_cell;
      int prev = Vocab::kEos;  // EOS doubles as the start symbol
      for (const auto& y : ex.target) {
        const auto st = step(s, c, prev, enc);
        terms.push_back(t_.neg_log_mass(st.logits, p_.gold_event(y, ex.source)));
        dom_probs.push_back(t_.softmax(st.domain));
        s = st.state;
        c = st.cell;
        prev = p_.vocab_.index(y);
      }
      const auto& cfg = p_.config_;
      const Var pooled =
          cfg.decoder_pooling == DecoderPooling::kMean ? t_.mean(dom_probs) : dom_probs.back();
      terms.push_back(t_.scale(t_.half_sq_dist_to_onehot(pooled, k), 2.0 * cfg.decoder_reg_weight));
      const Var q_enc = t_.softmax(encoder_domain_logits(enc));
      terms.push_back(t_.scale(t_.half_sq_dist_to_onehot(q_enc, k), 2.0 * cfg.encoder_reg_weight));
      return t_.sum_scalars(terms);
    }

   private:
    Var lstm(std::size_t wx, std::size_t wh, std::size_t b, std::size_t h_dim, Var x, Var h,
             Var& c) {
      Var pre = t_.add(t_.matvec(wx, 3 * h_dim, e_, x), t_.matvec(wh, 3 * h_dim, h_dim, h));
      pre = t_.add_param(pre, b);
      c = t_.lstm_cell(pre, c);
      return t_.lstm_hidden(pre, c);
    }

    void finish(Encoded<T>& enc) {
      const auto& o = p_.off_;
      for (Var h : enc.states) enc.keys.push_back(t_.matvec(o.attn, 2 * d_, 2 * d_, h));
      enc.summary = t_.concat(enc.final_fwd, enc.final_bwd);
      enc.init_state = t_.tanh(t_.matvec(o.init, 2 * d_, 2 * d_, enc.summary));
      enc.init_cell = t_.zeros(2 * d_);
    }

    static std::vector<T> lift(const std::vector<double>& v) { return {v.begin(), v.end()}; }

    const Parser& p_;
    Tape<T>& t_;
    std::size_t d_, e_, V_, K_;
  };

  std::vector<std::string> greedy(const ParamVector& params, const std::vector<std::string>& source,
                                  std::vector<double>* domain_total) const {
    check_params(params);
    Tape<double> tape(params.values(), {});
    Graph<double> g(*this, tape);
    const auto enc = g.encode(source);
    std::vector<std::string> out;
    Var s = enc.init_state;
    Var c = enc.init_cell;
    int prev = Vocab::kEos;
    for (int j = 0; j < config_.max_decode_len; ++j) {
      const auto st = g.step(s, c, prev, enc);
      if (domain_total) {
        const auto& raw = tape.value(st.domain);
        for (std::size_t k = 0; k < domain_total->size(); ++k) (*domain_total)[k] += raw[k];
      }
      const auto& logits = tape.value(st.logits);
      int best = -1;
      for (std::size_t i = 0; i < logits.size(); ++i) {
        if (static_cast<int>(i) == Vocab::kPad) continue;
        if (best < 0 || logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
      }
      if (best == Vocab::kEos) break;
      if (vocab_.is_copy_index(best)) {
        const auto pos = static_cast<std::size_t>(best - vocab_.size());
        out.push_back(source[pos]);
        prev = enc.source_rows[pos];
      } else {
        out.push_back(vocab_.token(best));
        prev = best;
      }
      s = st.state;
      c = st.cell;
    }
    return out;
  }

  static int argmax(const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
  }

  void check_params(const ParamVector& params) const {
    if (params.size() != layout_->size()) {
      throw std::invalid_argument("parameter vector does not match the model layout");
    }
  }

  ModelConfig config_;
  Vocab vocab_;
  std::shared_ptr<const ad::Layout> layout_;
  Offsets off_{};
};

static_assert(ad::LossFunction<Parser, Example>);

}  // namespace zshot::model
