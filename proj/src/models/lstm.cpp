#include "init.hpp"
#include "nmt/error.hpp"
#include "nmt/models.hpp"

namespace nmt::models {

using namespace nmt::ad;

namespace {

template <typename T>
struct CellState {
  Var<T> h;
  Var<T> c;
};

// Gate order i, f, g, o along the 4H axis.
template <typename T>
CellState<T> lstm_cell(Var<T> x, CellState<T> s, Var<T> w, Var<T> b, std::size_t hidden) {
  auto z = add_broadcast(matmul(concat({x, s.h}), w), b);
  auto i = sigmoid(slice_last(z, 0, hidden));
  auto f = sigmoid(slice_last(z, hidden, 2 * hidden));
  auto g = tanh(slice_last(z, 2 * hidden, 3 * hidden));
  auto o = sigmoid(slice_last(z, 3 * hidden, 4 * hidden));
  auto c = add(mul(f, s.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

template <typename T>
Var<T> maybe_dropout(Var<T> x, Rng* rng, double p) {
  return rng != nullptr ? ad::dropout(x, p, *rng) : x;
}

template <typename T>
struct DecoderWeights {
  Var<T> tgt_embed, cell_w, cell_b, w_query, v, comb_w, comb_b;

  static DecoderWeights bind(Tape<T>& tape, ParameterStore<T>& p) {
    return {tape.parameter(p.at("tgt_embed")), tape.parameter(p.at("dec.w")),
            tape.parameter(p.at("dec.b")),     tape.parameter(p.at("att.w_query")),
            tape.parameter(p.at("att.v")),     tape.parameter(p.at("out.w_comb")),
            tape.parameter(p.at("out.b_comb"))};
  }
};

// One decoder step: attend with h_{t-1}, feed [emb(y_{t-1}); context] to the
// cell, then combine the new state with the context.
template <typename T>
std::pair<Var<T>, CellState<T>> decoder_step(const DecoderWeights<T>& w, std::span<const int> prev,
                                             CellState<T> state, Var<T> keys, Var<T> keys_proj,
                                             std::span<const std::uint8_t> allowed,
                                             std::size_t hidden, Rng* rng, double p) {
  auto y = maybe_dropout(embedding(w.tgt_embed, prev), rng, p);
  auto att = additive_attention_projected(state.h, keys, keys_proj, w.w_query, w.v, allowed);
  auto next = lstm_cell(concat({y, att.context}), state, w.cell_w, w.cell_b, hidden);
  auto combined = tanh(add_broadcast(matmul(concat({next.h, att.context}), w.comb_w), w.comb_b));
  return {maybe_dropout(combined, rng, p), next};
}

template <typename T>
Var<T> zeros(Tape<T>& tape, std::size_t rows, std::size_t cols) {
  return tape.constant(Shape{rows, cols}, std::vector<T>(rows * cols, T(0)));
}

template <typename T>
class LstmStepDecoder final : public StepDecoder<T> {
 public:
  LstmStepDecoder(ParameterStore<T>& params, std::size_t hidden, Array<T> keys,
                  Array<T> keys_proj, Array<T> h, std::vector<std::uint8_t> allowed)
      : params_(params),
        hidden_(hidden),
        keys_(std::move(keys)),
        keys_proj_(std::move(keys_proj)),
        h_(std::move(h)),
        c_(h_.shape),
        allowed_(std::move(allowed)) {}

  std::vector<T> next(int prev_token) override {
    Tape<T> tape(false);
    auto w = DecoderWeights<T>::bind(tape, params_);
    const int prev[1] = {prev_token};
    CellState<T> state{tape.constant(h_), tape.constant(c_)};
    auto [out, s] = decoder_step(w, std::span<const int>(prev), state, tape.constant(keys_),
                                 tape.constant(keys_proj_), allowed_, hidden_,
                                 nullptr, 0.0);
    h_ = s.h.to_array();
    c_ = s.c.to_array();
    auto logits = add_broadcast(matmul(out, tape.parameter(params_.at("out.w"))),
                                tape.parameter(params_.at("out.b")));
    return {logits.value().begin(), logits.value().end()};
  }

 private:
  ParameterStore<T>& params_;
  std::size_t hidden_;
  Array<T> keys_, keys_proj_, h_, c_;
  std::vector<std::uint8_t> allowed_;
};

}  // namespace

template <typename T>
LstmModel<T>::LstmModel(const LstmConfig& config, std::uint64_t seed)
    : Seq2Seq<T>(ModelConfig{Family::kLstm, config, {}}) {
  config.validate();
  const std::size_t e = config.embed_dim, h = config.hidden_dim;
  Rng rng(seed);
  auto& p = this->params_;
  auto gate_bias = [&] {
    // Forget gate starts open.
    auto b = detail::filled<T>({4 * h}, T(0));
    std::fill(b.data.begin() + h, b.data.begin() + 2 * h, T(1));
    return b;
  };
  p.add("src_embed", detail::uniform<T>({config.src_vocab, e}, 0.1, rng));
  p.add("tgt_embed", detail::uniform<T>({config.tgt_vocab, e}, 0.1, rng));
  p.add("enc.fwd.w", detail::xavier<T>({e + h, 4 * h}, rng));
  p.add("enc.fwd.b", gate_bias());
  p.add("enc.bwd.w", detail::xavier<T>({e + h, 4 * h}, rng));
  p.add("enc.bwd.b", gate_bias());
  p.add("bridge.w", detail::xavier<T>({2 * h, h}, rng));
  p.add("bridge.b", detail::filled<T>({h}, T(0)));
  p.add("att.w_query", detail::xavier<T>({h, h}, rng));
  p.add("att.w_key", detail::xavier<T>({2 * h, h}, rng));
  p.add("att.v", detail::xavier<T>({h, 1}, rng));
  p.add("dec.w", detail::xavier<T>({e + 2 * h + h, 4 * h}, rng));
  p.add("dec.b", gate_bias());
  p.add("out.w_comb", detail::xavier<T>({3 * h, h}, rng));
  p.add("out.b_comb", detail::filled<T>({h}, T(0)));
  p.add("out.w", detail::xavier<T>({h, config.tgt_vocab}, rng));
  p.add("out.b", detail::filled<T>({config.tgt_vocab}, T(0)));
}

template <typename T>
LstmEncoding<T> LstmModel<T>::encode(Tape<T>& tape, std::span<const int> src,
                                     std::size_t batch, std::size_t len, Rng* rng) {
  require(batch > 0 && len > 0, "lstm encoder: empty source sequence");
  require(src.size() == batch * len, "lstm encoder: id matrix does not match [batch, len]");
  LstmEncoding<T> enc;
  enc.allowed.resize(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) enc.allowed[i] = src[i] != 0;
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t t = 0; t < len; ++t) any |= enc.allowed[b * len + t] != 0;
    require(any, "lstm encoder: source row " + std::to_string(b) + " has no real tokens");
  }
  const std::size_t h = cfg().hidden_dim;
  const double p = cfg().dropout;
  auto& params = this->params_;
  auto table = tape.parameter(params.at("src_embed"));

  std::vector<Var<T>> inputs;
  std::vector<std::vector<std::uint8_t>> step_mask(len);
  for (std::size_t t = 0; t < len; ++t) {
    const auto ids = detail::column(src, batch, len, t);
    inputs.push_back(maybe_dropout(embedding(table, std::span<const int>(ids)), rng, p));
    for (std::size_t b = 0; b < batch; ++b) step_mask[t].push_back(enc.allowed[b * len + t]);
  }

  // Pad positions carry the previous state, so a row's final forward state
  // is the state after its last real token and the backward pass starts
  // fresh at its last real token.
  auto run = [&](const char* w_name, const char* b_name, bool reverse) {
    auto w = tape.parameter(params.at(w_name));
    auto bias = tape.parameter(params.at(b_name));
    CellState<T> s{zeros(tape, batch, h), zeros(tape, batch, h)};
    std::vector<Var<T>> states(len);
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t t = reverse ? len - 1 - k : k;
      auto next = lstm_cell(inputs[t], s, w, bias, h);
      s.h = blend_rows(std::span<const std::uint8_t>(step_mask[t]), next.h, s.h);
      s.c = blend_rows(std::span<const std::uint8_t>(step_mask[t]), next.c, s.c);
      states[t] = s.h;
    }
    return std::pair(states, s.h);
  };
  auto [fwd, fwd_final] = run("enc.fwd.w", "enc.fwd.b", false);
  auto [bwd, bwd_final] = run("enc.bwd.w", "enc.bwd.b", true);

  std::vector<Var<T>> joined;
  for (std::size_t t = 0; t < len; ++t) joined.push_back(concat({fwd[t], bwd[t]}));
  enc.states = stack_middle(std::span<const Var<T>>(joined));
  enc.final_state = concat({fwd_final, bwd_final});
  return enc;
}

template <typename T>
Var<T> LstmModel<T>::forward(Tape<T>& tape, const TokenBatch& batch, Rng* rng) {
  const std::size_t h = cfg().hidden_dim, v = cfg().tgt_vocab;
  const std::size_t bsz = batch.batch, slen = batch.src_len, tlen = batch.tgt_len;
  require(tlen > 0, "lstm: empty target sequence");
  auto& params = this->params_;
  auto enc = encode(tape, batch.src, bsz, slen, rng);
  auto keys_proj = reshape(matmul(reshape(enc.states, {bsz * slen, 2 * h}),
                                  tape.parameter(params.at("att.w_key"))),
                           {bsz, slen, h});
  CellState<T> state{
      add_broadcast(matmul(enc.final_state, tape.parameter(params.at("bridge.w"))),
                    tape.parameter(params.at("bridge.b"))),
      zeros(tape, bsz, h)};
  auto w = DecoderWeights<T>::bind(tape, params);
  std::vector<Var<T>> outs;
  for (std::size_t t = 0; t < tlen; ++t) {
    const auto prev = detail::column(batch.tgt_in, bsz, tlen, t);
    auto [out, next] = decoder_step(w, std::span<const int>(prev), state, enc.states, keys_proj,
                                    enc.allowed, h, rng, cfg().dropout);
    outs.push_back(out);
    state = next;
  }
  auto hidden = reshape(stack_middle(std::span<const Var<T>>(outs)), {bsz * tlen, h});
  auto logits = add_broadcast(matmul(hidden, tape.parameter(params.at("out.w"))),
                              tape.parameter(params.at("out.b")));
  return reshape(logits, {bsz, tlen, v});
}

template <typename T>
std::unique_ptr<StepDecoder<T>> LstmModel<T>::start_decoding(std::span<const int> src) {
  require(!src.empty(), "lstm: empty source sequence");
  const std::size_t h = cfg().hidden_dim;
  Tape<T> tape(false);
  auto& params = this->params_;
  auto enc = encode(tape, src, 1, src.size(), nullptr);
  auto keys_proj = reshape(matmul(reshape(enc.states, {src.size(), 2 * h}),
                                  tape.parameter(params.at("att.w_key"))),
                           {1, src.size(), h});
  auto h0 = add_broadcast(matmul(enc.final_state, tape.parameter(params.at("bridge.w"))),
                          tape.parameter(params.at("bridge.b")));
  return std::make_unique<LstmStepDecoder<T>>(params, h, enc.states.to_array(),
                                              keys_proj.to_array(), h0.to_array(),
                                              std::move(enc.allowed));
}

template class LstmModel<float>;
template class LstmModel<double>;

}  // namespace nmt::models
