#include <cmath>

#include "init.hpp"
#include "nmt/error.hpp"
#include "nmt/models.hpp"

namespace nmt::models {

using namespace nmt::ad;

namespace {

template <typename T>
Var<T> maybe_dropout(Var<T> x, Rng* rng, double p) {
  return rng != nullptr ? ad::dropout(x, p, *rng) : x;
}

template <typename T>
void add_projection(ParameterStore<T>& p, const std::string& prefix, std::size_t dim, Rng& rng) {
  for (const char* m : {"q", "k", "v", "o"}) {
    p.add(prefix + ".w_" + m, detail::xavier<T>({dim, dim}, rng));
    p.add(prefix + ".b_" + m, detail::filled<T>({dim}, T(0)));
  }
}

template <typename T>
void add_norm(ParameterStore<T>& p, const std::string& prefix, std::size_t dim) {
  p.add(prefix + ".g", detail::filled<T>({dim}, T(1)));
  p.add(prefix + ".b", detail::filled<T>({dim}, T(0)));
}

template <typename T>
void add_feed_forward(ParameterStore<T>& p, const std::string& prefix, std::size_t dim,
                      std::size_t ff, Rng& rng) {
  p.add(prefix + ".w1", detail::xavier<T>({dim, ff}, rng));
  p.add(prefix + ".b1", detail::filled<T>({ff}, T(0)));
  p.add(prefix + ".w2", detail::xavier<T>({ff, dim}, rng));
  p.add(prefix + ".b2", detail::filled<T>({dim}, T(0)));
}

// Binds parameters of one model to one tape by name.
template <typename T>
struct Binder {
  Tape<T>& tape;
  ParameterStore<T>& params;

  Var<T> operator()(const std::string& name) const { return tape.parameter(params.at(name)); }

  ProjectionWeights<T> projection(const std::string& prefix) const {
    const auto& b = *this;
    return {b(prefix + ".w_q"), b(prefix + ".b_q"), b(prefix + ".w_k"), b(prefix + ".b_k"),
            b(prefix + ".w_v"), b(prefix + ".b_v"), b(prefix + ".w_o"), b(prefix + ".b_o")};
  }

  Var<T> norm(const std::string& prefix, Var<T> x) const {
    return layer_norm(x, (*this)(prefix + ".g"), (*this)(prefix + ".b"));
  }

  Var<T> feed_forward(const std::string& prefix, Var<T> x, Rng* rng, double p) const {
    const Shape s = x.shape();
    auto flat = reshape(x, {s[0] * s[1], s[2]});
    auto hidden = relu(add_broadcast(matmul(flat, (*this)(prefix + ".w1")), (*this)(prefix + ".b1")));
    hidden = maybe_dropout(hidden, rng, p);
    auto out = add_broadcast(matmul(hidden, (*this)(prefix + ".w2")), (*this)(prefix + ".b2"));
    return reshape(out, s);
  }
};

// Residual sublayer in pre-norm (x + f(LN(x))) or post-norm (LN(x + f(x)))
// arrangement.
template <typename T, typename F>
Var<T> sublayer(const Binder<T>& bind, const std::string& norm, Var<T> x, bool pre_norm,
                Rng* rng, double p, F f) {
  if (pre_norm) return add(x, maybe_dropout(f(bind.norm(norm, x)), rng, p));
  return bind.norm(norm, add(x, maybe_dropout(f(x), rng, p)));
}

// allowed[b, i, j] = key_allowed[b, j] for a [B, tq, tk] mask.
std::vector<std::uint8_t> key_mask(std::span<const std::uint8_t> key_allowed, std::size_t batch,
                                   std::size_t tq, std::size_t tk) {
  std::vector<std::uint8_t> m(batch * tq * tk);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < tq; ++i) {
      std::copy_n(key_allowed.data() + b * tk, tk, m.data() + (b * tq + i) * tk);
    }
  }
  return m;
}

template <typename T>
class TransformerStepDecoder final : public StepDecoder<T> {
 public:
  TransformerStepDecoder(TransformerModel<T>& model, Array<T> memory,
                         std::vector<std::uint8_t> allowed)
      : model_(model), memory_(std::move(memory)), allowed_(std::move(allowed)) {}

  // The whole prefix is re-decoded each step; only the last position's
  // logits are returned.
  std::vector<T> next(int prev_token) override {
    prefix_.push_back(prev_token);
    Tape<T> tape(false);
    auto logits = model_.decode(tape, tape.constant(memory_), allowed_, prefix_, 1,
                                prefix_.size(), nullptr);
    const std::size_t v = logits.shape()[2];
    auto all = logits.value();
    return {all.end() - static_cast<std::ptrdiff_t>(v), all.end()};
  }

 private:
  TransformerModel<T>& model_;
  Array<T> memory_;
  std::vector<std::uint8_t> allowed_;
  std::vector<int> prefix_;
};

}  // namespace

template <typename T>
TransformerModel<T>::TransformerModel(const TransformerConfig& config, std::uint64_t seed)
    : Seq2Seq<T>(ModelConfig{Family::kTransformer, {}, config}),
      positions_(positional_encoding<T>(config.max_positions, config.model_dim)) {
  config.validate();
  const std::size_t d = config.model_dim;
  Rng rng(seed);
  auto& p = this->params_;
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(d));
  p.add("src_embed", detail::gaussian<T>({config.src_vocab, d}, embed_std, rng));
  p.add("tgt_embed", detail::gaussian<T>({config.tgt_vocab, d}, embed_std, rng));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string e = "enc." + std::to_string(l);
    add_norm(p, e + ".ln1", d);
    add_projection(p, e + ".self", d, rng);
    add_norm(p, e + ".ln2", d);
    add_feed_forward(p, e + ".ff", d, config.ff_dim, rng);
  }
  if (config.pre_norm) add_norm(p, std::string("enc.ln"), d);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string e = "dec." + std::to_string(l);
    add_norm(p, e + ".ln1", d);
    add_projection(p, e + ".self", d, rng);
    add_norm(p, e + ".ln2", d);
    add_projection(p, e + ".cross", d, rng);
    add_norm(p, e + ".ln3", d);
    add_feed_forward(p, e + ".ff", d, config.ff_dim, rng);
  }
  if (config.pre_norm) add_norm(p, std::string("dec.ln"), d);
  p.add("out.w", detail::xavier<T>({d, config.tgt_vocab}, rng));
  p.add("out.b", detail::filled<T>({config.tgt_vocab}, T(0)));
}

namespace {

template <typename T>
Var<T> embed(Tape<T>& tape, Var<T> table, std::span<const int> ids, std::size_t batch,
             std::size_t len, const Array<T>& positions, Rng* rng, double p) {
  const std::size_t d = table.shape()[1];
  require(len <= positions.shape[0], "transformer: sequence length " + std::to_string(len) +
                                         " exceeds the positional table of " +
                                         std::to_string(positions.shape[0]));
  auto x = scale(reshape(embedding(table, ids), {batch, len, d}),
                 static_cast<T>(std::sqrt(static_cast<double>(d))));
  std::vector<T> pe(positions.data.begin(),
                    positions.data.begin() + static_cast<std::ptrdiff_t>(len * d));
  x = add_broadcast(x, tape.constant(Shape{len, d}, std::move(pe)));
  return maybe_dropout(x, rng, p);
}

}  // namespace

template <typename T>
Var<T> TransformerModel<T>::encode(Tape<T>& tape, std::span<const int> src, std::size_t batch,
                                   std::size_t len, std::span<const std::uint8_t> src_allowed,
                                   Rng* rng) {
  require(batch > 0 && len > 0, "transformer encoder: empty source sequence");
  require(src.size() == batch * len && src_allowed.size() == src.size(),
          "transformer encoder: id matrix does not match [batch, len]");
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t t = 0; t < len; ++t) any |= src_allowed[b * len + t] != 0;
    require(any, "transformer encoder: source row " + std::to_string(b) + " has no real tokens");
  }
  const auto& c = cfg();
  Binder<T> bind{tape, this->params_};
  auto x = embed(tape, bind("src_embed"), src, batch, len, positions_, rng, c.dropout);
  const auto mask = key_mask(src_allowed, batch, len, len);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string e = "enc." + std::to_string(l);
    const auto w = bind.projection(e + ".self");
    x = sublayer(bind, e + ".ln1", x, c.pre_norm, rng, c.dropout, [&](Var<T> in) {
      return multi_head_attention(in, in, w, c.heads, mask, rng, c.dropout).context;
    });
    x = sublayer(bind, e + ".ln2", x, c.pre_norm, rng, c.dropout, [&](Var<T> in) {
      return bind.feed_forward(e + ".ff", in, rng, c.dropout);
    });
  }
  return c.pre_norm ? bind.norm("enc.ln", x) : x;
}

template <typename T>
Var<T> TransformerModel<T>::decode(Tape<T>& tape, Var<T> memory,
                                   std::span<const std::uint8_t> src_allowed,
                                   std::span<const int> tgt_in, std::size_t batch,
                                   std::size_t tgt_len, Rng* rng) {
  require(tgt_len > 0, "transformer decoder: empty target sequence");
  require(tgt_in.size() == batch * tgt_len, "transformer decoder: ids do not match [batch, len]");
  const auto& c = cfg();
  const std::size_t src_len = memory.shape()[1];
  Binder<T> bind{tape, this->params_};
  auto x = embed(tape, bind("tgt_embed"), tgt_in, batch, tgt_len, positions_, rng, c.dropout);
  const auto causal = causal_mask(tgt_len);
  std::vector<std::uint8_t> self_mask(batch * tgt_len * tgt_len);
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(causal.begin(), causal.end(), self_mask.begin() + b * tgt_len * tgt_len);
  }
  const auto cross_mask = key_mask(src_allowed, batch, tgt_len, src_len);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string e = "dec." + std::to_string(l);
    const auto self_w = bind.projection(e + ".self");
    const auto cross_w = bind.projection(e + ".cross");
    x = sublayer(bind, e + ".ln1", x, c.pre_norm, rng, c.dropout, [&](Var<T> in) {
      return multi_head_attention(in, in, self_w, c.heads, self_mask, rng, c.dropout).context;
    });
    x = sublayer(bind, e + ".ln2", x, c.pre_norm, rng, c.dropout, [&](Var<T> in) {
      return multi_head_attention(in, memory, cross_w, c.heads, cross_mask, rng, c.dropout)
          .context;
    });
    x = sublayer(bind, e + ".ln3", x, c.pre_norm, rng, c.dropout, [&](Var<T> in) {
      return bind.feed_forward(e + ".ff", in, rng, c.dropout);
    });
  }
  if (c.pre_norm) x = bind.norm("dec.ln", x);
  auto flat = reshape(x, {batch * tgt_len, c.model_dim});
  auto logits = add_broadcast(matmul(flat, bind("out.w")), bind("out.b"));
  return reshape(logits, {batch, tgt_len, c.tgt_vocab});
}

template <typename T>
Var<T> TransformerModel<T>::forward(Tape<T>& tape, const TokenBatch& batch, Rng* rng) {
  const auto allowed = batch.src_allowed();
  auto memory = encode(tape, batch.src, batch.batch, batch.src_len, allowed, rng);
  return decode(tape, memory, allowed, batch.tgt_in, batch.batch, batch.tgt_len, rng);
}

template <typename T>
std::unique_ptr<StepDecoder<T>> TransformerModel<T>::start_decoding(std::span<const int> src) {
  require(!src.empty(), "transformer: empty source sequence");
  std::vector<std::uint8_t> allowed(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) allowed[i] = src[i] != 0;
  Tape<T> tape(false);
  auto memory = encode(tape, src, 1, src.size(), allowed, nullptr);
  return std::make_unique<TransformerStepDecoder<T>>(*this, memory.to_array(), std::move(allowed));
}

template class TransformerModel<float>;
template class TransformerModel<double>;

}  // namespace nmt::models
