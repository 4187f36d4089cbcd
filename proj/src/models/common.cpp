#include <cmath>

#include "nmt/error.hpp"
#include "nmt/models.hpp"
#include "nmt/subword.hpp"

namespace nmt::models {

using namespace nmt::ad;

const char* to_string(Family family) {
  return family == Family::kLstm ? "lstm" : "transformer";
}

Family parse_family(std::string_view name) {
  if (name == "lstm") return Family::kLstm;
  if (name == "transformer") return Family::kTransformer;
  fail(ErrorKind::kContract, "unknown model family '" + std::string(name) +
                                 "' (expected lstm or transformer)");
}

LstmConfig LstmConfig::paper_scale(std::size_t src_vocab, std::size_t tgt_vocab) {
  LstmConfig c;
  c.src_vocab = src_vocab;
  c.tgt_vocab = tgt_vocab;
  c.embed_dim = 256;
  c.hidden_dim = 512;
  return c;
}

void LstmConfig::validate() const {
  require(src_vocab > subword::kFirstPieceId && tgt_vocab > subword::kFirstPieceId,
          "lstm: vocabulary sizes must exceed the special tokens");
  require(embed_dim > 0 && hidden_dim > 0, "lstm: dimensions must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "lstm: dropout must be in [0,1)");
}

TransformerConfig TransformerConfig::paper_scale(std::size_t src_vocab, std::size_t tgt_vocab) {
  TransformerConfig c;
  c.src_vocab = src_vocab;
  c.tgt_vocab = tgt_vocab;
  c.model_dim = 512;
  c.heads = 8;
  c.layers = 6;
  c.ff_dim = 2048;
  return c;
}

void TransformerConfig::validate() const {
  require(src_vocab > subword::kFirstPieceId && tgt_vocab > subword::kFirstPieceId,
          "transformer: vocabulary sizes must exceed the special tokens");
  require(model_dim > 0 && heads > 0 && layers > 0 && ff_dim > 0 && max_positions > 0,
          "transformer: dimensions must be positive");
  require(model_dim % heads == 0, "transformer: model_dim " + std::to_string(model_dim) +
                                      " is not divisible by heads " + std::to_string(heads));
  require(model_dim % 2 == 0, "transformer: model_dim must be even");
  require(dropout >= 0.0 && dropout < 1.0, "transformer: dropout must be in [0,1)");
}

std::size_t ModelConfig::src_vocab() const {
  return family == Family::kLstm ? lstm.src_vocab : transformer.src_vocab;
}

std::size_t ModelConfig::tgt_vocab() const {
  return family == Family::kLstm ? lstm.tgt_vocab : transformer.tgt_vocab;
}

void ModelConfig::set_vocab(std::size_t src, std::size_t tgt) {
  lstm.src_vocab = transformer.src_vocab = src;
  lstm.tgt_vocab = transformer.tgt_vocab = tgt;
}

double ModelConfig::dropout() const {
  return family == Family::kLstm ? lstm.dropout : transformer.dropout;
}

TokenBatch TokenBatch::from_rows(std::span<const std::vector<int>> sources,
                                 std::span<const std::vector<int>> targets) {
  require(sources.size() == targets.size(), "batch: source and target row counts differ");
  require(!sources.empty(), "batch: no rows");
  TokenBatch b;
  b.batch = sources.size();
  for (std::size_t r = 0; r < b.batch; ++r) {
    require(!sources[r].empty(), "batch: empty source row " + std::to_string(r));
    b.src_len = std::max(b.src_len, sources[r].size());
    b.tgt_len = std::max(b.tgt_len, targets[r].size() + 1);
  }
  b.src.assign(b.batch * b.src_len, subword::kPadId);
  b.tgt_in.assign(b.batch * b.tgt_len, subword::kPadId);
  b.tgt_out.assign(b.batch * b.tgt_len, subword::kPadId);
  for (std::size_t r = 0; r < b.batch; ++r) {
    std::copy(sources[r].begin(), sources[r].end(), b.src.begin() + r * b.src_len);
    const auto& y = targets[r];
    int* in = b.tgt_in.data() + r * b.tgt_len;
    int* out = b.tgt_out.data() + r * b.tgt_len;
    in[0] = subword::kBosId;
    for (std::size_t k = 0; k < y.size(); ++k) {
      in[k + 1] = y[k];
      out[k] = y[k];
    }
    out[y.size()] = subword::kEosId;
  }
  return b;
}

std::vector<std::uint8_t> TokenBatch::src_allowed() const {
  std::vector<std::uint8_t> m(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) m[i] = src[i] != subword::kPadId;
  return m;
}

std::vector<std::uint8_t> TokenBatch::tgt_pad() const {
  std::vector<std::uint8_t> m(tgt_out.size());
  for (std::size_t i = 0; i < tgt_out.size(); ++i) m[i] = tgt_out[i] == subword::kPadId;
  return m;
}

template <typename T>
AttentionResult<T> additive_attention_projected(Var<T> query, Var<T> keys, Var<T> keys_proj,
                                                Var<T> w_query, Var<T> v,
                                                std::span<const std::uint8_t> key_allowed) {
  const Shape ks = keys_proj.shape();
  require(ks.size() == 3, "additive_attention: keys_proj must be [B,S,A]");
  const std::size_t batch = ks[0], len = ks[1], att = ks[2];
  auto q = matmul(query, w_query);
  auto e = tanh(add_per_batch(keys_proj, q));
  auto scores = reshape(matmul(reshape(e, {batch * len, att}), v), {batch, len});
  auto weights = softmax(scores, 1, key_allowed);
  auto ctx = batched_matmul(reshape(weights, {batch, 1, len}), keys);
  return {reshape(ctx, {batch, keys.shape()[2]}), weights};
}

template <typename T>
AttentionResult<T> additive_attention(Var<T> query, Var<T> keys, Var<T> w_query, Var<T> w_key,
                                      Var<T> v, std::span<const std::uint8_t> key_allowed) {
  const Shape s = keys.shape();
  require(s.size() == 3, "additive_attention: keys must be [B,S,K]");
  auto proj = matmul(reshape(keys, {s[0] * s[1], s[2]}), w_key);
  proj = reshape(proj, {s[0], s[1], w_key.shape()[1]});
  return additive_attention_projected(query, keys, proj, w_query, v, key_allowed);
}

namespace {

template <typename T>
Var<T> split_heads(Var<T> x, Var<T> w, Var<T> b, std::size_t batch, std::size_t len,
                   std::size_t heads) {
  const std::size_t dim = w.shape()[1];
  const std::size_t head_dim = dim / heads;
  auto p = add_broadcast(matmul(reshape(x, {batch * len, x.shape()[2]}), w), b);
  auto h = swap_axes12(reshape(p, {batch, len, heads, head_dim}));
  return reshape(h, {batch * heads, len, head_dim});
}

}  // namespace

template <typename T>
AttentionResult<T> multi_head_attention(Var<T> queries, Var<T> memory,
                                        const ProjectionWeights<T>& w, std::size_t heads,
                                        std::span<const std::uint8_t> allowed, Rng* dropout_rng,
                                        double dropout_p) {
  const Shape qs = queries.shape();
  const Shape ms = memory.shape();
  require(qs.size() == 3 && ms.size() == 3 && qs[0] == ms[0] && qs[2] == ms[2],
          "multi_head_attention: expected [B,Tq,D] queries and [B,Tk,D] memory");
  const std::size_t batch = qs[0], tq = qs[1], tk = ms[1], dim = qs[2];
  require(heads > 0 && dim % heads == 0, "multi_head_attention: model dim " +
                                             std::to_string(dim) + " not divisible by " +
                                             std::to_string(heads) + " heads");
  require(allowed.size() == batch * tq * tk, "multi_head_attention: mask has wrong size");
  const std::size_t head_dim = dim / heads;

  auto q = split_heads(queries, w.w_q, w.b_q, batch, tq, heads);
  auto k = split_heads(memory, w.w_k, w.b_k, batch, tk, heads);
  auto v = split_heads(memory, w.w_v, w.b_v, batch, tk, heads);

  std::vector<std::uint8_t> mask(batch * heads * tq * tk);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      std::copy_n(allowed.data() + b * tq * tk, tq * tk,
                  mask.data() + (b * heads + h) * tq * tk);
    }
  }
  auto scores = scale(batched_matmul(q, k, true), static_cast<T>(1.0 / std::sqrt(head_dim)));
  auto weights = softmax(scores, 2, mask);
  auto attended = weights;
  if (dropout_rng != nullptr) attended = ad::dropout(weights, dropout_p, *dropout_rng);
  auto ctx = batched_matmul(attended, v);  // [B*H, Tq, hd]
  ctx = swap_axes12(reshape(ctx, {batch, heads, tq, head_dim}));
  auto out = add_broadcast(matmul(reshape(ctx, {batch * tq, dim}), w.w_o), w.b_o);
  return {reshape(out, {batch, tq, dim}), weights};
}

template <typename T>
Array<T> positional_encoding(std::size_t max_len, std::size_t dim) {
  require(dim % 2 == 0, "positional_encoding: dim " + std::to_string(dim) + " must be even");
  Array<T> table({max_len, dim});
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i) / dim);
      table.data[pos * dim + 2 * i] = static_cast<T>(std::sin(angle));
      table.data[pos * dim + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return table;
}

std::vector<std::uint8_t> causal_mask(std::size_t len) {
  std::vector<std::uint8_t> m(len * len, 0);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m[i * len + j] = 1;
  }
  return m;
}

template <typename T>
Var<T> sequence_loss(Tape<T>& tape, Seq2Seq<T>& model, const TokenBatch& batch,
                     Rng* dropout_rng) {
  auto logits = model.forward(tape, batch, dropout_rng);
  const auto pad = batch.tgt_pad();
  return cross_entropy(logits, std::span<const int>(batch.tgt_out), pad);
}

template <typename T>
std::unique_ptr<Seq2Seq<T>> make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.family == Family::kLstm) return std::make_unique<LstmModel<T>>(config.lstm, seed);
  return std::make_unique<TransformerModel<T>>(config.transformer, seed);
}

#define NMT_INSTANTIATE_COMMON(T)                                                         \
  template AttentionResult<T> additive_attention(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>,  \
                                                 std::span<const std::uint8_t>);          \
  template AttentionResult<T> additive_attention_projected(                               \
      Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, std::span<const std::uint8_t>);             \
  template AttentionResult<T> multi_head_attention(Var<T>, Var<T>,                        \
                                                   const ProjectionWeights<T>&,           \
                                                   std::size_t,                           \
                                                   std::span<const std::uint8_t>, Rng*,   \
                                                   double);                               \
  template Array<T> positional_encoding<T>(std::size_t, std::size_t);                     \
  template Var<T> sequence_loss(Tape<T>&, Seq2Seq<T>&, const TokenBatch&, Rng*);          \
  template std::unique_ptr<Seq2Seq<T>> make_model<T>(const ModelConfig&, std::uint64_t);

NMT_INSTANTIATE_COMMON(float)
NMT_INSTANTIATE_COMMON(double)

}  // namespace nmt::models
