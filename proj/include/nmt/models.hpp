#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nmt/ops.hpp"
#include "nmt/rng.hpp"
#include "nmt/tape.hpp"

namespace nmt::models {

using ad::Array;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

enum class Family { kLstm, kTransformer };
const char* to_string(Family family);
Family parse_family(std::string_view name);

struct LstmConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  double dropout = 0.1;

  static LstmConfig paper_scale(std::size_t src_vocab, std::size_t tgt_vocab);
  void validate() const;
};

struct TransformerConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t model_dim = 32;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t ff_dim = 128;
  std::size_t max_positions = 256;
  double dropout = 0.1;
  bool pre_norm = true;

  static TransformerConfig paper_scale(std::size_t src_vocab, std::size_t tgt_vocab);
  void validate() const;
};

struct ModelConfig {
  Family family = Family::kLstm;
  LstmConfig lstm;
  TransformerConfig transformer;

  std::size_t src_vocab() const;
  std::size_t tgt_vocab() const;
  void set_vocab(std::size_t src, std::size_t tgt);
  double dropout() const;
  void validate() const { family == Family::kLstm ? lstm.validate() : transformer.validate(); }
};

// Padded id matrices for one batch. Targets are split teacher-forcing style:
// tgt_in starts with BOS, tgt_out is tgt_in shifted left and ends with EOS.
// Pad id 0 fills the tail of every row.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  std::vector<int> src;      // [batch, src_len]
  std::vector<int> tgt_in;   // [batch, tgt_len]
  std::vector<int> tgt_out;  // [batch, tgt_len]

  // Builds a batch from unpadded rows; targets get BOS/EOS framing.
  static TokenBatch from_rows(std::span<const std::vector<int>> sources,
                              std::span<const std::vector<int>> targets);
  std::vector<std::uint8_t> src_allowed() const;  // 1 on real tokens
  std::vector<std::uint8_t> tgt_pad() const;      // 1 on pad in tgt_out
};

// ---- building blocks -----------------------------------------------------

template <typename T>
struct AttentionResult {
  Var<T> context;
  Var<T> weights;
};

// score_i = v . tanh(W_q q + W_k k_i), masked softmax over i, context is the
// weighted key sum. query [B,Q], keys [B,S,K], keys_proj = keys W_k as
// [B,S,A], w_query [Q,A], v [A,1], key_allowed [B*S]. Weights are [B,S],
// context [B,K].
template <typename T>
AttentionResult<T> additive_attention_projected(Var<T> query, Var<T> keys, Var<T> keys_proj,
                                                Var<T> w_query, Var<T> v,
                                                std::span<const std::uint8_t> key_allowed);

// Same, computing keys_proj from w_key [K,A].
template <typename T>
AttentionResult<T> additive_attention(Var<T> query, Var<T> keys, Var<T> w_query,
                                      Var<T> w_key, Var<T> v,
                                      std::span<const std::uint8_t> key_allowed);

template <typename T>
struct ProjectionWeights {
  Var<T> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;  // [D,D] and [D]
};

// Scaled dot-product attention over `heads` subspaces, heads concatenated
// and projected. queries [B,Tq,D], memory [B,Tk,D], allowed [B*Tq*Tk].
// Weights come back as [B*heads, Tq, Tk].
template <typename T>
AttentionResult<T> multi_head_attention(Var<T> queries, Var<T> memory,
                                        const ProjectionWeights<T>& w, std::size_t heads,
                                        std::span<const std::uint8_t> allowed,
                                        Rng* dropout_rng = nullptr, double dropout = 0.0);

// PE(pos,2i) = sin(pos / 10000^(2i/dim)), PE(pos,2i+1) = cos(same).
template <typename T>
Array<T> positional_encoding(std::size_t max_len, std::size_t dim);

// [len*len], cell (i,j) is 1 iff j <= i.
std::vector<std::uint8_t> causal_mask(std::size_t len);

// ---- models --------------------------------------------------------------

// Emits next-token logits one step at a time for a single sentence.
template <typename T>
class StepDecoder {
 public:
  virtual ~StepDecoder() = default;
  virtual std::vector<T> next(int prev_token) = 0;
};

template <typename T>
class Seq2Seq {
 public:
  virtual ~Seq2Seq() = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& parameters() { return params_; }
  const ParameterStore<T>& parameters() const { return params_; }

  // Teacher-forced logits [batch, tgt_len, tgt_vocab]. Dropout is applied
  // only when dropout_rng is given.
  virtual Var<T> forward(Tape<T>& tape, const TokenBatch& batch, Rng* dropout_rng) = 0;

  // Decoder for one unpadded source sentence; dropout is off.
  virtual std::unique_ptr<StepDecoder<T>> start_decoding(std::span<const int> src) = 0;

 protected:
  explicit Seq2Seq(ModelConfig config) : config_(std::move(config)) {}

  ModelConfig config_;
  ParameterStore<T> params_;
};

// Mean cross-entropy over the non-pad target positions.
template <typename T>
Var<T> sequence_loss(Tape<T>& tape, Seq2Seq<T>& model, const TokenBatch& batch,
                     Rng* dropout_rng);

template <typename T>
struct LstmEncoding {
  Var<T> states;        // [B,S,2H], forward half then backward half
  Var<T> final_state;   // [B,2H]: last real forward state, first backward state
  std::vector<std::uint8_t> allowed;  // [B*S]
};

template <typename T>
class LstmModel final : public Seq2Seq<T> {
 public:
  LstmModel(const LstmConfig& config, std::uint64_t seed);

  Var<T> forward(Tape<T>& tape, const TokenBatch& batch, Rng* dropout_rng) override;
  std::unique_ptr<StepDecoder<T>> start_decoding(std::span<const int> src) override;

  // Encoder over padded ids [batch, len]. Throws kContract for an empty or
  // all-pad row.
  LstmEncoding<T> encode(Tape<T>& tape, std::span<const int> src, std::size_t batch,
                         std::size_t len, Rng* dropout_rng);

 private:
  const LstmConfig& cfg() const { return this->config_.lstm; }
};

template <typename T>
class TransformerModel final : public Seq2Seq<T> {
 public:
  TransformerModel(const TransformerConfig& config, std::uint64_t seed);

  Var<T> forward(Tape<T>& tape, const TokenBatch& batch, Rng* dropout_rng) override;
  std::unique_ptr<StepDecoder<T>> start_decoding(std::span<const int> src) override;

  // Encoder output [B,S,D].
  Var<T> encode(Tape<T>& tape, std::span<const int> src, std::size_t batch, std::size_t len,
                std::span<const std::uint8_t> src_allowed, Rng* dropout_rng);
  // Decoder logits [B,T,V] given encoder output.
  Var<T> decode(Tape<T>& tape, Var<T> memory, std::span<const std::uint8_t> src_allowed,
                std::span<const int> tgt_in, std::size_t batch, std::size_t tgt_len,
                Rng* dropout_rng);

 private:
  const TransformerConfig& cfg() const { return this->config_.transformer; }
  Array<T> positions_;
};

template <typename T>
std::unique_ptr<Seq2Seq<T>> make_model(const ModelConfig& config, std::uint64_t seed);

extern template class LstmModel<float>;
extern template class LstmModel<double>;
extern template class TransformerModel<float>;
extern template class TransformerModel<double>;

}  // namespace nmt::models
