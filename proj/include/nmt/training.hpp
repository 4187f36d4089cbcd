#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nmt/adam.hpp"
#include "nmt/corpus.hpp"
#include "nmt/models.hpp"
#include "nmt/subword.hpp"

namespace nmt::training {

struct TokenizerPair {
  subword::SubwordModel source;
  subword::SubwordModel target;
};

enum class StrategyKind { kGeneralOnly, kMixed, kFineTune };
const char* to_string(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);  // general | mixed | finetune

struct Strategy {
  StrategyKind kind = StrategyKind::kGeneralOnly;
  unsigned factor = 10;                  // Mixed only
  std::filesystem::path base_checkpoint; // FineTune only
  std::size_t finetune_epochs = 5;       // FineTune only

  static Strategy general_only() { return {}; }
  static Strategy mixed(unsigned factor) { return {StrategyKind::kMixed, factor, {}, 0}; }
  static Strategy fine_tune(std::filesystem::path base, std::size_t epochs) {
    return {StrategyKind::kFineTune, 1, std::move(base), epochs};
  }
  std::string describe() const;
};

struct TrainConfig {
  models::ModelConfig model;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 10;
  double learning_rate = 0.0;  // 0 selects default_learning_rate(family)
  double finetune_lr_scale = 0.3;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  double effective_learning_rate() const;
  void validate() const;
};

double default_learning_rate(models::Family family);

// ---- batching -------------------------------------------------------------

struct EncodedPair {
  std::vector<int> source;
  std::vector<int> target;  // without BOS/EOS
};

struct EncodedCorpus {
  std::vector<EncodedPair> pairs;
  std::size_t dropped = 0;  // pairs with an empty side or too long
};

// Encodes both sides. Pairs whose source is longer than max_positions or
// whose framed target (BOS + target or target + EOS) is, and pairs that
// encode to an empty source, are dropped and counted.
EncodedCorpus encode_corpus(const corpus::Corpus& corpus, const TokenizerPair& tokenizers,
                            std::size_t max_positions);

// Seeded shuffle then consecutive batches; the last batch may be short.
// seed == nullopt keeps corpus order (used for validation).
std::vector<models::TokenBatch> make_batches(const EncodedCorpus& corpus, std::size_t batch_size,
                                             std::optional<std::uint64_t> seed);

// Sentence count of the source rows of a batch stream.
std::size_t count_pairs(const std::vector<models::TokenBatch>& batches);

// ---- epochs ---------------------------------------------------------------

// Non-pad target positions of a batch.
std::size_t target_tokens(const models::TokenBatch& batch);

// One teacher-forced pass with dropout, global-norm clipping and an Adam
// step per batch. Returns the pad-weighted mean loss. A non-finite loss or
// gradient aborts with kNumeric naming the batch index.
double train_epoch(models::Seq2Seq<float>& model, const std::vector<models::TokenBatch>& batches,
                   ad::Adam<float>& optimizer, double clip_norm, Rng& dropout_rng);

// Pad-weighted mean loss without dropout or updates.
double evaluate_loss(models::Seq2Seq<float>& model,
                     const std::vector<models::TokenBatch>& batches);

// ---- checkpoints ----------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'N', 'M', 'T', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  models::ModelConfig model;
  std::vector<std::pair<std::string, ad::Array<float>>> parameters;
  std::string source_fingerprint;
  std::string target_fingerprint;
  std::size_t epoch = 0;
  double validation_loss = 0.0;
  std::uint64_t seed = 0;
  std::string strategy;
};

Checkpoint capture(const models::Seq2Seq<float>& model, const TokenizerPair& tokenizers);

// Copies checkpoint parameters into a model built from a compatible config.
// Throws kShape naming the first missing or mismatched parameter.
void restore(const Checkpoint& checkpoint, models::Seq2Seq<float>& model);

// Builds a fresh model from the checkpoint's config and restores it.
std::unique_ptr<models::Seq2Seq<float>> instantiate(const Checkpoint& checkpoint);

// Throws kFingerprint if either tokenizer differs from the checkpoint's.
void verify_tokenizers(const Checkpoint& checkpoint, const TokenizerPair& tokenizers);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// kCorrupt for bad magic, truncation or trailing bytes; kVersion for an
// unsupported format version.
Checkpoint parse_checkpoint(std::string_view bytes);

// Writes to a temporary sibling then renames over `path`.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string model_config_json(const models::ModelConfig& config);
models::ModelConfig parse_model_config_json(std::string_view json);

// ---- strategies -----------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainReport {
  std::string strategy;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_validation_loss = 0.0;
  std::size_t train_pairs = 0;
  std::size_t dropped_pairs = 0;
  double wall_seconds = 0.0;

  std::string table() const;
  // Deterministic key=value lines; wall time is excluded.
  std::string key_values() const;
};

// Earliest epoch with minimal validation loss (1-based); 0 for none.
std::size_t best_epoch(const std::vector<EpochRecord>& epochs);

struct TrainingData {
  corpus::Corpus general_train;
  corpus::Corpus general_dev;
  corpus::Corpus domain_train;
  corpus::Corpus domain_dev;
};

struct StrategyResult {
  Checkpoint checkpoint;
  TrainReport report;
};

// GeneralOnly trains on general_train and validates on general_dev. Mixed
// trains once on mix_corpora(general, domain, factor) and validates on
// domain_dev; GeneralOnly is the factor-1, empty-domain case of the same
// path. FineTune restores `base` (or loads strategy.base_checkpoint),
// resets Adam, trains on domain_train alone at finetune_lr_scale times the
// learning rate and validates on domain_dev; with zero epochs the base
// checkpoint is returned unchanged.
StrategyResult run_strategy(const Strategy& strategy, const TrainingData& data,
                            const TokenizerPair& tokenizers, const TrainConfig& config,
                            const Checkpoint* base = nullptr);

}  // namespace nmt::training
