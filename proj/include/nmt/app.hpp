#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nmt/corpus.hpp"
#include "nmt/decoding.hpp"
#include "nmt/eval.hpp"
#include "nmt/models.hpp"
#include "nmt/subword.hpp"
#include "nmt/training.hpp"

namespace nmt::app {

// Every setting of a run. Keys are `section.name`; the file form is
// `key = value` lines under `[section]` headers.
struct RunConfig {
  // [data]
  std::string data_dir = "data/toy";
  std::string general = "general";
  std::vector<std::string> domains = {"ai", "chemistry"};
  std::size_t max_words = 20;
  // [tokenizer]
  std::size_t source_vocab = 200;
  std::size_t target_vocab = 200;
  double character_coverage = 0.9995;
  // [model]
  std::vector<std::string> families = {"lstm", "transformer"};
  std::size_t lstm_embed = 32;
  std::size_t lstm_hidden = 64;
  std::size_t transformer_dim = 32;
  std::size_t transformer_heads = 2;
  std::size_t transformer_layers = 2;
  std::size_t transformer_ff = 128;
  std::size_t max_positions = 256;
  bool pre_norm = true;
  double dropout = 0.1;
  // [train]
  std::size_t batch_size = 16;
  std::size_t max_epochs = 10;
  double learning_rate = 0.0;  // 0 selects the family default
  double finetune_lr_scale = 0.3;
  std::size_t finetune_epochs = 5;
  unsigned factor = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  // [decode]
  std::size_t max_length = 0;
  std::size_t comma_split_threshold = 20;
  std::string joiner = ", ";
  // [eval]
  bool smooth = false;

  // kContract for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  void load_file(const std::filesystem::path& path);
  // `key=value`
  void apply_override(const std::string& assignment);
  std::string to_ini() const;
  // Writes config.ini into dir.
  void echo(const std::filesystem::path& dir) const;

  models::ModelConfig model_config(models::Family family) const;
  training::TrainConfig train_config(models::Family family) const;
  decoding::DecodeConfig decode_config() const;
  subword::TrainOptions tokenizer_options(bool source) const;
};

// Synthetic bilingual data. Sources are sentences of English words; the
// target spells every word in Devanagari letters through a fixed letter
// cipher and moves the second word to the end of the sentence.
struct ToyOptions {
  std::uint64_t seed = 7;
  std::size_t general_train = 1200;
  std::size_t general_dev = 100;
  std::size_t domain_train = 120;
  std::size_t domain_dev = 60;
  std::size_t test = 60;
  std::size_t min_words = 3;
  std::size_t max_words = 7;
  double domain_word_share = 0.5;  // chance that a domain sentence word is domain-specific
};

std::string toy_translate(std::string_view source);
std::vector<std::string> toy_domains();
// Corpus of one domain ("general", "ai" or "chemistry") and split.
corpus::Corpus make_toy_corpus(const std::string& domain, corpus::Split split,
                               const ToyOptions& options);
// Writes <dir>/<domain>.<split>.{src,tgt} for every domain and split.
void write_toy_data(const std::filesystem::path& dir, const ToyOptions& options);

// `<stem>.<split>` as a corpus prefix.
std::filesystem::path split_prefix(const std::filesystem::path& stem, corpus::Split split);
// Loads, normalizes and length-filters one split.
corpus::Corpus load_clean(const std::filesystem::path& stem, const std::string& domain,
                          corpus::Split split, std::size_t max_words);

// Trains one tokenizer per side over the given corpora.
training::TokenizerPair train_tokenizers(const std::vector<const corpus::Corpus*>& corpora,
                                         const RunConfig& config);
void save_tokenizers(const training::TokenizerPair& tokenizers, const std::filesystem::path& dir);
training::TokenizerPair load_tokenizers(const std::filesystem::path& dir);

struct ExperimentData {
  corpus::Corpus general_train;
  corpus::Corpus general_dev;
  std::map<std::string, corpus::Corpus> domain_train;
  std::map<std::string, corpus::Corpus> domain_dev;
};

ExperimentData load_experiment_data(const RunConfig& config);

struct CellOutcome {
  std::string family;
  std::string strategy;  // general, mixed or finetune
  std::string domain;
  eval::BleuReport domain_dev;
  eval::BleuReport general_dev;
  training::TrainReport report;
};

struct ExperimentResult {
  std::vector<CellOutcome> cells;
  std::vector<eval::MatrixRow> rows;  // domain dev BLEU per cell
};

using Progress = std::function<void(const std::string&)>;

// For every family: one GeneralOnly model (also the fine-tuning base), then
// Mixed and FineTune per domain. Writes checkpoints, reports, translation
// logs and the matrix under out. Cells whose checkpoint already exists are
// loaded instead of retrained.
ExperimentResult run_experiment(const RunConfig& config, const ExperimentData& data,
                                const std::filesystem::path& out, const Progress& progress = {});

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace nmt::app
