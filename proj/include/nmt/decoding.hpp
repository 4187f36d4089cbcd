#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nmt/models.hpp"
#include "nmt/subword.hpp"
#include "nmt/training.hpp"

namespace nmt::decoding {

struct DecodeConfig {
  std::size_t max_length = 0;  // 0 selects 2 * source length + 8
  std::size_t comma_split_threshold = 20;
  std::string joiner = ", ";

  std::size_t length_limit(std::size_t source_length) const;
  void validate() const;
};

// Starts from BOS and appends the argmax token (ties to the lowest id) until
// EOS or the length limit. EOS is not part of the output.
std::vector<int> greedy_decode(models::Seq2Seq<float>& model, std::span<const int> source,
                               const DecodeConfig& config);

// Pieces concatenated, boundary markers to spaces, trimmed. kContract for
// ids outside the vocabulary.
std::string detokenize(const subword::SubwordModel& tokenizer, std::span<const int> ids);

// Comma-separated segments of normalized text, trimmed, empty ones dropped.
std::vector<std::string> split_segments(std::string_view normalized);

// Translates one normalized segment.
using SegmentTranslator = std::function<std::string(const std::string&)>;

// The comma heuristic around any segment translator: raw text is
// normalized; if it has more than the threshold words and contains a comma
// each segment is translated separately and the outputs joined in order,
// otherwise the whole sentence is translated once. Empty input yields an
// empty output without a translator call.
std::string translate_with(std::string_view raw, const DecodeConfig& config,
                           const SegmentTranslator& translate_segment);

// A frozen checkpoint with its tokenizers.
class Translator {
 public:
  // Throws kFingerprint if the tokenizers are not the checkpoint's.
  Translator(const training::Checkpoint& checkpoint, training::TokenizerPair tokenizers,
             DecodeConfig config);

  std::string translate(std::string_view raw);
  std::vector<std::string> translate_all(std::span<const std::string> sources);
  // Source segment (normalized) to target text, no comma handling.
  std::string translate_segment(const std::string& normalized);

  std::size_t decode_calls() const { return decode_calls_; }
  const DecodeConfig& config() const { return config_; }
  models::Seq2Seq<float>& model() { return *model_; }
  const training::TokenizerPair& tokenizers() const { return tokenizers_; }

 private:
  std::unique_ptr<models::Seq2Seq<float>> model_;
  training::TokenizerPair tokenizers_;
  DecodeConfig config_;
  std::size_t decode_calls_ = 0;
};

// One source sentence per input line to one translation per output line,
// LF endings.
std::size_t translate_file(Translator& translator, const std::filesystem::path& input,
                           const std::filesystem::path& output);

}  // namespace nmt::decoding
