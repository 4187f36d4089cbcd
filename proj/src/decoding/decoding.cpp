#include "nmt/decoding.hpp"

#include <algorithm>
#include <fstream>

#include "nmt/corpus.hpp"
#include "nmt/error.hpp"
#include "nmt/text.hpp"

namespace nmt::decoding {

std::size_t DecodeConfig::length_limit(std::size_t source_length) const {
  return max_length > 0 ? max_length : 2 * source_length + 8;
}

void DecodeConfig::validate() const {
  require(comma_split_threshold >= 1, "comma-split threshold must be at least 1");
}

std::vector<int> greedy_decode(models::Seq2Seq<float>& model, std::span<const int> source,
                               const DecodeConfig& config) {
  require(!source.empty(), "greedy_decode: empty source");
  const std::size_t limit = config.length_limit(source.size());
  auto decoder = model.start_decoding(source);
  std::vector<int> out;
  int prev = subword::kBosId;
  while (out.size() < limit) {
    const auto logits = decoder->next(prev);
    // max_element returns the first maximum, i.e. the lowest id.
    const int best = static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                                      logits.begin());
    if (best == subword::kEosId) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

std::string detokenize(const subword::SubwordModel& tokenizer, std::span<const int> ids) {
  return subword::decode(tokenizer, ids);
}

std::vector<std::string> split_segments(std::string_view normalized) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= normalized.size()) {
    std::size_t comma = normalized.find(',', start);
    if (comma == std::string_view::npos) comma = normalized.size();
    auto segment = text::trim(normalized.substr(start, comma - start));
    if (!segment.empty()) out.emplace_back(segment);
    start = comma + 1;
  }
  return out;
}

std::string translate_with(std::string_view raw, const DecodeConfig& config,
                           const SegmentTranslator& translate_segment) {
  const std::string normalized = corpus::normalize_text(raw);
  if (normalized.empty()) return "";
  const bool split = text::count_words(normalized) > config.comma_split_threshold &&
                     normalized.find(',') != std::string::npos;
  if (!split) return translate_segment(normalized);
  std::string out;
  bool first = true;
  for (const auto& segment : split_segments(normalized)) {
    if (!first) out += config.joiner;
    out += translate_segment(segment);
    first = false;
  }
  return out;
}

Translator::Translator(const training::Checkpoint& checkpoint, training::TokenizerPair tokenizers,
                       DecodeConfig config)
    : tokenizers_(std::move(tokenizers)), config_(std::move(config)) {
  config_.validate();
  training::verify_tokenizers(checkpoint, tokenizers_);
  model_ = training::instantiate(checkpoint);
}

std::string Translator::translate_segment(const std::string& normalized) {
  const auto ids = subword::encode(tokenizers_.source, normalized);
  if (ids.empty()) return "";
  ++decode_calls_;
  const auto out = greedy_decode(*model_, ids, config_);
  return detokenize(tokenizers_.target, out);
}

std::string Translator::translate(std::string_view raw) {
  return translate_with(raw, config_, [this](const std::string& s) { return translate_segment(s); });
}

std::vector<std::string> Translator::translate_all(std::span<const std::string> sources) {
  std::vector<std::string> out;
  out.reserve(sources.size());
  for (const auto& s : sources) out.push_back(translate(s));
  return out;
}

std::size_t translate_file(Translator& translator, const std::filesystem::path& input,
                           const std::filesystem::path& output) {
  std::ifstream in(input);
  if (!in) fail(ErrorKind::kData, "cannot open input file " + input.string());
  if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kData, "cannot write output file " + output.string());
  std::string line;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out << translator.translate(line) << '\n';
    ++count;
  }
  return count;
}

}  // namespace nmt::decoding
