#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nmt::corpus {

inline constexpr std::string_view kGeneralDomain = "general";

enum class Split { kTrain, kDev, kTest };
const char* to_string(Split split);
Split parse_split(std::string_view name);

struct SentencePair {
  std::string source;
  std::string target;
  std::string domain{kGeneralDomain};

  bool operator==(const SentencePair&) const = default;
};

struct Corpus {
  std::vector<SentencePair> pairs;
  Split split = Split::kTrain;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Lowercases Latin letters, keeps letters and combining marks of every
// script, decimal digits, comma and period, turns any other character into
// nothing and any whitespace into a single space, then trims.
std::string normalize_text(std::string_view raw);

struct FilterResult {
  Corpus corpus;
  std::size_t dropped = 0;
};

// Normalizes both sides; pairs with an empty side are dropped.
FilterResult normalize_corpus(const Corpus& corpus);

// Drops every pair with more than max_words words on either side.
FilterResult filter_by_length(const Corpus& corpus, std::size_t max_words = 20);

// Every general pair once plus every in-domain pair `factor` times, in a
// seeded shuffled order.
Corpus mix_corpora(const Corpus& general, const Corpus& in_domain,
                   unsigned factor, std::uint64_t seed);

enum class Side { kSource, kTarget };
const char* to_string(Side side);

struct CoverageReport {
  Side side = Side::kSource;
  std::size_t unique_probe = 0;    // distinct probe words
  std::size_t unique_covered = 0;  // distinct probe words seen in reference
  std::size_t total_probe = 0;     // probe word occurrences
  std::size_t total_covered = 0;   // occurrences whose word is in reference

  double unique_percent() const;
  double total_percent() const;
};

// Word-level coverage of probe by reference. Throws kDegenerate for an
// empty probe side.
CoverageReport token_coverage(const Corpus& reference, const Corpus& probe,
                              Side side);

struct CorpusStats {
  std::size_t sentences = 0;
  std::size_t source_tokens = 0;
  std::size_t target_tokens = 0;

  bool operator==(const CorpusStats&) const = default;
};

CorpusStats corpus_stats(const Corpus& corpus);

// On-disk form: `<prefix>.src` and `<prefix>.tgt`, one sentence per line.
// Throws kData on missing files or mismatched line counts.
Corpus load_corpus(const std::filesystem::path& prefix, std::string domain,
                   Split split);
void save_corpus(const Corpus& corpus, const std::filesystem::path& prefix);

std::vector<std::string> source_side(const Corpus& corpus);
std::vector<std::string> target_side(const Corpus& corpus);

// Reports as an aligned table and as `key=value` lines.
std::string stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows);
std::string stats_key_values(const std::string& name, const CorpusStats& stats);
std::string coverage_table(const CoverageReport& source, const CoverageReport& target);
std::string coverage_key_values(const CoverageReport& source, const CoverageReport& target);

}  // namespace nmt::corpus
