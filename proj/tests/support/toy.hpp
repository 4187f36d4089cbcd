#pragma once

#include <string>
#include <vector>

#include "nmt/corpus.hpp"
#include "nmt/rng.hpp"
#include "nmt/subword.hpp"
#include "nmt/training.hpp"

namespace nmt::testing {

inline const std::vector<std::string>& toy_words() {
  static const std::vector<std::string> words = {"sun", "moon", "star", "tree", "river",
                                                 "stone", "bird", "fish", "rain", "wind"};
  return words;
}

// Sentences of min_words..max_words toy words; the target copies the source.
inline corpus::Corpus copy_corpus(Rng& rng, std::size_t pairs, std::size_t min_words,
                                  std::size_t max_words) {
  corpus::Corpus c;
  const auto& words = toy_words();
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t n = min_words + rng.below(max_words - min_words + 1);
    std::string s;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) s += ' ';
      s += words[rng.below(words.size())];
    }
    c.pairs.push_back({s, s, std::string(corpus::kGeneralDomain)});
  }
  return c;
}

inline training::TokenizerPair toy_tokenizers(const corpus::Corpus& c, std::size_t pieces = 24) {
  subword::TrainOptions opt;
  opt.vocab_size = pieces;
  opt.character_coverage = 1.0;
  const auto src = corpus::source_side(c);
  const auto tgt = corpus::target_side(c);
  return {subword::train_unigram(src, opt), subword::train_unigram(tgt, opt)};
}

}  // namespace nmt::testing
