#include <array>

#include "nmt/app.hpp"
#include "nmt/error.hpp"
#include "nmt/rng.hpp"
#include "nmt/text.hpp"

namespace nmt::app {

namespace {

const std::vector<std::string> kGeneralWords = {
    "the",   "a",     "man",   "woman", "child", "house", "water", "city",  "road",  "book",
    "food",  "day",   "night", "year",  "friend", "school", "river", "tree", "market", "village",
    "goes",  "sees",  "eats",  "reads", "writes", "likes", "finds", "opens", "makes", "brings",
    "big",   "small", "old",   "new",   "good",  "happy", "green", "cold",  "early", "quiet",
    "in",    "on",    "with",  "from",  "near",  "today", "often", "here",  "now",   "again"};

const std::vector<std::string> kAiWords = {
    "neural",   "network",  "model",    "learning", "data",     "training", "layer",
    "gradient", "vector",   "algorithm", "robot",   "agent",    "feature",  "weights",
    "tensor",   "dataset",  "inference", "kernel",  "optimizer", "accuracy", "loss",
    "attention", "encoder", "decoder",  "token",    "embedding", "classifier", "search"};

const std::vector<std::string> kChemistryWords = {
    "acid",     "molecule", "atom",     "bond",     "reaction", "carbon",   "oxygen",
    "solution", "compound", "electron", "catalyst", "element",  "metal",    "salt",
    "hydrogen", "nitrogen", "sulfur",   "ion",      "crystal",  "polymer",  "enzyme",
    "organic",  "mixture",  "vapor",    "liquid",   "isotope",  "valence",  "oxide"};

// Latin letter to Devanagari letter, one to one.
const std::array<char32_t, 26> kCipher = {
    U'अ', U'ब', U'च', U'द', U'ए', U'फ', U'ग',
    U'ह', U'इ', U'ज', U'क', U'ल', U'म', U'न',
    U'ओ', U'प', U'ख', U'र', U'स', U'त', U'उ',
    U'व', U'भ', U'ष', U'य', U'झ'};

const std::vector<std::string>& domain_words(const std::string& domain) {
  if (domain == "ai") return kAiWords;
  if (domain == "chemistry") return kChemistryWords;
  fail(ErrorKind::kContract, "unknown toy domain '" + domain + "'");
}

std::string cipher_word(std::string_view word) {
  std::u32string out;
  for (char c : word) {
    if (c >= 'a' && c <= 'z') {
      out.push_back(kCipher[static_cast<std::size_t>(c - 'a')]);
    } else {
      out.push_back(static_cast<char32_t>(static_cast<unsigned char>(c)));
    }
  }
  return text::to_utf8(out);
}

std::uint64_t stream_of(const std::string& domain, corpus::Split split) {
  const std::uint64_t d = domain == "general" ? 0 : domain == "ai" ? 1 : 2;
  return 10 * d + static_cast<std::uint64_t>(split);
}

std::size_t split_size(const std::string& domain, corpus::Split split, const ToyOptions& o) {
  if (split == corpus::Split::kTest) return o.test;
  const bool general = domain == "general";
  if (split == corpus::Split::kTrain) return general ? o.general_train : o.domain_train;
  return general ? o.general_dev : o.domain_dev;
}

}  // namespace

std::string toy_translate(std::string_view source) {
  auto words = text::split_words(source);
  if (words.size() >= 2) {
    const auto second = words[1];
    words.erase(words.begin() + 1);
    words.push_back(second);
  }
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += cipher_word(w);
  }
  return out;
}

std::vector<std::string> toy_domains() { return {"general", "ai", "chemistry"}; }

corpus::Corpus make_toy_corpus(const std::string& domain, corpus::Split split,
                               const ToyOptions& options) {
  require(options.min_words >= 1 && options.min_words <= options.max_words,
          "toy sentence length range is empty");
  const bool general = domain == "general";
  const auto* special = general ? nullptr : &domain_words(domain);
  Rng rng(derive_seed(options.seed, stream_of(domain, split)));
  corpus::Corpus c;
  c.split = split;
  const std::size_t n = split_size(domain, split, options);
  const std::size_t span = options.max_words - options.min_words + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = options.min_words + rng.below(span);
    std::string source;
    for (std::size_t k = 0; k < len; ++k) {
      const bool use_special = special && rng.uniform() < options.domain_word_share;
      const auto& pool = use_special ? *special : kGeneralWords;
      if (k) source += ' ';
      source += pool[rng.below(pool.size())];
    }
    c.pairs.push_back({source, toy_translate(source), domain});
  }
  return c;
}

void write_toy_data(const std::filesystem::path& dir, const ToyOptions& options) {
  for (const auto& domain : toy_domains()) {
    for (auto split : {corpus::Split::kTrain, corpus::Split::kDev, corpus::Split::kTest}) {
      corpus::save_corpus(make_toy_corpus(domain, split, options),
                          split_prefix(dir / domain, split));
    }
  }
}

}  // namespace nmt::app
