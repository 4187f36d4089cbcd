#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nmt::subword {

// Marks the start of every word so detokenization can restore spaces.
inline constexpr char32_t kBoundary = U'▁';
inline constexpr std::string_view kUnknownSurface = "⁇";

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kFirstPieceId = 4;

struct Piece {
  std::u32string text;
  double log_prob = 0.0;
};

// Ranked piece inventory. Ids 0-3 are the special tokens, piece i has id
// kFirstPieceId + i.
class SubwordModel {
 public:
  SubwordModel() = default;
  explicit SubwordModel(std::vector<Piece> pieces);

  std::size_t piece_count() const { return pieces_.size(); }
  // Pieces plus special tokens: the size of the id space.
  std::size_t vocab_size() const { return pieces_.size() + kFirstPieceId; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  const Piece& piece(int id) const;
  std::optional<int> find(std::u32string_view text) const;
  std::size_t max_piece_length() const { return max_length_; }
  double min_log_prob() const { return min_log_prob_; }

  // Surface form of one id, boundary markers included.
  std::string id_to_piece(int id) const;

  // Text serialization: four header lines naming the special tokens, then
  // one `piece<TAB>log_prob` line per piece in id order.
  std::string to_text() const;
  static SubwordModel from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static SubwordModel load(const std::filesystem::path& path);
  std::string fingerprint() const;

 private:
  std::vector<Piece> pieces_;
  std::unordered_map<std::u32string, int> index_;
  std::size_t max_length_ = 0;
  double min_log_prob_ = 0.0;
};

// Training words: boundary-prefixed words with corpus frequencies, sorted.
struct WordCount {
  std::u32string word;
  std::uint64_t count = 0;
};
std::vector<WordCount> count_words(std::span<const std::string> sentences);

// "hello world" -> "▁hello▁world"
std::u32string to_marked(std::string_view normalized);

// Edges of the segmentation lattice of one marked string.
struct Lattice {
  struct Edge {
    std::size_t begin = 0;
    std::size_t end = 0;
    int id = kUnkId;
    double score = 0.0;
  };
  std::size_t length = 0;
  std::vector<Edge> edges;  // ordered by (begin, end)
};

// Characters not covered by any piece become single-character unknown edges
// scored below every piece.
Lattice build_lattice(const SubwordModel& model, std::u32string_view marked);

double unknown_score(const SubwordModel& model);

// Maximum-likelihood segmentation of a marked string. Ties on total score go
// to fewer pieces, then to the lexicographically smaller piece sequence.
std::vector<int> segment_marked(const SubwordModel& model, std::u32string_view marked);

// Segmentation of normalized text, word by word.
std::vector<int> viterbi_segment(const SubwordModel& model, std::string_view normalized);

std::vector<int> encode(const SubwordModel& model, std::string_view normalized);
// Pieces concatenated, markers to spaces, trimmed. Special tokens other than
// unknown render as nothing; unknown renders as U+2047. Throws kContract for
// ids outside the vocabulary.
std::string decode(const SubwordModel& model, std::span<const int> ids);

struct SeedOptions {
  std::size_t max_seed_size = 20000;
  std::size_t max_piece_length = 8;
  double character_coverage = 0.9995;
};

// Characters kept after applying character coverage, most frequent first.
std::vector<char32_t> covered_characters(std::span<const WordCount> words,
                                         double character_coverage);

// All covered characters plus the most frequent substrings of length 2..max
// (never crossing a word start), log-probs from normalized frequencies.
std::vector<Piece> seed_vocab(std::span<const WordCount> words, const SeedOptions& options);

struct EmResult {
  SubwordModel model;
  // Corpus log-likelihood of the input model.
  double log_likelihood = 0.0;
};

// One EM iteration: expected piece counts by forward-backward, then
// re-normalization. Multi-character pieces with zero expected count are
// dropped.
EmResult em_step(const SubwordModel& model, std::span<const WordCount> words);

double corpus_log_likelihood(const SubwordModel& model, std::span<const WordCount> words);

// Expected piece counts (indexed by piece, not id) for one marked string.
std::vector<double> expected_counts(const SubwordModel& model, std::u32string_view marked);

// Loss in corpus log-likelihood when one multi-character piece is deleted
// and the others keep their probabilities. Indexed by piece; single
// characters get +infinity.
std::vector<double> removal_losses(const SubwordModel& model, std::span<const WordCount> words);

// Removes the (1 - keep_ratio) fraction of multi-character pieces with the
// smallest removal loss, never going below min_pieces, then renormalizes.
SubwordModel prune_vocab(const SubwordModel& model, std::span<const WordCount> words,
                         double keep_ratio, std::size_t min_pieces);

struct TrainOptions {
  std::size_t vocab_size = 1000;  // pieces, special tokens excluded
  std::size_t em_iters_per_round = 2;
  double keep_ratio = 0.75;
  std::size_t max_piece_length = 8;
  std::size_t seed_factor = 20;
  double character_coverage = 0.9995;
  std::size_t final_em_iters = 2;
  std::uint64_t seed = 1;
};

// Throws kContract if vocab_size is below the covered character inventory,
// kDegenerate for an empty corpus and kInternal if EM ever lowers the
// likelihood by more than 1e-6.
SubwordModel train_unigram(std::span<const std::string> sentences, const TrainOptions& options);

}  // namespace nmt::subword
