#include "nmt/subword.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_set>

#include "nmt/error.hpp"
#include "nmt/text.hpp"

namespace nmt::subword {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kUnknownPenalty = 10.0;
constexpr double kLikelihoodTolerance = 1e-6;
// Expected count given to a covered character that no training word uses,
// so every covered character keeps a finite probability.
constexpr double kCharacterCountFloor = 1e-10;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

const char* special_surface(int id) {
  switch (id) {
    case kPadId: return "<pad>";
    case kUnkId: return "<unk>";
    case kBosId: return "<s>";
    case kEosId: return "</s>";
  }
  return "";
}

// Orders pieces by probability, best first; ties by text.
void rank_pieces(std::vector<Piece>& pieces) {
  std::stable_sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.text < b.text;
  });
}

void renormalize(std::vector<Piece>& pieces) {
  double total = kNegInf;
  for (const auto& p : pieces) total = log_add(total, p.log_prob);
  for (auto& p : pieces) p.log_prob -= total;
}

}  // namespace

SubwordModel::SubwordModel(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {
  min_log_prob_ = pieces_.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    const auto& p = pieces_[i];
    require(!p.text.empty(), "subword piece with empty text");
    require(std::isfinite(p.log_prob), "subword piece with non-finite log-probability");
    const bool inserted = index_.emplace(p.text, static_cast<int>(i) + kFirstPieceId).second;
    require(inserted, "duplicate subword piece " + text::to_utf8(p.text));
    max_length_ = std::max(max_length_, p.text.size());
    min_log_prob_ = std::min(min_log_prob_, p.log_prob);
  }
}

const Piece& SubwordModel::piece(int id) const {
  require(id >= kFirstPieceId && static_cast<std::size_t>(id) < vocab_size(),
          "not a piece id: " + std::to_string(id));
  return pieces_[id - kFirstPieceId];
}

std::optional<int> SubwordModel::find(std::u32string_view text) const {
  if (auto it = index_.find(std::u32string(text)); it != index_.end()) return it->second;
  return std::nullopt;
}

std::string SubwordModel::id_to_piece(int id) const {
  if (id >= 0 && id < kFirstPieceId) return special_surface(id);
  return text::to_utf8(piece(id).text);
}

std::string SubwordModel::to_text() const {
  std::string out;
  for (int id = 0; id < kFirstPieceId; ++id) {
    static constexpr const char* kNames[] = {"pad", "unk", "bos", "eos"};
    out += kNames[id];
    out += '\t';
    out += special_surface(id);
    out += '\n';
  }
  char num[40];
  for (const auto& p : pieces_) {
    std::snprintf(num, sizeof num, "%.17g", p.log_prob);
    out += text::to_utf8(p.text);
    out += '\t';
    out += num;
    out += '\n';
  }
  return out;
}

SubwordModel SubwordModel::from_text(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string line;
  static constexpr const char* kHeader[] = {"pad\t<pad>", "unk\t<unk>", "bos\t<s>", "eos\t</s>"};
  for (const char* expected : kHeader) {
    if (!std::getline(in, line) || line != expected) {
      fail(ErrorKind::kData, std::string("subword model header: expected '") + expected + "'");
    }
  }
  std::vector<Piece> pieces;
  std::size_t line_no = 4;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0) {
      fail(ErrorKind::kData, "subword model line " + std::to_string(line_no) + " malformed");
    }
    char* end = nullptr;
    const std::string number = line.substr(tab + 1);
    const double lp = std::strtod(number.c_str(), &end);
    if (end == number.c_str() || *end != '\0') {
      fail(ErrorKind::kData, "subword model line " + std::to_string(line_no) + ": bad log-prob");
    }
    pieces.push_back({text::to_u32(std::string_view(line).substr(0, tab)), lp});
  }
  return SubwordModel(std::move(pieces));
}

void SubwordModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write subword model " + path.string());
  out << to_text();
}

SubwordModel SubwordModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot open subword model " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string SubwordModel::fingerprint() const { return text::hex64(text::fnv1a(to_text())); }

std::vector<WordCount> count_words(std::span<const std::string> sentences) {
  std::map<std::u32string, std::uint64_t> counts;
  for (const auto& s : sentences) {
    for (const auto& w : text::split_words(s)) {
      std::u32string marked(1, kBoundary);
      marked += text::to_u32(w);
      ++counts[marked];
    }
  }
  std::vector<WordCount> out;
  out.reserve(counts.size());
  for (auto& [w, c] : counts) out.push_back({w, c});
  return out;
}

std::u32string to_marked(std::string_view normalized) {
  std::u32string out;
  for (const auto& w : text::split_words(normalized)) {
    out.push_back(kBoundary);
    out += text::to_u32(w);
  }
  return out;
}

double unknown_score(const SubwordModel& model) {
  return model.min_log_prob() - kUnknownPenalty;
}

Lattice build_lattice(const SubwordModel& model, std::u32string_view marked) {
  Lattice lattice;
  lattice.length = marked.size();
  const double unk = unknown_score(model);
  for (std::size_t b = 0; b < marked.size(); ++b) {
    const std::size_t longest = std::min(model.max_piece_length(), marked.size() - b);
    bool has_single = false;
    for (std::size_t len = 1; len <= longest; ++len) {
      if (auto id = model.find(marked.substr(b, len))) {
        lattice.edges.push_back({b, b + len, *id, model.piece(*id).log_prob});
        has_single |= len == 1;
      }
    }
    if (!has_single) {
      // Keep (begin, end) order: the unknown edge is the shortest.
      auto pos = lattice.edges.end();
      while (pos != lattice.edges.begin() && (pos - 1)->begin == b) --pos;
      lattice.edges.insert(pos, {b, b + 1, kUnkId, unk});
    }
  }
  return lattice;
}

namespace {

// Scores of paths that hold the same pieces in a different order can differ
// in the last bits; such near-equal scores count as ties.
bool same_score(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b));
}

}  // namespace

std::vector<int> segment_marked(const SubwordModel& model, std::u32string_view marked) {
  if (marked.empty()) return {};
  const Lattice lattice = build_lattice(model, marked);
  const std::size_t n = lattice.length;
  std::vector<double> best(n + 1, kNegInf);
  std::vector<std::size_t> pieces(n + 1, 0);
  std::vector<std::ptrdiff_t> back(n + 1, -1);
  best[0] = 0.0;

  auto path_to = [&](std::size_t pos) {
    std::vector<std::size_t> edges;
    while (pos > 0) {
      const auto e = static_cast<std::size_t>(back[pos]);
      edges.push_back(e);
      pos = lattice.edges[e].begin;
    }
    std::reverse(edges.begin(), edges.end());
    return edges;
  };
  // Lexicographic comparison of the piece texts along two paths.
  auto lex_less = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
      const auto& ea = lattice.edges[a[i]];
      const auto& eb = lattice.edges[b[i]];
      const auto ta = marked.substr(ea.begin, ea.end - ea.begin);
      const auto tb = marked.substr(eb.begin, eb.end - eb.begin);
      if (ta != tb) return ta < tb;
    }
    return a.size() < b.size();
  };

  for (std::size_t i = 0; i < lattice.edges.size(); ++i) {
    const auto& e = lattice.edges[i];
    if (best[e.begin] == kNegInf) continue;
    const double score = best[e.begin] + e.score;
    const std::size_t count = pieces[e.begin] + 1;
    bool better = false;
    if (back[e.end] < 0) {
      better = true;
    } else if (!same_score(score, best[e.end])) {
      better = score > best[e.end];
    } else {
      if (count != pieces[e.end]) {
        better = count < pieces[e.end];
      } else {
        auto candidate = path_to(e.begin);
        candidate.push_back(i);
        better = lex_less(candidate, path_to(e.end));
      }
    }
    if (better) {
      best[e.end] = score;
      pieces[e.end] = count;
      back[e.end] = static_cast<std::ptrdiff_t>(i);
    }
  }
  std::vector<int> ids;
  for (auto e : path_to(n)) ids.push_back(lattice.edges[e].id);
  return ids;
}

std::vector<int> viterbi_segment(const SubwordModel& model, std::string_view normalized) {
  std::vector<int> ids;
  for (const auto& w : text::split_words(normalized)) {
    std::u32string marked(1, kBoundary);
    marked += text::to_u32(w);
    auto part = segment_marked(model, marked);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

std::vector<int> encode(const SubwordModel& model, std::string_view normalized) {
  return viterbi_segment(model, normalized);
}

std::string decode(const SubwordModel& model, std::span<const int> ids) {
  std::u32string joined;
  for (int id : ids) {
    require(id >= 0 && static_cast<std::size_t>(id) < model.vocab_size(),
            "id " + std::to_string(id) + " outside vocabulary of " +
                std::to_string(model.vocab_size()));
    if (id == kUnkId) {
      joined += text::to_u32(kUnknownSurface);
    } else if (id >= kFirstPieceId) {
      joined += model.piece(id).text;
    }
  }
  std::string out;
  for (char32_t c : joined) out += c == kBoundary ? std::string(" ") : text::to_utf8(c);
  return text::trim(out);
}

std::vector<char32_t> covered_characters(std::span<const WordCount> words,
                                         double character_coverage) {
  std::map<char32_t, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& w : words) {
    for (char32_t c : w.word) {
      counts[c] += w.count;
      total += w.count;
    }
  }
  std::vector<std::pair<char32_t, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<char32_t> kept;
  std::uint64_t cumulative = 0;
  for (const auto& [c, n] : ranked) {
    if (total > 0 && static_cast<double>(cumulative) / static_cast<double>(total) >=
                         character_coverage) {
      break;
    }
    kept.push_back(c);
    cumulative += n;
  }
  if (!words.empty() && std::find(kept.begin(), kept.end(), kBoundary) == kept.end()) {
    kept.push_back(kBoundary);
  }
  return kept;
}

std::vector<Piece> seed_vocab(std::span<const WordCount> words, const SeedOptions& options) {
  if (words.empty()) fail(ErrorKind::kDegenerate, "cannot seed a vocabulary from an empty corpus");
  const auto chars = covered_characters(words, options.character_coverage);
  require(options.max_seed_size >= chars.size(),
          "seed size " + std::to_string(options.max_seed_size) + " below character inventory of " +
              std::to_string(chars.size()));
  const std::unordered_set<char32_t> covered(chars.begin(), chars.end());

  std::map<std::u32string, std::uint64_t> char_freq;
  std::unordered_map<std::u32string, std::uint64_t> substr_freq;
  for (const auto& w : words) {
    const auto& s = w.word;
    for (std::size_t b = 0; b < s.size(); ++b) {
      if (!covered.count(s[b])) continue;
      char_freq[s.substr(b, 1)] += w.count;
      for (std::size_t len = 2; len <= options.max_piece_length && b + len <= s.size(); ++len) {
        if (!covered.count(s[b + len - 1])) break;
        substr_freq[s.substr(b, len)] += w.count;
      }
    }
  }
  std::vector<std::pair<std::u32string, std::uint64_t>> ranked(substr_freq.begin(),
                                                               substr_freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t room = options.max_seed_size - char_freq.size();
  if (ranked.size() > room) ranked.resize(room);

  std::vector<Piece> pieces;
  double total = 0.0;
  for (const auto& [t, n] : char_freq) total += static_cast<double>(n);
  for (const auto& [t, n] : ranked) total += static_cast<double>(n);
  for (const auto& [t, n] : char_freq) pieces.push_back({t, std::log(n / total)});
  for (const auto& [t, n] : ranked) pieces.push_back({t, std::log(n / total)});
  rank_pieces(pieces);
  return pieces;
}

namespace {

struct Forward {
  std::vector<double> alpha;
  double log_z = kNegInf;
};

// Forward pass; edges with id == skip_id are ignored.
Forward forward(const Lattice& lattice, int skip_id = -1) {
  Forward f;
  f.alpha.assign(lattice.length + 1, kNegInf);
  f.alpha[0] = 0.0;
  for (const auto& e : lattice.edges) {
    if (e.id == skip_id || f.alpha[e.begin] == kNegInf) continue;
    f.alpha[e.end] = log_add(f.alpha[e.end], f.alpha[e.begin] + e.score);
  }
  f.log_z = f.alpha[lattice.length];
  return f;
}

std::vector<double> backward(const Lattice& lattice) {
  std::vector<double> beta(lattice.length + 1, kNegInf);
  beta[lattice.length] = 0.0;
  for (auto it = lattice.edges.rbegin(); it != lattice.edges.rend(); ++it) {
    if (beta[it->end] == kNegInf) continue;
    beta[it->begin] = log_add(beta[it->begin], it->score + beta[it->end]);
  }
  return beta;
}

// Adds weight * posterior(edge) into counts; returns log Z.
double accumulate_counts(const Lattice& lattice, double weight, std::vector<double>& counts) {
  const Forward f = forward(lattice);
  const auto beta = backward(lattice);
  for (const auto& e : lattice.edges) {
    if (e.id < kFirstPieceId) continue;
    const double lp = f.alpha[e.begin] + e.score + beta[e.end] - f.log_z;
    counts[e.id - kFirstPieceId] += weight * std::exp(lp);
  }
  return f.log_z;
}

}  // namespace

std::vector<double> expected_counts(const SubwordModel& model, std::u32string_view marked) {
  std::vector<double> counts(model.piece_count(), 0.0);
  if (!marked.empty()) accumulate_counts(build_lattice(model, marked), 1.0, counts);
  return counts;
}

double corpus_log_likelihood(const SubwordModel& model, std::span<const WordCount> words) {
  double total = 0.0;
  for (const auto& w : words) {
    total += static_cast<double>(w.count) * forward(build_lattice(model, w.word)).log_z;
  }
  return total;
}

EmResult em_step(const SubwordModel& model, std::span<const WordCount> words) {
  std::vector<double> counts(model.piece_count(), 0.0);
  double log_likelihood = 0.0;
  for (const auto& w : words) {
    const auto lattice = build_lattice(model, w.word);
    log_likelihood += static_cast<double>(w.count) *
                      accumulate_counts(lattice, static_cast<double>(w.count), counts);
  }
  std::vector<Piece> next;
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& p = model.pieces()[i];
    double c = counts[i];
    if (p.text.size() == 1) {
      c = std::max(c, kCharacterCountFloor);
    } else if (c <= 0.0) {
      continue;
    }
    counts[i] = c;
    total += c;
    next.push_back({p.text, c});
  }
  const double log_total = std::log(total);
  for (auto& p : next) p.log_prob = std::log(p.log_prob) - log_total;
  return {SubwordModel(std::move(next)), log_likelihood};
}

std::vector<double> removal_losses(const SubwordModel& model, std::span<const WordCount> words) {
  const std::size_t n = model.piece_count();
  std::vector<Lattice> lattices;
  std::vector<double> log_z;
  std::vector<std::vector<std::size_t>> users(n);
  lattices.reserve(words.size());
  for (std::size_t w = 0; w < words.size(); ++w) {
    lattices.push_back(build_lattice(model, words[w].word));
    log_z.push_back(forward(lattices.back()).log_z);
    for (const auto& e : lattices.back().edges) {
      if (e.id < kFirstPieceId) continue;
      auto& u = users[e.id - kFirstPieceId];
      if (u.empty() || u.back() != w) u.push_back(w);
    }
  }
  std::vector<double> losses(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    if (model.pieces()[i].text.size() == 1) continue;
    const int id = static_cast<int>(i) + kFirstPieceId;
    double loss = 0.0;
    for (auto w : users[i]) {
      loss += static_cast<double>(words[w].count) * (log_z[w] - forward(lattices[w], id).log_z);
    }
    losses[i] = loss;
  }
  return losses;
}

SubwordModel prune_vocab(const SubwordModel& model, std::span<const WordCount> words,
                         double keep_ratio, std::size_t min_pieces) {
  require(keep_ratio > 0.0 && keep_ratio <= 1.0, "keep ratio must be in (0,1]");
  const auto& pieces = model.pieces();
  std::vector<std::size_t> multi;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].text.size() > 1) multi.push_back(i);
  }
  std::size_t remove = static_cast<std::size_t>(
      std::floor((1.0 - keep_ratio) * static_cast<double>(multi.size())));
  if (keep_ratio < 1.0 && remove == 0 && !multi.empty()) remove = 1;
  remove = std::min(remove, pieces.size() > min_pieces ? pieces.size() - min_pieces : 0);
  if (remove == 0) return model;

  const auto losses = removal_losses(model, words);
  std::stable_sort(multi.begin(), multi.end(), [&](std::size_t a, std::size_t b) {
    if (losses[a] != losses[b]) return losses[a] < losses[b];
    return pieces[a].text < pieces[b].text;
  });
  std::vector<bool> dropped(pieces.size(), false);
  for (std::size_t k = 0; k < remove; ++k) dropped[multi[k]] = true;
  std::vector<Piece> kept;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (!dropped[i]) kept.push_back(pieces[i]);
  }
  renormalize(kept);
  return SubwordModel(std::move(kept));
}

SubwordModel train_unigram(std::span<const std::string> sentences, const TrainOptions& options) {
  auto all_words = count_words(sentences);
  if (all_words.empty()) fail(ErrorKind::kDegenerate, "tokenizer training corpus is empty");
  const auto chars = covered_characters(all_words, options.character_coverage);
  if (options.vocab_size < chars.size()) {
    fail(ErrorKind::kContract, "vocab size " + std::to_string(options.vocab_size) +
                                   " is smaller than the character inventory of " +
                                   std::to_string(chars.size()));
  }
  // Words with uncovered characters would only ever segment through the
  // unknown token; they stay out of training.
  const std::unordered_set<char32_t> covered(chars.begin(), chars.end());
  std::vector<WordCount> words;
  for (auto& w : all_words) {
    if (std::all_of(w.word.begin(), w.word.end(), [&](char32_t c) { return covered.count(c); })) {
      words.push_back(std::move(w));
    }
  }

  SeedOptions seed_options;
  seed_options.max_piece_length = options.max_piece_length;
  seed_options.character_coverage = options.character_coverage;
  seed_options.max_seed_size = std::max(options.vocab_size * options.seed_factor, chars.size());
  SubwordModel model(seed_vocab(words, seed_options));

  double previous = kNegInf;
  auto run_em = [&](std::size_t iterations) {
    for (std::size_t i = 0; i < iterations; ++i) {
      auto result = em_step(model, words);
      const double slack = kLikelihoodTolerance + 1e-12 * std::abs(previous);
      if (previous != kNegInf && result.log_likelihood < previous - slack) {
        fail(ErrorKind::kInternal, "EM lowered the corpus likelihood from " +
                                       std::to_string(previous) + " to " +
                                       std::to_string(result.log_likelihood));
      }
      previous = result.log_likelihood;
      model = std::move(result.model);
    }
  };

  while (true) {
    run_em(options.em_iters_per_round);
    if (model.piece_count() <= options.vocab_size) break;
    model = prune_vocab(model, words, options.keep_ratio, options.vocab_size);
    previous = kNegInf;
  }
  run_em(options.final_em_iters);

  std::vector<Piece> ranked = model.pieces();
  rank_pieces(ranked);
  return SubwordModel(std::move(ranked));
}

}  // namespace nmt::subword
