#include "nmt/corpus.hpp"

#include <unicode/uchar.h>
#include <unicode/uscript.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "nmt/error.hpp"
#include "nmt/rng.hpp"
#include "nmt/text.hpp"

namespace nmt::corpus {

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  fail(ErrorKind::kContract, "unknown split '" + std::string(name) + "'");
}

const char* to_string(Side side) {
  return side == Side::kSource ? "source" : "target";
}

namespace {

bool keep_char(char32_t c) {
  if (c == U',' || c == U'.') return true;
  const auto mask = U_GET_GC_MASK(static_cast<UChar32>(c));
  return (mask & (U_GC_L_MASK | U_GC_M_MASK | U_GC_ND_MASK)) != 0;
}

char32_t lower_latin(char32_t c) {
  UErrorCode status = U_ZERO_ERROR;
  if (uscript_getScript(static_cast<UChar32>(c), &status) != USCRIPT_LATIN) return c;
  return static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
}

}  // namespace

std::string normalize_text(std::string_view raw) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : text::to_u32(raw)) {
    if (u_isUWhiteSpace(static_cast<UChar32>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (!keep_char(c)) continue;
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(lower_latin(c));
  }
  return text::to_utf8(out);
}

FilterResult normalize_corpus(const Corpus& corpus) {
  FilterResult result;
  result.corpus.split = corpus.split;
  for (const auto& p : corpus.pairs) {
    SentencePair n{normalize_text(p.source), normalize_text(p.target), p.domain};
    if (n.source.empty() || n.target.empty()) {
      ++result.dropped;
      continue;
    }
    result.corpus.pairs.push_back(std::move(n));
  }
  return result;
}

FilterResult filter_by_length(const Corpus& corpus, std::size_t max_words) {
  FilterResult result;
  result.corpus.split = corpus.split;
  for (const auto& p : corpus.pairs) {
    if (text::count_words(p.source) > max_words || text::count_words(p.target) > max_words) {
      ++result.dropped;
      continue;
    }
    result.corpus.pairs.push_back(p);
  }
  return result;
}

Corpus mix_corpora(const Corpus& general, const Corpus& in_domain, unsigned factor,
                   std::uint64_t seed) {
  require(factor >= 1, "oversampling factor must be at least 1");
  require(general.split == Split::kTrain && in_domain.split == Split::kTrain,
          "only train corpora are mixed");
  Corpus mixed;
  mixed.split = Split::kTrain;
  mixed.pairs.reserve(general.size() + factor * in_domain.size());
  mixed.pairs = general.pairs;
  for (unsigned k = 0; k < factor; ++k) {
    mixed.pairs.insert(mixed.pairs.end(), in_domain.pairs.begin(), in_domain.pairs.end());
  }
  Rng rng(seed);
  rng.shuffle(std::span<SentencePair>(mixed.pairs));
  return mixed;
}

double CoverageReport::unique_percent() const {
  return unique_probe == 0 ? 0.0 : 100.0 * static_cast<double>(unique_covered) / unique_probe;
}

double CoverageReport::total_percent() const {
  return total_probe == 0 ? 0.0 : 100.0 * static_cast<double>(total_covered) / total_probe;
}

CoverageReport token_coverage(const Corpus& reference, const Corpus& probe, Side side) {
  auto side_of = [side](const SentencePair& p) -> const std::string& {
    return side == Side::kSource ? p.source : p.target;
  };
  std::unordered_set<std::string> known;
  for (const auto& p : reference.pairs) {
    for (auto& w : text::split_words(side_of(p))) known.insert(std::move(w));
  }
  CoverageReport report;
  report.side = side;
  std::unordered_set<std::string> seen;
  for (const auto& p : probe.pairs) {
    for (auto& w : text::split_words(side_of(p))) {
      const bool covered = known.count(w) > 0;
      ++report.total_probe;
      if (covered) ++report.total_covered;
      if (seen.insert(std::move(w)).second) {
        ++report.unique_probe;
        if (covered) ++report.unique_covered;
      }
    }
  }
  if (report.total_probe == 0) {
    fail(ErrorKind::kDegenerate,
         std::string("coverage probe has no ") + to_string(side) + " tokens");
  }
  return report;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats s;
  s.sentences = corpus.size();
  for (const auto& p : corpus.pairs) {
    s.source_tokens += text::count_words(p.source);
    s.target_tokens += text::count_words(p.target);
  }
  return s;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return prefix.string() + suffix;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& prefix, std::string domain, Split split) {
  const auto src_path = with_suffix(prefix, ".src");
  const auto tgt_path = with_suffix(prefix, ".tgt");
  auto src = read_lines(src_path);
  auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    fail(ErrorKind::kData, src_path.string() + " has " + std::to_string(src.size()) +
                               " lines but " + tgt_path.string() + " has " +
                               std::to_string(tgt.size()));
  }
  Corpus corpus;
  corpus.split = split;
  corpus.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    corpus.pairs.push_back({std::move(src[i]), std::move(tgt[i]), domain});
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& prefix) {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  std::ofstream src(with_suffix(prefix, ".src"), std::ios::binary);
  std::ofstream tgt(with_suffix(prefix, ".tgt"), std::ios::binary);
  if (!src || !tgt) fail(ErrorKind::kData, "cannot write corpus " + prefix.string());
  for (const auto& p : corpus.pairs) {
    src << p.source << '\n';
    tgt << p.target << '\n';
  }
}

std::vector<std::string> source_side(const Corpus& corpus) {
  std::vector<std::string> out;
  for (const auto& p : corpus.pairs) out.push_back(p.source);
  return out;
}

std::vector<std::string> target_side(const Corpus& corpus) {
  std::vector<std::string> out;
  for (const auto& p : corpus.pairs) out.push_back(p.target);
  return out;
}

std::string stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %12s %14s %14s\n", "data", "sentences", "src tokens",
                "tgt tokens");
  out << line;
  for (const auto& [name, s] : rows) {
    std::snprintf(line, sizeof line, "%-24s %12zu %14zu %14zu\n", name.c_str(), s.sentences,
                  s.source_tokens, s.target_tokens);
    out << line;
  }
  return out.str();
}

std::string stats_key_values(const std::string& name, const CorpusStats& s) {
  std::ostringstream out;
  out << name << ".sentences=" << s.sentences << '\n'
      << name << ".source_tokens=" << s.source_tokens << '\n'
      << name << ".target_tokens=" << s.target_tokens << '\n';
  return out.str();
}

std::string coverage_table(const CoverageReport& source, const CoverageReport& target) {
  char buf[400];
  std::snprintf(buf, sizeof buf,
                "%-10s %18s %18s\n"
                "%-10s %8.1f / %-7.1f %8zu / %-7zu\n"
                "%-10s %8.1f / %-7.1f %8zu / %-7zu\n",
                "", "% (src / tgt)", "covered (src/tgt)", "unique", source.unique_percent(),
                target.unique_percent(), source.unique_covered, target.unique_covered, "all",
                source.total_percent(), target.total_percent(), source.total_covered,
                target.total_covered);
  return buf;
}

std::string coverage_key_values(const CoverageReport& source, const CoverageReport& target) {
  std::ostringstream out;
  for (const auto* r : {&source, &target}) {
    const std::string side = to_string(r->side);
    char pct[64];
    std::snprintf(pct, sizeof pct, "%.4f", r->unique_percent());
    out << side << ".unique_percent=" << pct << '\n';
    std::snprintf(pct, sizeof pct, "%.4f", r->total_percent());
    out << side << ".total_percent=" << pct << '\n';
    out << side << ".unique_probe=" << r->unique_probe << '\n'
        << side << ".unique_covered=" << r->unique_covered << '\n'
        << side << ".total_probe=" << r->total_probe << '\n'
        << side << ".total_covered=" << r->total_covered << '\n';
  }
  return out.str();
}

}  // namespace nmt::corpus
