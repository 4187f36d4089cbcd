#include <cmath>
#include <cstdio>
#include <map>

#include "nmt/error.hpp"
#include "nmt/eval.hpp"
#include "nmt/text.hpp"

namespace nmt::eval {

namespace {

using Tokens = std::vector<std::string>;
using Counts = std::map<std::vector<std::string_view>, std::size_t>;

Counts ngram_counts(const Tokens& tokens, std::size_t n) {
  Counts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string_view> key(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[key];
  }
  return counts;
}

NgramMatch sentence_match(const Tokens& hyp, const Tokens& ref, std::size_t n) {
  NgramMatch m;
  const auto ref_counts = ngram_counts(ref, n);
  for (const auto& [gram, count] : ngram_counts(hyp, n)) {
    m.total += count;
    const auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) m.matched += std::min(count, it->second);
  }
  return m;
}

void check_lengths(std::span<const std::string> hyps, std::span<const std::string> refs) {
  if (hyps.size() != refs.size()) {
    fail(ErrorKind::kContract, "hypothesis and reference counts differ (" +
                                   std::to_string(hyps.size()) + " vs " +
                                   std::to_string(refs.size()) + ")");
  }
}

}  // namespace

NgramMatch modified_precision(std::span<const std::string> hyps,
                              std::span<const std::string> refs, std::size_t n) {
  check_lengths(hyps, refs);
  require(n >= 1, "n-gram order must be at least 1");
  NgramMatch total;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto m = sentence_match(text::split_words(hyps[i]), text::split_words(refs[i]), n);
    total.matched += m.matched;
    total.total += m.total;
  }
  return total;
}

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

BleuReport corpus_bleu(std::span<const std::string> hyps, std::span<const std::string> refs,
                       bool smooth) {
  check_lengths(hyps, refs);
  BleuReport r;
  r.smoothed = smooth;
  std::array<NgramMatch, 4> matches{};
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto hyp = text::split_words(hyps[i]);
    const auto ref = text::split_words(refs[i]);
    r.hyp_len += hyp.size();
    r.ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto m = sentence_match(hyp, ref, n);
      matches[n - 1].matched += m.matched;
      matches[n - 1].total += m.total;
    }
  }
  bool any_zero = false;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double matched = static_cast<double>(matches[n].matched);
    double total = static_cast<double>(matches[n].total);
    if (smooth && n >= 1) {
      matched += 1.0;
      total += 1.0;
    }
    r.precision[n] = total > 0.0 ? matched / total : 0.0;
    if (r.precision[n] <= 0.0) {
      any_zero = true;
    } else {
      log_sum += 0.25 * std::log(r.precision[n]);
    }
  }
  r.brevity_penalty = brevity_penalty(r.hyp_len, r.ref_len);
  r.bleu = any_zero || r.hyp_len == 0 ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum);
  return r;
}

std::string format_bleu(const BleuReport& r) {
  char line[256];
  std::snprintf(line, sizeof line,
                "bleu=%.2f p1=%.4f p2=%.4f p3=%.4f p4=%.4f bp=%.4f hyp_len=%zu ref_len=%zu%s",
                r.bleu, r.precision[0], r.precision[1], r.precision[2], r.precision[3],
                r.brevity_penalty, r.hyp_len, r.ref_len, r.smoothed ? " smoothed=add-one" : "");
  return line;
}

}  // namespace nmt::eval
