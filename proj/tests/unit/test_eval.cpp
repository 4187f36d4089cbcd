#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nmt/error.hpp"
#include "nmt/eval.hpp"
#include "nmt/rng.hpp"
#include "support/oracles.hpp"

using namespace nmt;
using namespace nmt::eval;
using Lines = std::vector<std::string>;

namespace {

std::string random_sentence(Rng& rng, std::size_t max_words) {
  static const char* vocab[] = {"a", "b", "c", "d", "e"};
  const std::size_t n = rng.below(max_words + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += vocab[rng.below(5)];
  }
  return s;
}

// A reference with some words replaced, dropped or duplicated.
std::string perturb(Rng& rng, const std::string& ref) {
  std::string out;
  for (const auto& w : testing::naive_split(ref)) {
    const auto r = rng.below(10);
    std::string word = r == 0 ? "z" : w;
    if (r == 1) continue;
    if (!out.empty()) out += ' ';
    out += word;
    if (r == 2) out += " " + word;
  }
  return out;
}

}  // namespace

TEST_CASE("clipped unigram precision of a repeated word") {
  const Lines hyp = {"the the the the the the the"};
  const Lines ref = {"the cat is on the mat"};
  const auto m = modified_precision(hyp, ref, 1);
  CHECK(m.matched == 2);
  CHECK(m.total == 7);
}

TEST_CASE("hand-counted unigram and bigram precisions") {
  const Lines hyp = {"the cat the cat on mat"};
  const Lines ref = {"the cat is on the mat"};
  const auto p1 = modified_precision(hyp, ref, 1);
  const auto p2 = modified_precision(hyp, ref, 2);
  CHECK(p1.matched == 5);
  CHECK(p1.total == 6);
  CHECK(p2.matched == 1);
  CHECK(p2.total == 5);
  const auto r = corpus_bleu(hyp, ref);
  CHECK(r.precision[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(r.precision[1] == doctest::Approx(1.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("n-grams longer than every hypothesis have no total") {
  const auto m = modified_precision(Lines{"a b"}, Lines{"a b"}, 3);
  CHECK(m.total == 0);
  CHECK(m.matched == 0);
}

TEST_CASE("brevity penalty") {
  CHECK(brevity_penalty(10, 10) == 1.0);
  CHECK(brevity_penalty(20, 10) == 1.0);
  CHECK(std::abs(brevity_penalty(5, 10) - std::exp(-1.0)) < 1e-12);
  CHECK(brevity_penalty(5, 10) == doctest::Approx(0.36788).epsilon(1e-5));
  CHECK(brevity_penalty(0, 10) == 0.0);
}

TEST_CASE("identical corpora score 100") {
  const Lines x = {"a b c d e", "the cat is on the mat", "one two three four"};
  const auto r = corpus_bleu(x, x);
  CHECK(r.bleu == doctest::Approx(100.0).epsilon(1e-12));
  for (double p : r.precision) CHECK(p == 1.0);
  CHECK(r.brevity_penalty == 1.0);
  CHECK(format_bleu(r).rfind("bleu=100.00", 0) == 0);
}

TEST_CASE("a zero precision makes BLEU zero unless smoothed") {
  const Lines hyp = {"a b c x"};
  const Lines ref = {"a b c d"};
  const auto plain = corpus_bleu(hyp, ref);
  CHECK(plain.precision[3] == 0.0);
  CHECK(plain.bleu == 0.0);
  const auto smooth = corpus_bleu(hyp, ref, true);
  CHECK(smooth.smoothed);
  CHECK(smooth.precision[0] == doctest::Approx(3.0 / 4.0));
  CHECK(smooth.precision[1] == doctest::Approx(3.0 / 4.0));
  CHECK(smooth.precision[3] == doctest::Approx(1.0 / 2.0));
  CHECK(smooth.bleu > 0.0);
  CHECK(format_bleu(smooth).find("smoothed") != std::string::npos);
}

TEST_CASE("empty hypotheses score zero") {
  const auto r = corpus_bleu(Lines{""}, Lines{"a b"});
  CHECK(r.hyp_len == 0);
  CHECK(r.brevity_penalty == 0.0);
  CHECK(r.bleu == 0.0);
}

TEST_CASE("mismatched line counts are a contract error") {
  try {
    corpus_bleu(Lines{"a"}, Lines{"a", "b"});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kContract);
  }
}

TEST_CASE("corpus BLEU agrees with the brute-force scorer") {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    CAPTURE(trial);
    Lines hyps, refs;
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      refs.push_back(random_sentence(rng, 10));
      hyps.push_back(rng.below(4) == 0 ? random_sentence(rng, 10) : perturb(rng, refs.back()));
    }
    const auto got = corpus_bleu(hyps, refs);
    const auto want = testing::brute_force_bleu(hyps, refs);
    CHECK(std::abs(got.bleu - want.bleu) < 1e-9);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(got.precision[k] - want.precision[k]) < 1e-9);
    CHECK(std::abs(got.brevity_penalty - want.brevity_penalty) < 1e-9);
    CHECK(got.hyp_len == want.hyp_len);
    CHECK(got.ref_len == want.ref_len);
  }
}

TEST_CASE("joint permutation leaves BLEU unchanged") {
  Rng rng(8);
  Lines hyps, refs;
  for (int i = 0; i < 8; ++i) {
    refs.push_back(random_sentence(rng, 9));
    hyps.push_back(perturb(rng, refs.back()));
  }
  const double base = corpus_bleu(hyps, refs).bleu;
  std::vector<std::size_t> order(hyps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int t = 0; t < 5; ++t) {
    rng.shuffle(std::span<std::size_t>(order));
    Lines h, r;
    for (auto i : order) {
      h.push_back(hyps[i]);
      r.push_back(refs[i]);
    }
    CHECK(std::abs(corpus_bleu(h, r).bleu - base) < 1e-9);
  }
}

TEST_CASE("replacing a correct sentence by unrelated tokens never raises BLEU") {
  const Lines refs = {"the cat is on the mat", "a dog runs in the park", "we like green tea a lot"};
  Lines hyps = refs;
  double previous = corpus_bleu(hyps, refs).bleu;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyps[i] = "qq rr ss tt uu vv";
    const double now = corpus_bleu(hyps, refs).bleu;
    CHECK(now <= previous);
    previous = now;
  }
  CHECK(previous == 0.0);
}

TEST_CASE("experiment matrix rows and table") {
  BleuReport b;
  b.bleu = 12.3456;
  b.precision = {0.5, 0.25, 0.125, 0.0625};
  b.brevity_penalty = 1.0;
  b.hyp_len = 40;
  b.ref_len = 38;
  std::vector<MatrixRow> rows = {{"lstm", "mixed", "ai", "dev", b},
                                 {"lstm", "mixed", "chemistry", "dev", b},
                                 {"transformer", "general", "ai", "dev", b}};
  const auto csv = matrix_csv(rows);
  CHECK(csv.rfind("model,strategy,domain,split,bleu,p1,p2,p3,p4,bp,hyp_len,ref_len\n", 0) == 0);
  CHECK(matrix_csv_row(rows[0]) == "lstm,mixed,ai,dev,12.35,0.5000,0.2500,0.1250,0.0625,1.0000,40,38");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  const auto table = matrix_table(rows);
  CHECK(table.find("lstm (mixed)") != std::string::npos);
  CHECK(table.find("chemistry") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}
