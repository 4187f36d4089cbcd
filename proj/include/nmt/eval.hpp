#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "nmt/corpus.hpp"
#include "nmt/decoding.hpp"

namespace nmt::eval {

struct NgramMatch {
  std::size_t matched = 0;
  std::size_t total = 0;
};

// Whitespace-tokenized surface text on both sides. Hypothesis n-gram counts
// are clipped by the reference counts per sentence, then summed.
NgramMatch modified_precision(std::span<const std::string> hyps,
                              std::span<const std::string> refs, std::size_t n);

// 0 for an empty hypothesis, 1 when hyp_len >= ref_len,
// exp(1 - ref_len / hyp_len) otherwise.
double brevity_penalty(std::size_t hyp_len, std::size_t ref_len);

struct BleuReport {
  double bleu = 0.0;  // 0..100
  std::array<double, 4> precision{};
  double brevity_penalty = 0.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  bool smoothed = false;
};

// Corpus-level 4-gram BLEU against a single reference. With smooth set,
// precisions for n >= 2 use add-one counts (not the canonical metric).
BleuReport corpus_bleu(std::span<const std::string> hyps, std::span<const std::string> refs,
                       bool smooth = false);

// "bleu=100.00 p1=... bp=... hyp_len=... ref_len=..."
std::string format_bleu(const BleuReport& report);

struct RunEvaluation {
  BleuReport bleu;
  std::vector<std::string> hypotheses;
  std::string log;  // index, source, hypothesis, reference per line, tab separated
};

RunEvaluation evaluate_run(decoding::Translator& translator, const corpus::Corpus& dev,
                           bool smooth = false);

struct MatrixRow {
  std::string model;
  std::string strategy;
  std::string domain;
  std::string split;
  BleuReport bleu;
};

inline constexpr const char* kMatrixHeader =
    "model,strategy,domain,split,bleu,p1,p2,p3,p4,bp,hyp_len,ref_len";

std::string matrix_csv_row(const MatrixRow& row);
std::string matrix_csv(const std::vector<MatrixRow>& rows);
// One line per (model, strategy), one BLEU column per domain.
std::string matrix_table(const std::vector<MatrixRow>& rows);

}  // namespace nmt::eval
