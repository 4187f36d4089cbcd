#include <algorithm>
#include <cstdio>

#include "nmt/eval.hpp"

namespace nmt::eval {

RunEvaluation evaluate_run(decoding::Translator& translator, const corpus::Corpus& dev,
                           bool smooth) {
  RunEvaluation out;
  const auto sources = corpus::source_side(dev);
  const auto references = corpus::target_side(dev);
  out.hypotheses = translator.translate_all(sources);
  out.bleu = corpus_bleu(out.hypotheses, references, smooth);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    out.log += std::to_string(i) + "\t" + sources[i] + "\t" + out.hypotheses[i] + "\t" +
               references[i] + "\n";
  }
  return out;
}

std::string matrix_csv_row(const MatrixRow& row) {
  const auto& b = row.bleu;
  char numbers[200];
  std::snprintf(numbers, sizeof numbers, "%.2f,%.4f,%.4f,%.4f,%.4f,%.4f,%zu,%zu", b.bleu,
                b.precision[0], b.precision[1], b.precision[2], b.precision[3], b.brevity_penalty,
                b.hyp_len, b.ref_len);
  return row.model + "," + row.strategy + "," + row.domain + "," + row.split + "," + numbers;
}

std::string matrix_csv(const std::vector<MatrixRow>& rows) {
  std::string out = std::string(kMatrixHeader) + "\n";
  for (const auto& r : rows) out += matrix_csv_row(r) + "\n";
  return out;
}

std::string matrix_table(const std::vector<MatrixRow>& rows) {
  std::vector<std::string> domains;
  std::vector<std::pair<std::string, std::string>> systems;
  for (const auto& r : rows) {
    if (std::find(domains.begin(), domains.end(), r.domain) == domains.end()) {
      domains.push_back(r.domain);
    }
    const std::pair<std::string, std::string> key{r.model, r.strategy};
    if (std::find(systems.begin(), systems.end(), key) == systems.end()) systems.push_back(key);
  }
  char cell[64];
  std::string out;
  std::snprintf(cell, sizeof cell, "%-28s", "system");
  out += cell;
  for (const auto& d : domains) {
    std::snprintf(cell, sizeof cell, " %12s", d.c_str());
    out += cell;
  }
  out += "\n";
  for (const auto& [model, strategy] : systems) {
    const std::string name = model + " (" + strategy + ")";
    std::snprintf(cell, sizeof cell, "%-28s", name.c_str());
    out += cell;
    for (const auto& d : domains) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const MatrixRow& r) {
        return r.model == model && r.strategy == strategy && r.domain == d;
      });
      if (it == rows.end()) {
        std::snprintf(cell, sizeof cell, " %12s", "-");
      } else {
        std::snprintf(cell, sizeof cell, " %12.2f", it->bleu.bleu);
      }
      out += cell;
    }
    out += "\n";
  }
  return out;
}

}  // namespace nmt::eval
