#include <cstdio>

#include "nmt/app.hpp"
#include "nmt/error.hpp"

namespace nmt::app {

namespace fs = std::filesystem;

fs::path split_prefix(const fs::path& stem, corpus::Split split) {
  auto p = stem;
  p += std::string(".") + corpus::to_string(split);
  return p;
}

corpus::Corpus load_clean(const fs::path& stem, const std::string& domain, corpus::Split split,
                          std::size_t max_words) {
  const auto raw = corpus::load_corpus(split_prefix(stem, split), domain, split);
  return corpus::filter_by_length(corpus::normalize_corpus(raw).corpus, max_words).corpus;
}

training::TokenizerPair train_tokenizers(const std::vector<const corpus::Corpus*>& corpora,
                                         const RunConfig& config) {
  std::vector<std::string> src, tgt;
  for (const auto* c : corpora) {
    for (const auto& p : c->pairs) {
      src.push_back(p.source);
      tgt.push_back(p.target);
    }
  }
  return {subword::train_unigram(src, config.tokenizer_options(true)),
          subword::train_unigram(tgt, config.tokenizer_options(false))};
}

void save_tokenizers(const training::TokenizerPair& tokenizers, const fs::path& dir) {
  fs::create_directories(dir);
  tokenizers.source.save(dir / "source.model");
  tokenizers.target.save(dir / "target.model");
}

training::TokenizerPair load_tokenizers(const fs::path& dir) {
  return {subword::SubwordModel::load(dir / "source.model"),
          subword::SubwordModel::load(dir / "target.model")};
}

ExperimentData load_experiment_data(const RunConfig& config) {
  const fs::path dir = config.data_dir;
  ExperimentData d;
  d.general_train = load_clean(dir / config.general, std::string(corpus::kGeneralDomain),
                               corpus::Split::kTrain, config.max_words);
  d.general_dev = load_clean(dir / config.general, std::string(corpus::kGeneralDomain),
                             corpus::Split::kDev, config.max_words);
  for (const auto& domain : config.domains) {
    d.domain_train[domain] = load_clean(dir / domain, domain, corpus::Split::kTrain, config.max_words);
    d.domain_dev[domain] = load_clean(dir / domain, domain, corpus::Split::kDev, config.max_words);
  }
  return d;
}

namespace {

struct Trained {
  training::Checkpoint checkpoint;
  training::TrainReport report;
};

Trained train_or_load(const training::Strategy& strategy, const training::TrainingData& data,
                      const training::TokenizerPair& tokenizers,
                      const training::TrainConfig& config, const training::Checkpoint* base,
                      const fs::path& dir, const Progress& progress) {
  const auto path = dir / "model.nmtc";
  if (fs::exists(path)) {
    if (progress) progress("reusing " + path.string());
    Trained t;
    t.checkpoint = training::load_checkpoint(path);
    training::verify_tokenizers(t.checkpoint, tokenizers);
    t.report.strategy = strategy.describe();
    t.report.best_epoch = t.checkpoint.epoch;
    t.report.best_validation_loss = t.checkpoint.validation_loss;
    return t;
  }
  if (progress) progress("training " + dir.string());
  auto result = training::run_strategy(strategy, data, tokenizers, config, base);
  write_text(dir / "train_report.txt", result.report.table());
  write_text(dir / "train_report.kv", result.report.key_values());
  char timing[64];
  std::snprintf(timing, sizeof timing, "wall_seconds=%.3f\n", result.report.wall_seconds);
  write_text(dir / "timing.txt", timing);
  training::save_checkpoint(result.checkpoint, path);
  return {std::move(result.checkpoint), std::move(result.report)};
}

eval::BleuReport evaluate_into(decoding::Translator& translator, const corpus::Corpus& dev,
                               bool smooth, const fs::path& dir, const std::string& name) {
  const auto run = eval::evaluate_run(translator, dev, smooth);
  write_text(dir / (name + ".log"), run.log);
  write_text(dir / (name + ".bleu"), eval::format_bleu(run.bleu) + "\n");
  return run.bleu;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config, const ExperimentData& data,
                                const fs::path& out, const Progress& progress) {
  require(!config.families.empty(), "experiment needs at least one model family");
  require(!config.domains.empty(), "experiment needs at least one domain");
  fs::create_directories(out);
  config.echo(out);

  const auto tok_dir = out / "tokenizers";
  training::TokenizerPair tokenizers;
  if (fs::exists(tok_dir / "source.model") && fs::exists(tok_dir / "target.model")) {
    tokenizers = load_tokenizers(tok_dir);
  } else {
    if (progress) progress("training tokenizers");
    std::vector<const corpus::Corpus*> all = {&data.general_train};
    for (const auto& [domain, c] : data.domain_train) all.push_back(&c);
    tokenizers = train_tokenizers(all, config);
    save_tokenizers(tokenizers, tok_dir);
  }

  const auto decode = config.decode_config();
  ExperimentResult result;
  std::string forgetting = "model,domain,base_general_bleu,finetune_general_bleu\n";
  for (const auto& family_name : config.families) {
    const auto family = models::parse_family(family_name);
    const auto train_config = config.train_config(family);
    const auto family_dir = out / family_name;

    training::TrainingData general_data;
    general_data.general_train = data.general_train;
    general_data.general_dev = data.general_dev;
    const auto base_dir = family_dir / "general";
    const auto base = train_or_load(training::Strategy::general_only(), general_data, tokenizers,
                                    train_config, nullptr, base_dir, progress);
    decoding::Translator base_translator(base.checkpoint, tokenizers, decode);
    const auto base_general =
        evaluate_into(base_translator, data.general_dev, config.smooth, base_dir, "general.dev");

    for (const auto& domain : config.domains) {
      training::TrainingData td = general_data;
      td.domain_train = data.domain_train.at(domain);
      td.domain_dev = data.domain_dev.at(domain);
      const auto& dev = td.domain_dev;

      CellOutcome general_cell{family_name, "general", domain, {}, base_general, base.report};
      general_cell.domain_dev =
          evaluate_into(base_translator, dev, config.smooth, base_dir, domain + ".dev");
      result.cells.push_back(general_cell);

      const auto domain_dir = family_dir / domain;
      const auto mixed = train_or_load(training::Strategy::mixed(config.factor), td, tokenizers,
                                       train_config, nullptr, domain_dir / "mixed", progress);
      decoding::Translator mixed_translator(mixed.checkpoint, tokenizers, decode);
      CellOutcome mixed_cell{family_name, "mixed", domain, {}, {}, mixed.report};
      mixed_cell.domain_dev = evaluate_into(mixed_translator, dev, config.smooth,
                                            domain_dir / "mixed", domain + ".dev");
      mixed_cell.general_dev = evaluate_into(mixed_translator, data.general_dev, config.smooth,
                                             domain_dir / "mixed", "general.dev");
      result.cells.push_back(mixed_cell);

      const auto tuned = train_or_load(training::Strategy::fine_tune("", config.finetune_epochs),
                                       td, tokenizers, train_config, &base.checkpoint,
                                       domain_dir / "finetune", progress);
      decoding::Translator tuned_translator(tuned.checkpoint, tokenizers, decode);
      CellOutcome tuned_cell{family_name, "finetune", domain, {}, {}, tuned.report};
      tuned_cell.domain_dev = evaluate_into(tuned_translator, dev, config.smooth,
                                            domain_dir / "finetune", domain + ".dev");
      tuned_cell.general_dev = evaluate_into(tuned_translator, data.general_dev, config.smooth,
                                             domain_dir / "finetune", "general.dev");
      result.cells.push_back(tuned_cell);

      char line[160];
      std::snprintf(line, sizeof line, "%s,%s,%.2f,%.2f\n", family_name.c_str(), domain.c_str(),
                    base_general.bleu, tuned_cell.general_dev.bleu);
      forgetting += line;
    }
  }

  for (const auto& cell : result.cells) {
    result.rows.push_back({cell.family, cell.strategy, cell.domain, "dev", cell.domain_dev});
  }
  write_text(out / "matrix.csv", eval::matrix_csv(result.rows));
  write_text(out / "matrix.txt", eval::matrix_table(result.rows));
  write_text(out / "forgetting.csv", forgetting);
  return result;
}

}  // namespace nmt::app
