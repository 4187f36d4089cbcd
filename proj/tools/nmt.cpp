#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "nmt/app.hpp"
#include "nmt/error.hpp"

namespace fs = std::filesystem;
using namespace nmt;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitInternal = 1;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kContract: return kExitUsage;
    case ErrorKind::kNumeric: return kExitNumeric;
    case ErrorKind::kInternal: return kExitInternal;
    default: return kExitData;
  }
}

struct ConfigOptions {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "Config file of `key = value` lines under [section] headers")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override one config key, e.g. --set train.max_epochs=4");
  }

  app::RunConfig load() const {
    app::RunConfig c;
    if (!file.empty()) c.load_file(file);
    for (const auto& o : overrides) c.apply_override(o);
    return c;
  }
};

void say(const std::string& line) { std::cout << line << std::endl; }

// preprocess -------------------------------------------------------------

struct PreprocessArgs {
  std::string src, tgt, out, domain = std::string(corpus::kGeneralDomain);
  std::size_t max_words = 20;
};

int cmd_preprocess(const PreprocessArgs& a) {
  corpus::Corpus raw;
  {
    const auto src = app::read_text(a.src);
    const auto tgt = app::read_text(a.tgt);
    auto lines = [](const std::string& text) {
      std::vector<std::string> out;
      std::size_t start = 0;
      while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(std::move(line));
        start = end + 1;
      }
      return out;
    };
    const auto s = lines(src);
    const auto t = lines(tgt);
    if (s.size() != t.size()) {
      fail(ErrorKind::kData, a.src + " has " + std::to_string(s.size()) + " lines but " + a.tgt +
                                 " has " + std::to_string(t.size()));
    }
    for (std::size_t i = 0; i < s.size(); ++i) raw.pairs.push_back({s[i], t[i], a.domain});
  }
  const auto normalized = corpus::normalize_corpus(raw);
  const auto filtered = corpus::filter_by_length(normalized.corpus, a.max_words);
  corpus::save_corpus(filtered.corpus, a.out);
  const std::vector<std::pair<std::string, corpus::CorpusStats>> rows = {
      {"raw", corpus::corpus_stats(raw)},
      {"normalized", corpus::corpus_stats(normalized.corpus)},
      {"filtered", corpus::corpus_stats(filtered.corpus)}};
  const auto table = corpus::stats_table(rows);
  std::string kv;
  for (const auto& [name, stats] : rows) kv += corpus::stats_key_values(name, stats);
  app::write_text(a.out + ".stats.txt", table);
  app::write_text(a.out + ".stats.kv", kv);
  std::cout << table;
  say("dropped " + std::to_string(normalized.dropped) + " empty and " +
      std::to_string(filtered.dropped) + " long pairs; wrote " + a.out + ".src/.tgt");
  return 0;
}

// tokenizer-train --------------------------------------------------------

struct TokenizerArgs {
  std::vector<std::string> corpora;
  std::size_t vocab_size = 0;
  std::string out;
  ConfigOptions config;
};

int cmd_tokenizer_train(const TokenizerArgs& a) {
  auto cfg = a.config.load();
  if (a.vocab_size > 0) cfg.source_vocab = cfg.target_vocab = a.vocab_size;
  std::vector<corpus::Corpus> loaded;
  for (const auto& prefix : a.corpora) {
    loaded.push_back(corpus::normalize_corpus(
                         corpus::load_corpus(prefix, std::string(corpus::kGeneralDomain),
                                             corpus::Split::kTrain))
                         .corpus);
  }
  std::vector<const corpus::Corpus*> ptrs;
  for (const auto& c : loaded) ptrs.push_back(&c);
  const auto toks = app::train_tokenizers(ptrs, cfg);
  app::save_tokenizers(toks, a.out);
  cfg.echo(a.out);
  say("source: " + std::to_string(toks.source.piece_count()) + " pieces, fingerprint " +
      toks.source.fingerprint());
  say("target: " + std::to_string(toks.target.piece_count()) + " pieces, fingerprint " +
      toks.target.fingerprint());
  return 0;
}

// train ------------------------------------------------------------------

struct TrainArgs {
  std::string model = "lstm", strategy = "general", general, domain, base_checkpoint, tokenizers,
              out;
  unsigned factor = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  ConfigOptions config;
};

int cmd_train(const TrainArgs& a) {
  const auto kind = training::parse_strategy(a.strategy);
  if (kind == training::StrategyKind::kFineTune && a.base_checkpoint.empty()) {
    fail(ErrorKind::kContract, "--strategy finetune needs --base-checkpoint");
  }
  if (kind != training::StrategyKind::kGeneralOnly && a.domain.empty()) {
    fail(ErrorKind::kContract, "--strategy " + a.strategy + " needs --domain");
  }
  if (kind != training::StrategyKind::kFineTune && a.general.empty()) {
    fail(ErrorKind::kContract, "--strategy " + a.strategy + " needs --general");
  }
  auto cfg = a.config.load();
  if (a.factor > 0) cfg.factor = a.factor;
  if (a.seed_given) cfg.seed = a.seed;
  const auto family = models::parse_family(a.model);

  training::TrainingData data;
  if (!a.general.empty()) {
    data.general_train = app::load_clean(a.general, std::string(corpus::kGeneralDomain),
                                         corpus::Split::kTrain, cfg.max_words);
    data.general_dev = app::load_clean(a.general, std::string(corpus::kGeneralDomain),
                                       corpus::Split::kDev, cfg.max_words);
  }
  if (!a.domain.empty()) {
    const auto name = fs::path(a.domain).filename().string();
    data.domain_train = app::load_clean(a.domain, name, corpus::Split::kTrain, cfg.max_words);
    data.domain_dev = app::load_clean(a.domain, name, corpus::Split::kDev, cfg.max_words);
  }

  training::TokenizerPair toks;
  if (!a.tokenizers.empty()) {
    toks = app::load_tokenizers(a.tokenizers);
  } else {
    if (kind == training::StrategyKind::kFineTune) {
      fail(ErrorKind::kContract, "--strategy finetune needs the base model's --tokenizers");
    }
    toks = app::train_tokenizers({&data.general_train, &data.domain_train}, cfg);
    app::save_tokenizers(toks, fs::path(a.out) / "tokenizers");
  }

  training::Strategy strategy;
  switch (kind) {
    case training::StrategyKind::kGeneralOnly: strategy = training::Strategy::general_only(); break;
    case training::StrategyKind::kMixed: strategy = training::Strategy::mixed(cfg.factor); break;
    case training::StrategyKind::kFineTune:
      strategy = training::Strategy::fine_tune(a.base_checkpoint, cfg.finetune_epochs);
      break;
  }
  const auto result = training::run_strategy(strategy, data, toks, cfg.train_config(family));
  const fs::path out = a.out;
  cfg.echo(out);
  training::save_checkpoint(result.checkpoint, out / "model.nmtc");
  app::write_text(out / "train_report.txt", result.report.table());
  app::write_text(out / "train_report.kv", result.report.key_values());
  char timing[64];
  std::snprintf(timing, sizeof timing, "wall_seconds=%.3f\n", result.report.wall_seconds);
  app::write_text(out / "timing.txt", timing);
  std::cout << result.report.table();
  say("wrote " + (out / "model.nmtc").string());
  return 0;
}

// translate --------------------------------------------------------------

struct TranslateArgs {
  std::string checkpoint, tokenizers, input, output;
  std::size_t threshold = 0;
  ConfigOptions config;
};

int cmd_translate(const TranslateArgs& a) {
  auto cfg = a.config.load();
  if (a.threshold > 0) cfg.comma_split_threshold = a.threshold;
  const auto ckpt = training::load_checkpoint(a.checkpoint);
  decoding::Translator translator(ckpt, app::load_tokenizers(a.tokenizers), cfg.decode_config());
  const auto n = decoding::translate_file(translator, a.input, a.output);
  say("translated " + std::to_string(n) + " lines with " +
      std::to_string(translator.decode_calls()) + " decoder runs into " + a.output);
  return 0;
}

// evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string hyp, ref, checkpoint, tokenizers, dev, out;
  bool smooth = false;
  ConfigOptions config;
};

std::vector<std::string> read_lines(const std::string& path) {
  const auto text = app::read_text(path);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

int cmd_evaluate(const EvaluateArgs& a) {
  auto cfg = a.config.load();
  const bool smooth = a.smooth || cfg.smooth;
  eval::BleuReport report;
  std::string log;
  if (!a.hyp.empty() || !a.ref.empty()) {
    if (a.hyp.empty() || a.ref.empty()) fail(ErrorKind::kContract, "--hyp and --ref go together");
    const auto hyps = read_lines(a.hyp);
    const auto refs = read_lines(a.ref);
    if (hyps.size() != refs.size()) {
      fail(ErrorKind::kData, a.hyp + " has " + std::to_string(hyps.size()) + " lines but " +
                                 a.ref + " has " + std::to_string(refs.size()));
    }
    report = eval::corpus_bleu(hyps, refs, smooth);
  } else {
    if (a.checkpoint.empty() || a.tokenizers.empty() || a.dev.empty()) {
      fail(ErrorKind::kContract, "give --hyp/--ref or --checkpoint, --tokenizers and --dev");
    }
    const auto ckpt = training::load_checkpoint(a.checkpoint);
    decoding::Translator translator(ckpt, app::load_tokenizers(a.tokenizers), cfg.decode_config());
    const auto dev = corpus::normalize_corpus(
                         corpus::load_corpus(a.dev, std::string(corpus::kGeneralDomain),
                                             corpus::Split::kDev))
                         .corpus;
    const auto run = eval::evaluate_run(translator, dev, smooth);
    report = run.bleu;
    log = run.log;
  }
  const auto line = eval::format_bleu(report);
  say(line);
  if (!a.out.empty()) {
    app::write_text(a.out, line + "\n");
    if (!log.empty()) app::write_text(a.out + ".log", log);
  }
  return 0;
}

// coverage ---------------------------------------------------------------

struct CoverageArgs {
  std::string reference, probe, out;
};

int cmd_coverage(const CoverageArgs& a) {
  auto load = [](const std::string& prefix) {
    return corpus::normalize_corpus(corpus::load_corpus(prefix, std::string(corpus::kGeneralDomain),
                                                        corpus::Split::kTrain))
        .corpus;
  };
  const auto reference = load(a.reference);
  const auto probe = load(a.probe);
  const auto src = corpus::token_coverage(reference, probe, corpus::Side::kSource);
  const auto tgt = corpus::token_coverage(reference, probe, corpus::Side::kTarget);
  const auto table = corpus::coverage_table(src, tgt);
  std::cout << table;
  if (!a.out.empty()) {
    app::write_text(a.out, table);
    app::write_text(a.out + ".kv", corpus::coverage_key_values(src, tgt));
  }
  return 0;
}

// experiment -------------------------------------------------------------

struct ExperimentArgs {
  std::string out = "runs/experiment";
  ConfigOptions config;
};

int cmd_experiment(const ExperimentArgs& a) {
  const auto cfg = a.config.load();
  const auto data = app::load_experiment_data(cfg);
  const auto result = app::run_experiment(cfg, data, a.out, say);
  std::cout << eval::matrix_table(result.rows);
  say("wrote " + (fs::path(a.out) / "matrix.csv").string());
  return 0;
}

// make-toy-data ----------------------------------------------------------

struct ToyArgs {
  std::string out = "data/toy";
  app::ToyOptions options;
};

int cmd_make_toy_data(const ToyArgs& a) {
  app::write_toy_data(a.out, a.options);
  say("wrote toy corpora for general, ai and chemistry under " + a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Neural machine translation toolkit with domain adaptation"};
  cli.require_subcommand(1);
  std::function<int()> action;

  PreprocessArgs pre;
  auto* p = cli.add_subcommand("preprocess", "Normalize and length-filter a parallel corpus");
  p->add_option("--src", pre.src, "Source-side file")->required()->check(CLI::ExistingFile);
  p->add_option("--tgt", pre.tgt, "Target-side file")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pre.out, "Output prefix; writes <out>.src, <out>.tgt and stats")->required();
  p->add_option("--max-words", pre.max_words, "Drop pairs longer than this on either side")
      ->capture_default_str();
  p->add_option("--domain", pre.domain, "Domain label")->capture_default_str();
  p->callback([&] { action = [&] { return cmd_preprocess(pre); }; });

  TokenizerArgs tok;
  auto* t = cli.add_subcommand("tokenizer-train", "Train one unigram tokenizer per side");
  t->add_option("--corpus", tok.corpora, "Corpus prefix with .src and .tgt files (repeatable)")
      ->required();
  t->add_option("--vocab-size", tok.vocab_size, "Pieces per side (overrides the config)");
  t->add_option("--out", tok.out, "Output directory for source.model and target.model")->required();
  tok.config.attach(t);
  t->callback([&] { action = [&] { return cmd_tokenizer_train(tok); }; });

  TrainArgs tr;
  auto* r = cli.add_subcommand("train", "Train a model under one adaptation strategy");
  r->add_option("--model", tr.model, "lstm or transformer")
      ->check(CLI::IsMember({"lstm", "transformer"}))
      ->capture_default_str();
  r->add_option("--strategy", tr.strategy, "general, mixed or finetune")
      ->check(CLI::IsMember({"general", "mixed", "finetune"}))
      ->capture_default_str();
  r->add_option("--general", tr.general, "General corpus stem (<stem>.train/.dev)");
  r->add_option("--domain", tr.domain, "In-domain corpus stem (<stem>.train/.dev)");
  r->add_option("--factor", tr.factor, "In-domain oversampling factor for mixed");
  r->add_option("--base-checkpoint", tr.base_checkpoint, "Checkpoint to fine-tune");
  r->add_option("--tokenizers", tr.tokenizers, "Directory with source.model and target.model");
  auto* seed_opt = r->add_option("--seed", tr.seed, "Random seed");
  r->add_option("--out", tr.out, "Output directory")->required();
  tr.config.attach(r);
  r->callback([&] {
    tr.seed_given = seed_opt->count() > 0;
    action = [&] { return cmd_train(tr); };
  });

  TranslateArgs tl;
  auto* l = cli.add_subcommand("translate", "Translate a file, one sentence per line");
  l->add_option("--checkpoint", tl.checkpoint, "Model checkpoint")->required();
  l->add_option("--tokenizers", tl.tokenizers, "Tokenizer directory")->required();
  l->add_option("--input", tl.input, "Source sentences")->required()->check(CLI::ExistingFile);
  l->add_option("--output", tl.output, "Translations")->required();
  l->add_option("--comma-split-threshold", tl.threshold,
                "Split sentences longer than this many words at commas");
  tl.config.attach(l);
  l->callback([&] { action = [&] { return cmd_translate(tl); }; });

  EvaluateArgs ev;
  auto* e = cli.add_subcommand("evaluate", "Corpus BLEU of translations against references");
  e->add_option("--hyp", ev.hyp, "Hypothesis file");
  e->add_option("--ref", ev.ref, "Reference file");
  e->add_option("--checkpoint", ev.checkpoint, "Translate --dev with this checkpoint instead");
  e->add_option("--tokenizers", ev.tokenizers, "Tokenizer directory for --checkpoint");
  e->add_option("--dev", ev.dev, "Dev corpus prefix with .src and .tgt files");
  e->add_option("--out", ev.out, "Also write the report to this file");
  e->add_flag("--smooth", ev.smooth, "Add-one smoothing for n >= 2 (not canonical BLEU)");
  ev.config.attach(e);
  e->callback([&] { action = [&] { return cmd_evaluate(ev); }; });

  CoverageArgs cv;
  auto* c = cli.add_subcommand("coverage", "Word coverage of a probe corpus by a reference corpus");
  c->add_option("--reference", cv.reference, "Reference corpus prefix")->required();
  c->add_option("--probe", cv.probe, "Probe corpus prefix")->required();
  c->add_option("--out", cv.out, "Also write the report to this file");
  c->callback([&] { action = [&] { return cmd_coverage(cv); }; });

  ExperimentArgs ex;
  auto* x = cli.add_subcommand("experiment",
                               "Run every model family and strategy for every domain");
  x->add_option("--out", ex.out, "Output directory")->capture_default_str();
  ex.config.attach(x);
  x->callback([&] { action = [&] { return cmd_experiment(ex); }; });

  ToyArgs toy;
  auto* m = cli.add_subcommand("make-toy-data", "Write the synthetic bilingual corpora");
  m->add_option("--out", toy.out, "Output directory")->capture_default_str();
  m->add_option("--seed", toy.options.seed, "Generator seed")->capture_default_str();
  m->callback([&] { action = [&] { return cmd_make_toy_data(toy); }; });

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = cli.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }
  try {
    return action();
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInternal;
  }
}
