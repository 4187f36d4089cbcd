#include <chrono>
#include <cstdio>
#include <limits>

#include "nmt/error.hpp"
#include "nmt/training.hpp"

namespace nmt::training {

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kGeneralOnly: return "general";
    case StrategyKind::kMixed: return "mixed";
    case StrategyKind::kFineTune: return "finetune";
  }
  return "?";
}

StrategyKind parse_strategy(std::string_view name) {
  if (name == "general") return StrategyKind::kGeneralOnly;
  if (name == "mixed") return StrategyKind::kMixed;
  if (name == "finetune") return StrategyKind::kFineTune;
  fail(ErrorKind::kContract, "unknown strategy '" + std::string(name) +
                                 "' (expected general, mixed or finetune)");
}

std::string Strategy::describe() const {
  switch (kind) {
    case StrategyKind::kGeneralOnly: return "general";
    case StrategyKind::kMixed: return "mixed(factor=" + std::to_string(factor) + ")";
    case StrategyKind::kFineTune:
      return "finetune(epochs=" + std::to_string(finetune_epochs) + ")";
  }
  return "?";
}

std::size_t best_epoch(const std::vector<EpochRecord>& epochs) {
  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (const auto& e : epochs) {
    if (e.validation_loss < best_loss) {
      best_loss = e.validation_loss;
      best = e.epoch;
    }
  }
  return best;
}

std::string TrainReport::table() const {
  std::string out = "strategy: " + strategy + "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %12s %12s\n", "epoch", "train_loss", "val_loss");
  out += line;
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%-6zu %12.5f %12.5f%s\n", e.epoch, e.train_loss,
                  e.validation_loss, e.epoch == best_epoch ? "  *" : "");
    out += line;
  }
  std::snprintf(line, sizeof line, "best epoch %zu, val_loss %.5f, %zu train pairs (%zu dropped)\n",
                best_epoch, best_validation_loss, train_pairs, dropped_pairs);
  out += line;
  return out;
}

std::string TrainReport::key_values() const {
  std::string out;
  char line[160];
  out += "strategy=" + strategy + "\n";
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "epoch.%zu.train_loss=%.9g\nepoch.%zu.val_loss=%.9g\n",
                  e.epoch, e.train_loss, e.epoch, e.validation_loss);
    out += line;
  }
  std::snprintf(line, sizeof line,
                "best_epoch=%zu\nbest_val_loss=%.9g\ntrain_pairs=%zu\ndropped_pairs=%zu\n",
                best_epoch, best_validation_loss, train_pairs, dropped_pairs);
  out += line;
  return out;
}

namespace {

std::size_t max_positions(const models::ModelConfig& config) {
  return config.family == models::Family::kTransformer ? config.transformer.max_positions
                                                       : std::numeric_limits<std::size_t>::max();
}

corpus::Corpus empty_train() {
  corpus::Corpus c;
  c.split = corpus::Split::kTrain;
  return c;
}

}  // namespace

StrategyResult run_strategy(const Strategy& strategy, const TrainingData& data,
                            const TokenizerPair& tokenizers, const TrainConfig& config,
                            const Checkpoint* base) {
  const auto start = std::chrono::steady_clock::now();
  TrainConfig cfg = config;
  cfg.model.set_vocab(tokenizers.source.vocab_size(), tokenizers.target.vocab_size());
  cfg.validate();

  StrategyResult result;
  result.report.strategy = strategy.describe();

  corpus::Corpus train;
  const corpus::Corpus* dev = &data.domain_dev;
  std::size_t epochs = cfg.max_epochs;
  double lr = cfg.effective_learning_rate();
  auto model = models::make_model<float>(cfg.model, derive_seed(cfg.seed, 0));

  switch (strategy.kind) {
    case StrategyKind::kGeneralOnly:
      train = corpus::mix_corpora(data.general_train, empty_train(), 1, derive_seed(cfg.seed, 1));
      dev = &data.general_dev;
      break;
    case StrategyKind::kMixed:
      require(strategy.factor >= 1, "mixed strategy needs an oversampling factor >= 1");
      train = corpus::mix_corpora(data.general_train, data.domain_train, strategy.factor,
                                  derive_seed(cfg.seed, 1));
      break;
    case StrategyKind::kFineTune: {
      Checkpoint loaded;
      if (base == nullptr) {
        require(!strategy.base_checkpoint.empty(), "fine-tuning needs a base checkpoint");
        loaded = load_checkpoint(strategy.base_checkpoint);
        base = &loaded;
      }
      verify_tokenizers(*base, tokenizers);
      if (strategy.finetune_epochs == 0) {
        result.checkpoint = *base;
        result.report.wall_seconds = 0.0;
        return result;
      }
      restore(*base, *model);
      train = data.domain_train;
      epochs = strategy.finetune_epochs;
      lr *= cfg.finetune_lr_scale;
      break;
    }
  }

  const auto limit = max_positions(cfg.model);
  const auto encoded = encode_corpus(train, tokenizers, limit);
  const auto dev_encoded = encode_corpus(*dev, tokenizers, limit);
  if (encoded.pairs.empty()) fail(ErrorKind::kDegenerate, "no usable training pairs");
  if (dev_encoded.pairs.empty()) fail(ErrorKind::kDegenerate, "no usable validation pairs");
  result.report.train_pairs = encoded.pairs.size();
  result.report.dropped_pairs = encoded.dropped;
  const auto dev_batches = make_batches(dev_encoded, cfg.batch_size, std::nullopt);

  ad::Adam<float> optimizer(model->parameters(), ad::AdamOptions{lr, 0.9, 0.999, 1e-8});
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t e = 1; e <= epochs; ++e) {
    const auto batches = make_batches(encoded, cfg.batch_size, derive_seed(cfg.seed, 100 + e));
    EpochRecord record{e, 0.0, 0.0};
    record.train_loss = train_epoch(*model, batches, optimizer, cfg.clip_norm, dropout_rng);
    record.validation_loss = evaluate_loss(*model, dev_batches);
    result.report.epochs.push_back(record);
    if (record.validation_loss < best_loss) {
      best_loss = record.validation_loss;
      result.checkpoint = capture(*model, tokenizers);
      result.checkpoint.epoch = e;
      result.checkpoint.validation_loss = record.validation_loss;
      result.checkpoint.seed = cfg.seed;
      result.checkpoint.strategy = strategy.describe();
    }
  }
  result.report.best_epoch = best_epoch(result.report.epochs);
  result.report.best_validation_loss = best_loss;
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace nmt::training
