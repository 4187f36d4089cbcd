#include <cmath>
#include <limits>
#include <numeric>

#include "nmt/error.hpp"
#include "nmt/training.hpp"

namespace nmt::training {

using models::TokenBatch;

double default_learning_rate(models::Family) { return 3e-3; }

double TrainConfig::effective_learning_rate() const {
  return learning_rate > 0.0 ? learning_rate : default_learning_rate(model.family);
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch size must be at least 1");
  require(max_epochs >= 1, "max epochs must be at least 1");
  require(learning_rate >= 0.0, "learning rate must be non-negative");
  require(finetune_lr_scale > 0.0, "fine-tune learning-rate scale must be positive");
  require(clip_norm > 0.0, "clip norm must be positive");
  model.validate();
}

EncodedCorpus encode_corpus(const corpus::Corpus& corpus, const TokenizerPair& tokenizers,
                            std::size_t max_positions) {
  EncodedCorpus out;
  out.pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    EncodedPair e{subword::encode(tokenizers.source, p.source),
                  subword::encode(tokenizers.target, p.target)};
    if (e.source.empty() || e.source.size() > max_positions ||
        e.target.size() + 1 > max_positions) {
      ++out.dropped;
      continue;
    }
    out.pairs.push_back(std::move(e));
  }
  return out;
}

std::vector<TokenBatch> make_batches(const EncodedCorpus& corpus, std::size_t batch_size,
                                     std::optional<std::uint64_t> seed) {
  require(batch_size >= 1, "batch size must be at least 1");
  std::vector<std::size_t> order(corpus.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (seed) {
    Rng rng(*seed);
    rng.shuffle(std::span<std::size_t>(order));
  }
  std::vector<TokenBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<std::vector<int>> src, tgt;
    for (std::size_t i = start; i < end; ++i) {
      src.push_back(corpus.pairs[order[i]].source);
      tgt.push_back(corpus.pairs[order[i]].target);
    }
    batches.push_back(TokenBatch::from_rows(src, tgt));
  }
  return batches;
}

std::size_t count_pairs(const std::vector<TokenBatch>& batches) {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.batch;
  return n;
}

std::size_t target_tokens(const TokenBatch& batch) {
  std::size_t n = 0;
  for (int id : batch.tgt_out) n += id != subword::kPadId;
  return n;
}

double train_epoch(models::Seq2Seq<float>& model, const std::vector<TokenBatch>& batches,
                   ad::Adam<float>& optimizer, double clip_norm, Rng& dropout_rng) {
  require(!batches.empty(), "train_epoch: no batches");
  auto& params = model.parameters();
  double weighted = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    try {
      params.zero_grad();
      ad::Tape<float> tape;
      auto loss = models::sequence_loss(tape, model, batches[i], &dropout_rng);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) fail(ErrorKind::kNumeric, "loss is not finite");
      tape.backward(loss);
      const double norm = ad::clip_grad_norm(params, clip_norm);
      if (!std::isfinite(norm)) fail(ErrorKind::kNumeric, "gradient norm is not finite");
      optimizer.step(params);
      const std::size_t n = target_tokens(batches[i]);
      weighted += value * static_cast<double>(n);
      tokens += n;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
      fail(ErrorKind::kNumeric, "batch " + std::to_string(i) + ": " + e.what());
    }
  }
  return weighted / static_cast<double>(tokens);
}

double evaluate_loss(models::Seq2Seq<float>& model, const std::vector<TokenBatch>& batches) {
  require(!batches.empty(), "evaluate_loss: no batches");
  double weighted = 0.0;
  std::size_t tokens = 0;
  for (const auto& batch : batches) {
    ad::Tape<float> tape(false);
    const double value = models::sequence_loss(tape, model, batch, nullptr).value()[0];
    const std::size_t n = target_tokens(batch);
    weighted += value * static_cast<double>(n);
    tokens += n;
  }
  return weighted / static_cast<double>(tokens);
}

}  // namespace nmt::training
