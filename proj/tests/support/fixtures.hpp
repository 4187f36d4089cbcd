#pragma once

#include <vector>

#include "nmt/models.hpp"
#include "nmt/rng.hpp"

namespace nmt::testing {

// Tiny model sizes for finite-difference checks: vocab 20, width 8.
inline models::ModelConfig tiny_config(models::Family family) {
  models::ModelConfig c;
  c.family = family;
  c.set_vocab(20, 20);
  c.lstm.embed_dim = 8;
  c.lstm.hidden_dim = 8;
  c.lstm.dropout = 0.0;
  c.transformer.model_dim = 8;
  c.transformer.heads = 2;
  c.transformer.layers = 2;
  c.transformer.ff_dim = 16;
  c.transformer.max_positions = 32;
  c.transformer.dropout = 0.0;
  return c;
}

// Random non-special rows of length 1..max_len.
inline std::vector<std::vector<int>> random_rows(Rng& rng, std::size_t count, std::size_t max_len,
                                                 int vocab) {
  std::vector<std::vector<int>> rows(count);
  for (auto& r : rows) {
    const auto len = 1 + rng.below(max_len);
    for (std::size_t i = 0; i < len; ++i) r.push_back(4 + static_cast<int>(rng.below(vocab - 4)));
  }
  return rows;
}

}  // namespace nmt::testing
