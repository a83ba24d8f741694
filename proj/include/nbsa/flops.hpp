#pragma once

#include <cstdint>

#include "nbsa/attention.hpp"

namespace nbsa {

// Multiply-add ledger for one attention configuration, all layers included.
// Counting convention (documented per stage, N = H·W, L = block length):
//   projections:       3·N·C·d          once per layer (Q, K, V over the map)
//   logits:            blocks·L²·d      per layer (QKᵀ inside each block)
//   softmax:           blocks·L²        per layer (one op per matrix entry;
//                                       the exp and its normalizing divide
//                                       count as a single fused op)
//   weighting:         blocks·L²·d      per layer (A·V inside each block)
//   output_projection: N·d·C            once per layer
//   residual:          N·C              once per layer
// Full self-attention substitutes N² for blocks·L².
struct FlopLedger {
  std::uint64_t projections = 0;
  std::uint64_t logits = 0;
  std::uint64_t softmax = 0;
  std::uint64_t weighting = 0;
  std::uint64_t output_projection = 0;
  std::uint64_t residual = 0;
  std::uint64_t total = 0;

  std::uint64_t blocks = 0;  // per layer; 1 for full SA, 0 for variant none
  std::uint64_t layers = 0;

  std::uint64_t stage_sum() const {
    return projections + logits + softmax + weighting + output_projection + residual;
  }
};

// Counts without running anything. Throws on configs that cannot tile.
FlopLedger count_flops(const AttentionConfig& config, int c, int d, int h, int w);

// Analytic criss-cross count for comparison: the same stage conventions with
// each pixel attending to its row and column (span H+W−1).
std::uint64_t cca_total(int c, int d, int h, int w, int layers);

}  // namespace nbsa
