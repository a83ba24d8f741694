#include "nbsa/flops.hpp"

namespace nbsa {

FlopLedger count_flops(const AttentionConfig& config, int c, int d, int h, int w) {
  FlopLedger ledger;
  if (config.variant == AttnVariant::none) return ledger;
  config.validate();
  const std::uint64_t n = static_cast<std::uint64_t>(h) * w;
  const std::uint64_t layers = static_cast<std::uint64_t>(config.n_layers);
  std::uint64_t blocks = 1;
  std::uint64_t pairs;  // attended (query, key) pairs per layer
  if (config.variant == AttnVariant::full_sa) {
    pairs = n * n;
  } else {
    BlockSchedule sched = enumerate_blocks(h, w, config.block, config.resolved_stride());
    blocks = static_cast<std::uint64_t>(sched.n_blocks());
    const std::uint64_t l = static_cast<std::uint64_t>(sched.block_len());
    pairs = blocks * l * l;
  }
  ledger.blocks = blocks;
  ledger.layers = layers;
  ledger.projections = layers * 3 * n * c * d;
  ledger.logits = layers * pairs * d;
  ledger.softmax = layers * pairs;
  ledger.weighting = layers * pairs * d;
  ledger.output_projection = layers * n * d * c;
  ledger.residual = layers * n * c;
  ledger.total = ledger.stage_sum();
  return ledger;
}

std::uint64_t cca_total(int c, int d, int h, int w, int layers) {
  const std::uint64_t n = static_cast<std::uint64_t>(h) * w;
  const std::uint64_t span = static_cast<std::uint64_t>(h) + w - 1;
  const std::uint64_t l = static_cast<std::uint64_t>(layers);
  return l * (3 * n * c * d + n * span * d + n * span + n * span * d + n * d * c + n * c);
}

}  // namespace nbsa
