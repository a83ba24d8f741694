#pragma once

#include <utility>
#include <vector>

#include "nbsa/ops.hpp"
#include "nbsa/rng.hpp"
#include "nbsa/tensor.hpp"

namespace nbsa {

enum class AttnVariant { none, full_sa, nbsa };
enum class AttnPlacement { penultimate, last };

struct AttentionConfig {
  AttnVariant variant = AttnVariant::nbsa;
  int n_layers = 2;
  int block = 8;
  int stride = 0;  // 0 → derived from the overlap flag
  bool overlap = true;
  bool relative = false;
  AttnPlacement placement = AttnPlacement::penultimate;
  int channels = 0;  // attention width d; 0 → max(1, C/2)
  bool avg_aggregate = false;

  // overlap → round(2B/3), otherwise B; explicit stride wins.
  int resolved_stride() const;
  int resolved_channels(int input_channels) const;
  void validate() const;
};

// Learnable projections of one attention layer. w_theta/w_phi/w_g map the C
// input channels to d attention channels; w_out maps back so the residual
// typechecks. e_rel, when present, holds one relative-position embedding per
// offset of the flattened block sequence: rows −(L−1)..(L−1) for L positions.
struct AttentionWeights {
  Tensor w_theta;  // d×C
  Tensor w_phi;    // d×C
  Tensor w_g;      // d×C
  Tensor w_out;    // C×d
  Tensor e_rel;    // (2L−1)×d, undefined unless relative mode

  int d() const { return w_theta.dim(0); }
  int c() const { return w_theta.dim(1); }
  bool relative() const { return e_rel.defined(); }
  std::vector<Tensor> params() const;
  int64_t param_count() const;
};

// block_len > 0 enables relative embeddings over that flattened block length.
AttentionWeights make_attention_weights(int c, int d, int block_len, Rng& rng);

// Raster-scan placement of (possibly overlapping) memory blocks. Blocks are
// clamped per axis to min(B, H) × min(B, W) so strip-shaped maps are legal;
// the tiling must be exact along both axes.
struct BlockSchedule {
  int h = 0, w = 0;
  int block = 0, stride = 0;
  int bh = 0, bw = 0;  // effective block sides after clamping
  std::vector<std::pair<int, int>> origins;      // raster order (row-major)
  std::vector<std::vector<int>> block_pixels;    // per origin, row-major pixel ids
  std::vector<int> membership;                   // P(j): enclosing blocks per pixel

  int n_blocks() const { return static_cast<int>(origins.size()); }
  int block_len() const { return bh * bw; }
};

BlockSchedule enumerate_blocks(int h, int w, int block, int stride);

struct NbsaOptions {
  bool average = false;            // divide each pixel's sum by P(j)
  bool reverse_aggregate = false;  // accumulate block contributions in reverse raster order
  bool parallel = false;           // forward-only: per-block compute fans out, reduction stays raster
};

// Eqs. of the attention block: out = x + W_out·(softmax(QKᵀ/√d)·V), computed
// over all N = H·W positions. x: [C×H×W].
Tensor full_self_attention(const Tensor& x, const AttentionWeights& w);

// Same attention restricted to each memory block, contributions summed over
// every block enclosing a pixel, then the residual wrapper as above.
Tensor nbsa_layer(const Tensor& x, const AttentionWeights& w, const BlockSchedule& sched,
                  const NbsaOptions& opt = {});

// Two stacked layers with independent weights; the second pass propagates
// context against the raster direction.
Tensor nested_nbsa(const Tensor& x, const AttentionWeights& w1, const AttentionWeights& w2,
                   const BlockSchedule& sched, const NbsaOptions& opt = {});

Tensor nbsa_stack(const Tensor& x, const std::vector<AttentionWeights>& layers,
                  const BlockSchedule& sched, const NbsaOptions& opt = {});

// rel[i][j] = q[i]·e[j−i+L−1] via the pad/flatten/reslice realignment of
// Q·Eᵀ (no per-element gather). q: [L×d], e: [(2L−1)×d].
Tensor relative_logits_skew(const Tensor& q, const Tensor& e);

// Direct double-loop gather of the same quantity; the oracle form.
Tensor relative_logits_naive(const Tensor& q, const Tensor& e);

// Attention received from the query pixel by every map position, aggregated
// over the blocks enclosing the query. Returns H·W weights (unnormalized).
std::vector<double> export_attention_map(const Tensor& x, const AttentionWeights& w,
                                         const BlockSchedule& sched, int query_row, int query_col);

// Min-max rescale to 0..255 (constant input maps to 0).
std::vector<unsigned char> normalize_to_bytes(const std::vector<double>& values);

}  // namespace nbsa
