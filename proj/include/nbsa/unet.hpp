#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nbsa/adam.hpp"
#include "nbsa/attention.hpp"
#include "nbsa/label_mask.hpp"
#include "nbsa/ops.hpp"

namespace nbsa {

// Two-stage encoder/decoder:
//   enc1 3×3 (1→F) ── pool ── enc2 3×3 (F→2F) ── pool
//   up ── [·,enc2] ── dec1 3×3 (4F→2F) ── up ── [·,enc1] ── dec2 3×3 (3F→F)
//   [attention when placement=penultimate] ── head 1×1 (F→K)
//   [attention when placement=last, on the K logits]
// Every conv carries a learnable per-channel bias and ReLU (the head has
// bias, no ReLU).
struct TinyUnetConfig {
  int in_channels = 1;
  int classes = 5;
  int base_channels = 8;
  int height = 64;
  int width = 64;
  AttentionConfig attn;
};

struct ConvParams {
  Tensor w;
  Tensor b;
};

struct TinyUnet {
  TinyUnetConfig config;
  ConvParams enc1, enc2, dec1, dec2, head;
  std::vector<AttentionWeights> attn_layers;
  BlockSchedule schedule;  // valid when attn.variant == nbsa

  std::vector<Tensor> params() const;
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  int64_t param_count() const;
};

// Closed-form parameter count for a config (convs + attention projections).
int64_t tiny_unet_param_count(const TinyUnetConfig& config);

// Deterministic Kaiming fan-in initialization from the seed. Validates the
// block tiling at the attention insertion resolution.
TinyUnet build_tiny_unet(const TinyUnetConfig& config, std::uint64_t seed);

// image: [Cin×H×W] → logits [K×H×W]. H, W must be divisible by 4.
Tensor unet_forward(const TinyUnet& model, const Tensor& image);

// Per-pixel argmax of the logits; ties resolve to the lower class index.
LabelMask predict_mask(const TinyUnet& model, const Tensor& image);
LabelMask argmax_mask(const Tensor& logits);

// Features entering the attention stack at the configured placement
// (decoder output for penultimate, head logits for last).
Tensor unet_attention_input(const TinyUnet& model, const Tensor& image);

struct TrainSample {
  Tensor image;
  LabelMask mask;
};

struct TrainConfig {
  double lr = 2e-4;
  int epochs = 20;
  int batch_size = 1;
  std::uint64_t seed = 42;  // drives the per-epoch sample order
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

TrainResult train(TinyUnet& model, const std::vector<TrainSample>& data, const TrainConfig& config);

// Checkpoint: "NBSAUNET v1" header, config echo, then a length-prefixed name
// table interleaved with ".tns" parameter payloads.
void save_checkpoint(const TinyUnet& model, const std::string& path);
TinyUnet load_checkpoint(const std::string& path);

}  // namespace nbsa
