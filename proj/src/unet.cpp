#include "nbsa/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "nbsa/rng.hpp"
#include "nbsa/tensor_io.hpp"

namespace nbsa {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

int insertion_channels(const TinyUnetConfig& cfg) {
  return cfg.attn.placement == AttnPlacement::penultimate ? cfg.base_channels : cfg.classes;
}

int64_t conv_count(int co, int ci, int k) { return static_cast<int64_t>(co) * ci * k * k + co; }

Tensor conv_block(const Tensor& x, const ConvParams& p) { return relu(conv2d(x, p.w, p.b)); }

}  // namespace

std::vector<Tensor> TinyUnet::params() const {
  std::vector<Tensor> ps;
  for (const auto& named : named_params()) ps.push_back(named.second);
  return ps;
}

std::vector<std::pair<std::string, Tensor>> TinyUnet::named_params() const {
  std::vector<std::pair<std::string, Tensor>> ps = {
      {"enc1.w", enc1.w}, {"enc1.b", enc1.b}, {"enc2.w", enc2.w}, {"enc2.b", enc2.b},
      {"dec1.w", dec1.w}, {"dec1.b", dec1.b}, {"dec2.w", dec2.w}, {"dec2.b", dec2.b},
      {"head.w", head.w}, {"head.b", head.b}};
  for (size_t i = 0; i < attn_layers.size(); ++i) {
    const std::string prefix = "attn" + std::to_string(i + 1) + ".";
    ps.emplace_back(prefix + "w_theta", attn_layers[i].w_theta);
    ps.emplace_back(prefix + "w_phi", attn_layers[i].w_phi);
    ps.emplace_back(prefix + "w_g", attn_layers[i].w_g);
    ps.emplace_back(prefix + "w_out", attn_layers[i].w_out);
    if (attn_layers[i].relative()) ps.emplace_back(prefix + "e_rel", attn_layers[i].e_rel);
  }
  return ps;
}

int64_t TinyUnet::param_count() const {
  int64_t n = 0;
  for (const auto& p : params()) n += p.size();
  return n;
}

int64_t tiny_unet_param_count(const TinyUnetConfig& cfg) {
  const int f = cfg.base_channels, k = cfg.classes, in = cfg.in_channels;
  int64_t n = conv_count(f, in, 3) + conv_count(2 * f, f, 3) + conv_count(2 * f, 4 * f, 3) +
              conv_count(f, 3 * f, 3) + conv_count(k, f, 1);
  if (cfg.attn.variant != AttnVariant::none) {
    const int c = insertion_channels(cfg);
    const int d = cfg.attn.resolved_channels(c);
    int64_t per_layer = 4LL * c * d;
    if (cfg.attn.variant == AttnVariant::nbsa && cfg.attn.relative) {
      const int bh = std::min(cfg.attn.block, cfg.height);
      const int bw = std::min(cfg.attn.block, cfg.width);
      per_layer += static_cast<int64_t>(2 * bh * bw - 1) * d;
    }
    n += cfg.attn.n_layers * per_layer;
  }
  return n;
}

TinyUnet build_tiny_unet(const TinyUnetConfig& cfg, std::uint64_t seed) {
  require(cfg.base_channels >= 1 && cfg.classes >= 2 && cfg.in_channels >= 1,
          "bad model dimensions");
  require(cfg.height % 4 == 0 && cfg.width % 4 == 0,
          "image sides must be divisible by 4 (two pooling stages), got " +
              std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  cfg.attn.validate();

  TinyUnet model;
  model.config = cfg;
  Rng rng = Rng(seed).fork(0x696E6974ULL);  // "init" stream
  auto conv_init = [&rng](int co, int ci, int k) {
    const double sd = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
    Tensor w = Tensor::zeros({co, ci, k, k});
    double* p = w.data();
    for (int64_t i = 0; i < w.size(); ++i) p[i] = sd * rng.normal();
    return ConvParams{w, Tensor::zeros({co})};
  };
  const int f = cfg.base_channels;
  model.enc1 = conv_init(f, cfg.in_channels, 3);
  model.enc2 = conv_init(2 * f, f, 3);
  model.dec1 = conv_init(2 * f, 4 * f, 3);
  model.dec2 = conv_init(f, 3 * f, 3);
  model.head = conv_init(cfg.classes, f, 1);

  if (cfg.attn.variant != AttnVariant::none) {
    const int c = insertion_channels(cfg);
    const int d = cfg.attn.resolved_channels(c);
    int block_len = 0;
    if (cfg.attn.variant == AttnVariant::nbsa) {
      // attention sits at full resolution for both placements
      model.schedule = enumerate_blocks(cfg.height, cfg.width, cfg.attn.block, cfg.attn.resolved_stride());
      if (cfg.attn.relative) block_len = model.schedule.block_len();
    }
    for (int i = 0; i < cfg.attn.n_layers; ++i)
      model.attn_layers.push_back(make_attention_weights(c, d, block_len, rng));
  }
  return model;
}

namespace {

Tensor apply_attention(const TinyUnet& model, const Tensor& x) {
  const auto& attn = model.config.attn;
  if (attn.variant == AttnVariant::full_sa) {
    Tensor out = x;
    for (const auto& w : model.attn_layers) out = full_self_attention(out, w);
    return out;
  }
  NbsaOptions opt;
  opt.average = attn.avg_aggregate;
  return nbsa_stack(x, model.attn_layers, model.schedule, opt);
}

}  // namespace

namespace {

// Decoder output before any attention or head.
Tensor backbone_features(const TinyUnet& model, const Tensor& image) {
  require(image.ndim() == 3 && image.dim(0) == model.config.in_channels,
          "unet_forward: image must be [" + std::to_string(model.config.in_channels) + "×H×W], got " +
              shape_str(image.shape()));
  require(image.dim(1) % 4 == 0 && image.dim(2) % 4 == 0,
          "unet_forward: H and W must be divisible by 4, got " + shape_str(image.shape()));
  if (model.config.attn.variant == AttnVariant::nbsa)
    require(image.dim(1) == model.config.height && image.dim(2) == model.config.width,
            "unet_forward: model was built for " + std::to_string(model.config.height) + "x" +
                std::to_string(model.config.width) + ", got " + shape_str(image.shape()));
  Tensor e1 = conv_block(image, model.enc1);             // F×H×W
  Tensor p1 = maxpool2(e1);                              // F×H/2×W/2
  Tensor e2 = conv_block(p1, model.enc2);                // 2F×H/2×W/2
  Tensor p2 = maxpool2(e2);                              // 2F×H/4×W/4
  Tensor u1 = upsample2(p2);                             // 2F×H/2×W/2
  Tensor d1 = conv_block(concat0(u1, e2), model.dec1);   // 2F×H/2×W/2
  Tensor u2 = upsample2(d1);                             // 2F×H×W
  return conv_block(concat0(u2, e1), model.dec2);        // F×H×W
}

}  // namespace

Tensor unet_forward(const TinyUnet& model, const Tensor& image) {
  const auto& attn = model.config.attn;
  Tensor d2 = backbone_features(model, image);
  if (attn.variant != AttnVariant::none && attn.placement == AttnPlacement::penultimate)
    d2 = apply_attention(model, d2);
  Tensor logits = conv2d(d2, model.head.w, model.head.b);  // K×H×W
  if (attn.variant != AttnVariant::none && attn.placement == AttnPlacement::last)
    logits = apply_attention(model, logits);
  return logits;
}

Tensor unet_attention_input(const TinyUnet& model, const Tensor& image) {
  require(model.config.attn.variant != AttnVariant::none, "model has no attention stage");
  Tensor d2 = backbone_features(model, image);
  if (model.config.attn.placement == AttnPlacement::penultimate) return d2;
  return conv2d(d2, model.head.w, model.head.b);
}

LabelMask argmax_mask(const Tensor& logits) {
  const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  LabelMask mask = make_label_mask(h, w);
  const double* z = logits.data();
  const size_t plane = static_cast<size_t>(h) * w;
  for (size_t p = 0; p < plane; ++p) {
    int best = 0;
    double bv = z[p];
    for (int c = 1; c < k; ++c)
      if (z[c * plane + p] > bv) {  // strict: ties keep the lower class
        bv = z[c * plane + p];
        best = c;
      }
    mask.labels[p] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

LabelMask predict_mask(const TinyUnet& model, const Tensor& image) {
  return argmax_mask(unet_forward(model, image));
}

TrainResult train(TinyUnet& model, const std::vector<TrainSample>& data, const TrainConfig& cfg) {
  require(!data.empty(), "train: dataset is empty");
  require(cfg.batch_size >= 1, "train: batch size must be positive");
  require(cfg.epochs >= 0, "train: epochs must be nonnegative");
  for (const auto& s : data)
    for (std::uint8_t lb : s.mask.labels)
      require(lb < model.config.classes, "train: label " + std::to_string(int(lb)) + " out of range");

  std::vector<Tensor> params = model.params();
  AdamState opt = make_adam_state(params, cfg.lr);
  Rng order_rng = Rng(cfg.seed).fork(0x6F726465ULL);  // "orde" stream
  TrainResult result;
  result.epoch_loss.reserve(static_cast<size_t>(cfg.epochs));

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates on a fresh per-epoch stream
    Rng shuffle = order_rng.fork(static_cast<std::uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    size_t cursor = 0;
    while (cursor < order.size()) {
      const size_t take = std::min<size_t>(static_cast<size_t>(cfg.batch_size), order.size() - cursor);
      Tape tape;
      for (auto& p : params) tape.watch(p);
      Tensor batch_loss;
      for (size_t b = 0; b < take; ++b) {
        const TrainSample& s = data[static_cast<size_t>(order[cursor + b])];
        Tensor logits = unet_forward(model, s.image);
        Tensor loss = softmax_cross_entropy(logits, s.mask);
        batch_loss = b == 0 ? loss : add(batch_loss, loss);
      }
      if (take > 1) batch_loss = scale(batch_loss, 1.0 / static_cast<double>(take));
      tape.backward(batch_loss);
      adam_step(params, opt);
      epoch_loss += batch_loss.value() * static_cast<double>(take);
      cursor += take;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

namespace {

const char* variant_name(AttnVariant v) {
  switch (v) {
    case AttnVariant::none: return "none";
    case AttnVariant::full_sa: return "full_sa";
    default: return "nbsa";
  }
}

AttnVariant variant_from(const std::string& s) {
  if (s == "none") return AttnVariant::none;
  if (s == "full_sa") return AttnVariant::full_sa;
  if (s == "nbsa") return AttnVariant::nbsa;
  throw ValidationError("unknown attention variant '" + s + "'");
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF), static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ValidationError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const TinyUnet& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path);
  const auto& c = model.config;
  const auto& a = c.attn;
  os << "NBSAUNET v1\n";
  os << "in_channels=" << c.in_channels << "\n";
  os << "classes=" << c.classes << "\n";
  os << "base_channels=" << c.base_channels << "\n";
  os << "height=" << c.height << "\n";
  os << "width=" << c.width << "\n";
  os << "attn.variant=" << variant_name(a.variant) << "\n";
  os << "attn.layers=" << a.n_layers << "\n";
  os << "attn.block=" << a.block << "\n";
  os << "attn.stride=" << a.stride << "\n";
  os << "attn.overlap=" << (a.overlap ? 1 : 0) << "\n";
  os << "attn.relative=" << (a.relative ? 1 : 0) << "\n";
  os << "attn.placement=" << (a.placement == AttnPlacement::penultimate ? "penultimate" : "last") << "\n";
  os << "attn.channels=" << a.channels << "\n";
  os << "attn.avg_aggregate=" << (a.avg_aggregate ? 1 : 0) << "\n";
  os << "end_header\n";
  const auto named = model.named_params();
  put_u32(os, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(tensor, os);
  }
  if (!os) throw std::runtime_error("short write to " + path);
}

TinyUnet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path);
  std::string line;
  std::getline(is, line);
  require(line == "NBSAUNET v1", "bad checkpoint header in " + path);
  std::map<std::string, std::string> kv;
  while (std::getline(is, line) && line != "end_header") {
    const auto eq = line.find('=');
    require(eq != std::string::npos, "malformed checkpoint header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  require(line == "end_header", "checkpoint header not terminated");
  auto geti = [&kv](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError("checkpoint missing key " + key);
    return std::stoi(it->second);
  };
  TinyUnetConfig cfg;
  cfg.in_channels = geti("in_channels");
  cfg.classes = geti("classes");
  cfg.base_channels = geti("base_channels");
  cfg.height = geti("height");
  cfg.width = geti("width");
  cfg.attn.variant = variant_from(kv.at("attn.variant"));
  cfg.attn.n_layers = geti("attn.layers");
  cfg.attn.block = geti("attn.block");
  cfg.attn.stride = geti("attn.stride");
  cfg.attn.overlap = geti("attn.overlap") != 0;
  cfg.attn.relative = geti("attn.relative") != 0;
  cfg.attn.placement = kv.at("attn.placement") == "last" ? AttnPlacement::last : AttnPlacement::penultimate;
  cfg.attn.channels = geti("attn.channels");
  cfg.attn.avg_aggregate = geti("attn.avg_aggregate") != 0;

  TinyUnet model = build_tiny_unet(cfg, 0);
  auto named = model.named_params();
  const std::uint32_t count = get_u32(is);
  require(count == named.size(), "checkpoint has " + std::to_string(count) + " parameters, model expects " +
                                     std::to_string(named.size()));
  for (auto& [name, tensor] : named) {
    const std::uint32_t len = get_u32(is);
    std::string got(len, '\0');
    is.read(got.data(), len);
    require(static_cast<bool>(is) && got == name,
            "checkpoint parameter order mismatch: expected " + name + ", got " + got);
    Tensor loaded = read_tensor(is);
    require(loaded.shape() == tensor.shape(), "checkpoint shape mismatch for " + name);
    std::memcpy(tensor.data(), loaded.data(), sizeof(double) * static_cast<size_t>(loaded.size()));
  }
  return model;
}

}  // namespace nbsa
