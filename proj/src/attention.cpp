#include "nbsa/attention.hpp"

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>

namespace nbsa {

namespace {

using detail::grad_buf;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

Tensor chw_to_rows(const Tensor& x) {
  const int c = x.dim(0), n = x.dim(1) * x.dim(2);
  return transpose2d(reshape(x, {c, n}));
}

Tensor rows_to_chw(const Tensor& rows, int c, int h, int w) {
  return reshape(transpose2d(rows), {c, h, w});
}

// Per-block scratch sized once per layer evaluation and reused across the
// raster scan.
struct BlockScratch {
  std::vector<double> qp, kp, vp, out, dout, dqp, dkp, dvp;
  std::vector<double> ktp, vtp;  // d×l transposes; contraction vectorizes over l
  std::vector<double> scores, dscores, da;
  std::vector<double> qe, dqe;
  void resize(int l, int d, bool relative) {
    qp.resize(static_cast<size_t>(l) * d);
    kp.resize(static_cast<size_t>(l) * d);
    vp.resize(static_cast<size_t>(l) * d);
    ktp.resize(static_cast<size_t>(l) * d);
    vtp.resize(static_cast<size_t>(l) * d);
    out.resize(static_cast<size_t>(l) * d);
    dout.resize(static_cast<size_t>(l) * d);
    dqp.resize(static_cast<size_t>(l) * d);
    dkp.resize(static_cast<size_t>(l) * d);
    dvp.resize(static_cast<size_t>(l) * d);
    scores.resize(static_cast<size_t>(l) * l);
    dscores.resize(static_cast<size_t>(l) * l);
    da.resize(static_cast<size_t>(l) * l);
    if (relative) {
      qe.resize(static_cast<size_t>(l) * (2 * l - 1));
      dqe.resize(static_cast<size_t>(l) * (2 * l - 1));
    }
  }
};

void gather_into(const double* src, const std::vector<int>& idx, int d, double* dst) {
  for (size_t r = 0; r < idx.size(); ++r)
    std::memcpy(dst + r * d, src + static_cast<size_t>(idx[r]) * d, sizeof(double) * static_cast<size_t>(d));
}

void transpose_into(const double* src, int rows, int cols, double* dst) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) dst[static_cast<size_t>(j) * rows + i] = src[static_cast<size_t>(i) * cols + j];
}

// Scores for one block into `attn` (l×l): softmax((QpKpᵀ [+ rel])/√d).
// Identical kernels and operation order as the all-pairs path, so a schedule
// with a single whole-map block reproduces it bit for bit.
void block_scores(const double* q, const double* k, const double* e_rel, const std::vector<int>& idx,
                  int d, double inv_sqrt_d, BlockScratch& s, double* attn) {
  const int l = static_cast<int>(idx.size());
  gather_into(q, idx, d, s.qp.data());
  gather_into(k, idx, d, s.kp.data());
  transpose_into(s.kp.data(), l, d, s.ktp.data());
  std::fill(attn, attn + static_cast<size_t>(l) * l, 0.0);
  kernels::nn(s.qp.data(), s.ktp.data(), attn, l, d, l);
  if (e_rel) {
    const int ew = 2 * l - 1;
    std::fill(s.qe.begin(), s.qe.end(), 0.0);
    kernels::nt(s.qp.data(), e_rel, s.qe.data(), l, d, ew);
    // rel[i][j] = qe[i][j−i+l−1]
    for (int i = 0; i < l; ++i) {
      const double* qrow = s.qe.data() + static_cast<size_t>(i) * ew + (l - 1 - i);
      double* arow = attn + static_cast<size_t>(i) * l;
      for (int j = 0; j < l; ++j) arow[j] = arow[j] + qrow[j];
    }
  }
  for (size_t i = 0; i < static_cast<size_t>(l) * l; ++i) attn[i] = inv_sqrt_d * attn[i];
  for (int i = 0; i < l; ++i)
    kernels::softmax_row(attn + static_cast<size_t>(i) * l, attn + static_cast<size_t>(i) * l, l);
}

// beta[j] = Σ_{blocks ∋ j} (softmax(QpKpᵀ/√d)·Vp)[local j], optionally
// divided by the membership count. One tape node for the whole scan.
Tensor blocked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         const AttentionWeights& w, const BlockSchedule& sched,
                         const NbsaOptions& opt) {
  const int n = sched.h * sched.w;
  const int d = w.d();
  const int l = sched.block_len();
  const int nb = sched.n_blocks();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  const bool rel = w.relative();
  if (rel)
    require(w.e_rel.dim(0) == 2 * l - 1, "relative embeddings cover " + std::to_string(w.e_rel.dim(0)) +
                                             " offsets but the block length is " + std::to_string(l));
  Tape* tape = detail::tape_of(rel ? std::initializer_list<Tensor>{q, k, v, w.e_rel}
                                   : std::initializer_list<Tensor>{q, k, v});

  Tensor beta = Tensor::zeros({n, d});
  double* bd = beta.data();
  const double* e_ptr = rel ? w.e_rel.data() : nullptr;

  // attention matrices are saved for backward; inference uses scratch only
  auto saved = tape ? std::make_shared<std::vector<double>>(static_cast<size_t>(nb) * l * l)
                    : nullptr;

  auto accumulate = [&](int p, const double* block_out) {
    const auto& idx = sched.block_pixels[static_cast<size_t>(p)];
    for (size_t r = 0; r < idx.size(); ++r) {
      double* orow = bd + static_cast<size_t>(idx[r]) * d;
      const double* prow = block_out + r * d;
      for (int j = 0; j < d; ++j) orow[j] += prow[j];
    }
  };

  if (opt.parallel && !tape && nb > 1) {
    // fan out the per-block compute, keep the reduction in raster order
    std::vector<double> outs(static_cast<size_t>(nb) * l * d);
    const int threads = std::min<int>(nb, std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        BlockScratch s;
        s.resize(l, d, rel);
        std::vector<double> attn(static_cast<size_t>(l) * l);
        for (int p = t; p < nb; p += threads) {
          const auto& idx = sched.block_pixels[static_cast<size_t>(p)];
          block_scores(q.data(), k.data(), e_ptr, idx, d, inv, s, attn.data());
          gather_into(v.data(), idx, d, s.vp.data());
          double* o = outs.data() + static_cast<size_t>(p) * l * d;
          std::fill(o, o + static_cast<size_t>(l) * d, 0.0);
          kernels::nn(attn.data(), s.vp.data(), o, l, l, d);
        }
      });
    for (auto& th : pool) th.join();
    for (int p = 0; p < nb; ++p) accumulate(p, outs.data() + static_cast<size_t>(p) * l * d);
  } else {
    BlockScratch s;
    s.resize(l, d, rel);
    std::vector<double> attn_local;
    if (!saved) attn_local.resize(static_cast<size_t>(l) * l);
    for (int step = 0; step < nb; ++step) {
      const int p = opt.reverse_aggregate ? nb - 1 - step : step;
      const auto& idx = sched.block_pixels[static_cast<size_t>(p)];
      double* attn = saved ? saved->data() + static_cast<size_t>(p) * l * l : attn_local.data();
      block_scores(q.data(), k.data(), e_ptr, idx, d, inv, s, attn);
      gather_into(v.data(), idx, d, s.vp.data());
      std::fill(s.out.begin(), s.out.end(), 0.0);
      kernels::nn(attn, s.vp.data(), s.out.data(), l, l, d);
      accumulate(p, s.out.data());
    }
  }

  if (opt.average) {
    for (int i = 0; i < n; ++i) {
      const double sc = 1.0 / sched.membership[static_cast<size_t>(i)];
      for (int j = 0; j < d; ++j) bd[static_cast<size_t>(i) * d + j] *= sc;
    }
  }
  detail::check_finite(beta, "blocked_attention");

  if (tape) {
    auto qi = q.impl(), ki = k.impl(), vi = v.impl(), bi = beta.impl();
    auto ei = rel ? w.e_rel.impl() : nullptr;
    const BlockSchedule* sp = &sched;  // outlives the tape by contract
    const bool average = opt.average;
    std::vector<Tensor> inputs = {q, k, v};
    if (rel) inputs.push_back(w.e_rel);
    tape->record("blocked_attention", inputs, beta, [qi, ki, vi, ei, bi, sp, saved, d, l, inv, average] {
      const int nb = sp->n_blocks();
      const double* dbeta = bi->grad.data();
      BlockScratch s;
      s.resize(l, d, ei != nullptr);
      double* dq = qi->tape ? grad_buf(qi).data() : nullptr;
      double* dk = ki->tape ? grad_buf(ki).data() : nullptr;
      double* dv = vi->tape ? grad_buf(vi).data() : nullptr;
      double* de = ei && ei->tape ? grad_buf(ei).data() : nullptr;
      const int ew = 2 * l - 1;
      for (int p = 0; p < nb; ++p) {
        const auto& idx = sp->block_pixels[static_cast<size_t>(p)];
        const double* attn = saved->data() + static_cast<size_t>(p) * l * l;
        gather_into(qi->data.data(), idx, d, s.qp.data());
        gather_into(ki->data.data(), idx, d, s.kp.data());
        gather_into(vi->data.data(), idx, d, s.vp.data());
        for (size_t r = 0; r < idx.size(); ++r) {
          const double sc = average ? 1.0 / sp->membership[static_cast<size_t>(idx[r])] : 1.0;
          const double* grow = dbeta + static_cast<size_t>(idx[r]) * d;
          double* drow = s.dout.data() + r * d;
          for (int j = 0; j < d; ++j) drow[j] = sc * grow[j];
        }
        // dA = dO·Vpᵀ ; dV += Aᵀ·dO
        transpose_into(s.vp.data(), l, d, s.vtp.data());
        std::fill(s.da.begin(), s.da.end(), 0.0);
        kernels::nn(s.dout.data(), s.vtp.data(), s.da.data(), l, d, l);
        if (dv) {
          std::fill(s.dvp.begin(), s.dvp.end(), 0.0);
          kernels::tn(attn, s.dout.data(), s.dvp.data(), l, l, d);
          for (size_t r = 0; r < idx.size(); ++r) {
            double* row = dv + static_cast<size_t>(idx[r]) * d;
            for (int j = 0; j < d; ++j) row[j] += s.dvp[r * d + j];
          }
        }
        // softmax and the 1/√d scale
        std::fill(s.dscores.begin(), s.dscores.end(), 0.0);
        for (int i = 0; i < l; ++i)
          kernels::softmax_row_backward(attn + static_cast<size_t>(i) * l,
                                        s.da.data() + static_cast<size_t>(i) * l,
                                        s.dscores.data() + static_cast<size_t>(i) * l, l);
        for (auto& g : s.dscores) g *= inv;
        // dQ += dS·Kp ; dK += dSᵀ·Qp
        if (dq) {
          std::fill(s.dqp.begin(), s.dqp.end(), 0.0);
          kernels::nn(s.dscores.data(), s.kp.data(), s.dqp.data(), l, l, d);
          if (ei) {
            // relative branch: dQE realigned from dS, then dQ += dQE·E
            std::fill(s.dqe.begin(), s.dqe.end(), 0.0);
            for (int i = 0; i < l; ++i)
              for (int j = 0; j < l; ++j)
                s.dqe[static_cast<size_t>(i) * ew + (j - i + l - 1)] =
                    s.dscores[static_cast<size_t>(i) * l + j];
            kernels::nn(s.dqe.data(), ei->data.data(), s.dqp.data(), l, ew, d);
          }
          for (size_t r = 0; r < idx.size(); ++r) {
            double* row = dq + static_cast<size_t>(idx[r]) * d;
            for (int j = 0; j < d; ++j) row[j] += s.dqp[r * d + j];
          }
        }
        if (de) {
          if (!dq) {  // dQE not built yet
            std::fill(s.dqe.begin(), s.dqe.end(), 0.0);
            for (int i = 0; i < l; ++i)
              for (int j = 0; j < l; ++j)
                s.dqe[static_cast<size_t>(i) * ew + (j - i + l - 1)] =
                    s.dscores[static_cast<size_t>(i) * l + j];
          }
          kernels::tn(s.dqe.data(), s.qp.data(), de, l, ew, d);
        }
        if (dk) {
          std::fill(s.dkp.begin(), s.dkp.end(), 0.0);
          kernels::tn(s.dscores.data(), s.qp.data(), s.dkp.data(), l, l, d);
          for (size_t r = 0; r < idx.size(); ++r) {
            double* row = dk + static_cast<size_t>(idx[r]) * d;
            for (int j = 0; j < d; ++j) row[j] += s.dkp[r * d + j];
          }
        }
      }
    });
  }
  return beta;
}

void check_layer_input(const Tensor& x, const AttentionWeights& w, const char* who) {
  require(x.ndim() == 3, std::string(who) + ": input must be [C×H×W], got " + shape_str(x.shape()));
  require(x.dim(0) == w.c(), std::string(who) + ": input has " + std::to_string(x.dim(0)) +
                                 " channels but weights expect " + std::to_string(w.c()));
}

// Attention output rows for one block (softmax((QpKpᵀ [+ rel])/√d)·Vp).
Tensor block_attention(const Tensor& qp, const Tensor& kp, const Tensor& vp,
                       const AttentionWeights& w) {
  Tensor s = matmul_nt(qp, kp);
  if (w.relative()) s = add(s, relative_logits_skew(qp, w.e_rel));
  s = scale(s, 1.0 / std::sqrt(static_cast<double>(w.d())));
  Tensor a = softmax_rows(s);
  return matmul(a, vp);
}

}  // namespace

int AttentionConfig::resolved_stride() const {
  if (stride > 0) return stride;
  if (!overlap) return block;
  return static_cast<int>(std::lround(2.0 * block / 3.0));
}

int AttentionConfig::resolved_channels(int input_channels) const {
  if (channels > 0) return channels;
  return std::max(1, input_channels / 2);
}

void AttentionConfig::validate() const {
  if (variant == AttnVariant::none) return;
  require(n_layers >= 1 && n_layers <= 3, "attention layer count must be 1, 2 or 3, got " + std::to_string(n_layers));
  if (variant == AttnVariant::full_sa) return;
  require(block >= 2, "block side must be at least 2, got " + std::to_string(block));
  const int s = resolved_stride();
  require(s >= 1, "stride must be positive, got " + std::to_string(s));
  if (overlap)
    require(s < block, "overlap mode needs stride < block, got s=" + std::to_string(s) + " B=" + std::to_string(block));
  else
    require(s == block, "non-overlap mode needs stride == block, got s=" + std::to_string(s) + " B=" + std::to_string(block));
}

std::vector<Tensor> AttentionWeights::params() const {
  std::vector<Tensor> ps = {w_theta, w_phi, w_g, w_out};
  if (e_rel.defined()) ps.push_back(e_rel);
  return ps;
}

int64_t AttentionWeights::param_count() const {
  int64_t n = w_theta.size() + w_phi.size() + w_g.size() + w_out.size();
  if (e_rel.defined()) n += e_rel.size();
  return n;
}

AttentionWeights make_attention_weights(int c, int d, int block_len, Rng& rng) {
  require(c >= 1 && d >= 1, "attention dims must be positive");
  require(d <= c, "attention width d=" + std::to_string(d) + " must not exceed input channels C=" + std::to_string(c));
  AttentionWeights w;
  const double sp = 1.0 / std::sqrt(static_cast<double>(c));
  const double so = 1.0 / std::sqrt(static_cast<double>(d));
  auto init = [&rng](Shape shape, double sd) {
    Tensor t = Tensor::zeros(std::move(shape));
    double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = sd * rng.normal();
    return t;
  };
  w.w_theta = init({d, c}, sp);
  w.w_phi = init({d, c}, sp);
  w.w_g = init({d, c}, sp);
  w.w_out = init({c, d}, so);
  if (block_len > 0) w.e_rel = Tensor::zeros({2 * block_len - 1, d});
  return w;
}

BlockSchedule enumerate_blocks(int h, int w, int block, int stride) {
  require(h >= 1 && w >= 1, "map dimensions must be positive");
  require(block >= 1, "block side must be positive, got " + std::to_string(block));
  require(stride >= 1, "stride must be positive, got " + std::to_string(stride));
  require(stride <= block, "stride s=" + std::to_string(stride) + " must not exceed block side B=" + std::to_string(block));
  BlockSchedule sched;
  sched.h = h;
  sched.w = w;
  sched.block = block;
  sched.stride = stride;
  sched.bh = std::min(block, h);
  sched.bw = std::min(block, w);
  auto check_axis = [&](int extent, int side, const char* name) {
    if ((extent - side) % stride != 0) {
      const int lo = side + ((extent - side) / stride) * stride;
      const int hi = lo + stride;
      throw ValidationError("blocks of side B=" + std::to_string(block) + " with stride s=" + std::to_string(stride) +
                            " do not tile " + name + "=" + std::to_string(extent) + " exactly (H=" + std::to_string(h) +
                            ", W=" + std::to_string(w) + "); nearest exactly-tiling sizes are " + std::to_string(lo) +
                            " and " + std::to_string(hi));
    }
  };
  check_axis(h, sched.bh, "H");
  check_axis(w, sched.bw, "W");

  const int nr = (h - sched.bh) / stride + 1;
  const int nc = (w - sched.bw) / stride + 1;
  sched.origins.reserve(static_cast<size_t>(nr) * nc);
  sched.block_pixels.reserve(static_cast<size_t>(nr) * nc);
  sched.membership.assign(static_cast<size_t>(h) * w, 0);
  for (int r = 0; r < nr; ++r)
    for (int c = 0; c < nc; ++c) {
      const int r0 = r * stride, c0 = c * stride;
      sched.origins.emplace_back(r0, c0);
      std::vector<int> px;
      px.reserve(static_cast<size_t>(sched.bh) * sched.bw);
      for (int y = r0; y < r0 + sched.bh; ++y)
        for (int x = c0; x < c0 + sched.bw; ++x) {
          px.push_back(y * w + x);
          sched.membership[static_cast<size_t>(y) * w + x] += 1;
        }
      sched.block_pixels.push_back(std::move(px));
    }
  return sched;
}

Tensor full_self_attention(const Tensor& x, const AttentionWeights& w) {
  check_layer_input(x, w, "full_self_attention");
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  Tensor rows = chw_to_rows(x);
  Tensor q = matmul_nt(rows, w.w_theta);
  Tensor k = matmul_nt(rows, w.w_phi);
  Tensor v = matmul_nt(rows, w.w_g);
  Tensor beta = block_attention(q, k, v, w);
  Tensor out = add(rows, matmul_nt(beta, w.w_out));
  return rows_to_chw(out, c, h, wd);
}

Tensor nbsa_layer(const Tensor& x, const AttentionWeights& w, const BlockSchedule& sched,
                  const NbsaOptions& opt) {
  check_layer_input(x, w, "nbsa_layer");
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  require(sched.h == h && sched.w == wd,
          "nbsa_layer: schedule is for " + std::to_string(sched.h) + "x" + std::to_string(sched.w) +
              " but input is " + shape_str(x.shape()));
  Tensor rows = chw_to_rows(x);
  Tensor q = matmul_nt(rows, w.w_theta);
  Tensor k = matmul_nt(rows, w.w_phi);
  Tensor v = matmul_nt(rows, w.w_g);
  Tensor beta = blocked_attention(q, k, v, w, sched, opt);
  Tensor out = add(rows, matmul_nt(beta, w.w_out));
  return rows_to_chw(out, c, h, wd);
}

Tensor nested_nbsa(const Tensor& x, const AttentionWeights& w1, const AttentionWeights& w2,
                   const BlockSchedule& sched, const NbsaOptions& opt) {
  require(w1.w_theta.impl() != w2.w_theta.impl() && w1.w_phi.impl() != w2.w_phi.impl() &&
              w1.w_g.impl() != w2.w_g.impl() && w1.w_out.impl() != w2.w_out.impl(),
          "nested_nbsa: the two layers must have independent parameters");
  return nbsa_layer(nbsa_layer(x, w1, sched, opt), w2, sched, opt);
}

Tensor nbsa_stack(const Tensor& x, const std::vector<AttentionWeights>& layers,
                  const BlockSchedule& sched, const NbsaOptions& opt) {
  Tensor out = x;
  for (const auto& w : layers) out = nbsa_layer(out, w, sched, opt);
  return out;
}

Tensor relative_logits_skew(const Tensor& q, const Tensor& e) {
  require(q.ndim() == 2 && e.ndim() == 2, "relative logits: operands must be 2-D");
  const int l = q.dim(0), d = q.dim(1);
  require(e.dim(1) == d, "relative logits: embedding width " + std::to_string(e.dim(1)) +
                             " does not match query width " + std::to_string(d));
  require(e.dim(0) == 2 * l - 1, "relative logits: need " + std::to_string(2 * l - 1) +
                                     " offset rows for L=" + std::to_string(l) + ", got " + std::to_string(e.dim(0)));
  Tensor qe = matmul_nt(q, e);  // L×(2L−1)

  // Realign rows: pad a dummy column on the left (one entry per position),
  // flatten row-major, drop the first L entries, read back L rows of width
  // 2L−1 and keep the first L columns. Each output row is then a contiguous
  // slice of the padded buffer.
  const int pw = 2 * l;
  Tensor out = Tensor::zeros({l, l});
  {
    std::vector<double> padded(static_cast<size_t>(l) * pw, 0.0);
    const double* src = qe.data();
    for (int i = 0; i < l; ++i)
      std::memcpy(padded.data() + static_cast<size_t>(i) * pw + 1, src + static_cast<size_t>(i) * (2 * l - 1),
                  sizeof(double) * static_cast<size_t>(2 * l - 1));
    double* dst = out.data();
    for (int i = 0; i < l; ++i)
      std::memcpy(dst + static_cast<size_t>(i) * l, padded.data() + l + static_cast<size_t>(i) * (2 * l - 1),
                  sizeof(double) * static_cast<size_t>(l));
  }
  if (Tape* tape = detail::tape_of({qe})) {
    auto qi = qe.impl(), oi = out.impl();
    tape->record("skew_reslice", {qe}, out, [qi, oi, l] {
      if (qi->tape == nullptr) return;
      double* dq = grad_buf(qi).data();
      const double* dy = oi->grad.data();
      // out[i][j] lands on qe[i][j−i+L−1]
      for (int i = 0; i < l; ++i)
        for (int j = 0; j < l; ++j)
          dq[static_cast<size_t>(i) * (2 * l - 1) + (j - i + l - 1)] += dy[static_cast<size_t>(i) * l + j];
    });
  }
  return out;
}

Tensor relative_logits_naive(const Tensor& q, const Tensor& e) {
  require(q.ndim() == 2 && e.ndim() == 2, "relative logits: operands must be 2-D");
  const int l = q.dim(0), d = q.dim(1);
  require(e.dim(1) == d, "relative logits: embedding width " + std::to_string(e.dim(1)) +
                             " does not match query width " + std::to_string(d));
  require(e.dim(0) == 2 * l - 1, "relative logits: need " + std::to_string(2 * l - 1) +
                                     " offset rows for L=" + std::to_string(l) + ", got " + std::to_string(e.dim(0)));
  Tensor out = Tensor::zeros({l, l});
  const double* qd = q.data();
  const double* ed = e.data();
  double* od = out.data();
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < l; ++j) {
      const double* qrow = qd + static_cast<size_t>(i) * d;
      const double* erow = ed + static_cast<size_t>(j - i + l - 1) * d;
      double acc = 0.0;
      for (int t = 0; t < d; ++t) acc += qrow[t] * erow[t];
      od[static_cast<size_t>(i) * l + j] = acc;
    }
  if (Tape* tape = detail::tape_of({q, e})) {
    auto qi = q.impl(), ei = e.impl(), oi = out.impl();
    tape->record("relative_logits_naive", {q, e}, out, [qi, ei, oi, l, d] {
      const double* dy = oi->grad.data();
      for (int i = 0; i < l; ++i)
        for (int j = 0; j < l; ++j) {
          const double g = dy[static_cast<size_t>(i) * l + j];
          const size_t erow = static_cast<size_t>(j - i + l - 1) * d;
          if (qi->tape != nullptr) {
            double* dq = grad_buf(qi).data();
            for (int t = 0; t < d; ++t) dq[static_cast<size_t>(i) * d + t] += g * ei->data[erow + t];
          }
          if (ei->tape != nullptr) {
            double* de = grad_buf(ei).data();
            for (int t = 0; t < d; ++t) de[erow + t] += g * qi->data[static_cast<size_t>(i) * d + t];
          }
        }
    });
  }
  return out;
}

std::vector<double> export_attention_map(const Tensor& x, const AttentionWeights& w,
                                         const BlockSchedule& sched, int query_row, int query_col) {
  check_layer_input(x, w, "export_attention_map");
  const int h = x.dim(1), wd = x.dim(2);
  require(sched.h == h && sched.w == wd, "export_attention_map: schedule does not match input");
  require(query_row >= 0 && query_row < h && query_col >= 0 && query_col < wd,
          "query pixel (" + std::to_string(query_row) + "," + std::to_string(query_col) + ") outside " +
              std::to_string(h) + "x" + std::to_string(wd) + " map");
  const int qpix = query_row * wd + query_col;
  Tensor rows = chw_to_rows(x);
  Tensor q = matmul_nt(rows, w.w_theta);
  Tensor k = matmul_nt(rows, w.w_phi);
  const int d = w.d();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<double> map(static_cast<size_t>(h) * wd, 0.0);
  const double* qd = q.data();
  const double* kd = k.data();
  const double* ed = w.relative() ? w.e_rel.data() : nullptr;
  for (int p = 0; p < sched.n_blocks(); ++p) {
    const auto& idx = sched.block_pixels[static_cast<size_t>(p)];
    auto it = std::find(idx.begin(), idx.end(), qpix);
    if (it == idx.end()) continue;
    const int qlocal = static_cast<int>(it - idx.begin());
    const int l = static_cast<int>(idx.size());
    std::vector<double> logits(static_cast<size_t>(l));
    for (int j = 0; j < l; ++j) {
      const double* qrow = qd + static_cast<size_t>(qpix) * d;
      const double* krow = kd + static_cast<size_t>(idx[static_cast<size_t>(j)]) * d;
      double acc = 0.0;
      for (int t = 0; t < d; ++t) acc += qrow[t] * krow[t];
      if (ed) {
        const double* erow = ed + static_cast<size_t>(j - qlocal + l - 1) * d;
        for (int t = 0; t < d; ++t) acc += qrow[t] * erow[t];
      }
      logits[static_cast<size_t>(j)] = acc * inv_sqrt_d;
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double s = 0.0;
    for (auto& v : logits) {
      v = std::exp(v - mx);
      s += v;
    }
    for (int j = 0; j < l; ++j) map[static_cast<size_t>(idx[static_cast<size_t>(j)])] += logits[static_cast<size_t>(j)] / s;
  }
  return map;
}

std::vector<unsigned char> normalize_to_bytes(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size(), 0);
  if (values.empty()) return bytes;
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) return bytes;
  for (size_t i = 0; i < values.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(255.0 * (values[i] - lo) / (hi - lo)));
  return bytes;
}

}  // namespace nbsa
