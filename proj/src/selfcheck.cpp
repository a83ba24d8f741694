#include "nbsa/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>

#include "nbsa/adam.hpp"
#include "nbsa/attention.hpp"
#include "nbsa/flops.hpp"
#include "nbsa/gradcheck.hpp"
#include "nbsa/metrics.hpp"
#include "nbsa/oracle.hpp"
#include "nbsa/phantom.hpp"
#include "nbsa/rng.hpp"
#include "nbsa/unet.hpp"

namespace nbsa {
namespace selfcheck {

namespace {

void check(SuiteResult& r, bool cond, const std::string& what) {
  r.checks += 1;
  if (!cond) r.failures.push_back(what);
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Uniform values kept away from 0 so relu/maxpool kinks stay clear of the
// finite-difference step.
Tensor random_tensor_nonzero(Shape shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (int64_t i = 0; i < t.size(); ++i)
    if (std::fabs(t.data()[i]) < 1e-3) t.data()[i] = t.data()[i] < 0 ? -1e-3 : 1e-3;
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  return worst;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0;
}

// Gradient check for a unary tensor op under a fixed random projection loss.
void gradcheck_op(SuiteResult& r, const std::string& name, Shape in_shape,
                  const std::function<Tensor(const Tensor&)>& op, Rng& rng, double tol = 1e-5) {
  Tensor x = random_tensor_nonzero(in_shape, rng);
  Tensor probe_out = op(x);
  Tensor proj = random_tensor(probe_out.shape(), rng, 0.5, 1.5);

  Tape tape;
  Tensor leaf = x.detached_clone();
  tape.watch(leaf);
  Tensor loss = sum(mul(op(leaf), proj));
  tape.backward(loss);
  const std::vector<double> ad = leaf.grad();

  Tensor fd = finite_diff_gradient(
      [&op, &proj](const Tensor& probe) { return sum(mul(op(probe), proj)).value(); }, x, 1e-5);
  const std::vector<double> fdv(fd.data(), fd.data() + fd.size());
  const double err = max_rel_error(ad, fdv);
  check(r, err < tol, name + " gradient mismatch (rel err " + std::to_string(err) + ")");
}

SuiteResult suite_softmax(Rng rng) {
  SuiteResult r{"softmax_rows"};
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng.below(6));
    const int n = 1 + static_cast<int>(rng.below(9));
    Tensor x = random_tensor({m, n}, rng, -30.0, 30.0);
    Tensor p = softmax_rows(x);
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += p.data()[static_cast<size_t>(i) * n + j];
      check(r, std::fabs(s - 1.0) < 1e-12, "row sum off by " + std::to_string(s - 1.0));
    }
  }
  // forced overflow case: the closed form gives exactly [1, 0]
  Tensor hot = softmax_rows(Tensor::from_data({1, 2}, {1000.0, 0.0}));
  check(r, hot.data()[0] == 1.0 && hot.data()[1] == 0.0, "max-subtraction overflow guard");
  return r;
}

SuiteResult suite_op_gradients(Rng rng) {
  SuiteResult r{"op_gradients"};
  {
    Tensor b = random_tensor({3, 4}, rng);
    gradcheck_op(r, "matmul", {2, 3}, [&b](const Tensor& a) { return matmul(a, b); }, rng);
    Tensor a = random_tensor({2, 3}, rng);
    gradcheck_op(r, "matmul_rhs", {3, 4}, [&a](const Tensor& bb) { return matmul(a, bb); }, rng);
    Tensor bt = random_tensor({4, 3}, rng);
    gradcheck_op(r, "matmul_nt", {2, 3}, [&bt](const Tensor& a2) { return matmul_nt(a2, bt); }, rng);
  }
  gradcheck_op(r, "softmax_rows", {3, 5}, [](const Tensor& x) { return softmax_rows(x); }, rng);
  gradcheck_op(r, "relu", {4, 4}, [](const Tensor& x) { return relu(x); }, rng);
  gradcheck_op(r, "scale", {3, 3}, [](const Tensor& x) { return scale(x, -0.7); }, rng);
  gradcheck_op(r, "transpose", {3, 5}, [](const Tensor& x) { return transpose2d(x); }, rng);
  gradcheck_op(r, "reshape", {3, 4}, [](const Tensor& x) { return reshape(x, {2, 6}); }, rng);
  {
    Tensor other = random_tensor({3, 4}, rng);
    gradcheck_op(r, "add", {3, 4}, [&other](const Tensor& x) { return add(x, other); }, rng);
    gradcheck_op(r, "mul", {3, 4}, [&other](const Tensor& x) { return mul(x, other); }, rng);
    gradcheck_op(r, "concat0", {2, 4}, [&other](const Tensor& x) { return concat0(x, other); }, rng);
  }
  {
    Tensor w1 = random_tensor({3, 2, 1, 1}, rng);
    Tensor w3 = random_tensor({3, 2, 3, 3}, rng);
    Tensor bias = random_tensor({3}, rng);
    gradcheck_op(r, "conv2d_k1", {2, 4, 4}, [&](const Tensor& x) { return conv2d(x, w1, bias); }, rng);
    gradcheck_op(r, "conv2d_k3", {2, 4, 4}, [&](const Tensor& x) { return conv2d(x, w3, bias); }, rng);
    Tensor x0 = random_tensor({2, 4, 4}, rng);
    gradcheck_op(r, "conv2d_w", {3, 2, 3, 3}, [&](const Tensor& w) { return conv2d(x0, w, bias); }, rng);
    gradcheck_op(r, "conv2d_bias", {3}, [&](const Tensor& b) { return conv2d(x0, w3, b); }, rng);
  }
  gradcheck_op(r, "maxpool2", {2, 4, 4}, [](const Tensor& x) { return maxpool2(x); }, rng);
  gradcheck_op(r, "upsample2", {2, 3, 3}, [](const Tensor& x) { return upsample2(x); }, rng);
  {
    std::vector<int> idx = {0, 2, 2, 5, 1};
    gradcheck_op(r, "gather_rows", {6, 3}, [&idx](const Tensor& x) { return gather_rows(x, idx); }, rng);
  }
  {
    LabelMask target = make_label_mask(3, 3);
    for (size_t i = 0; i < target.labels.size(); ++i) target.labels[i] = static_cast<std::uint8_t>(i % 4);
    Tensor x = random_tensor({4, 3, 3}, rng);
    Tape tape;
    Tensor leaf = x.detached_clone();
    tape.watch(leaf);
    Tensor loss = softmax_cross_entropy(leaf, target);
    tape.backward(loss);
    const std::vector<double> ad = leaf.grad();
    Tensor fd = finite_diff_gradient(
        [&target](const Tensor& probe) { return softmax_cross_entropy(probe, target).value(); }, x, 1e-5);
    const std::vector<double> fdv(fd.data(), fd.data() + fd.size());
    check(r, max_rel_error(ad, fdv) < 1e-5, "softmax_cross_entropy gradient mismatch");
  }
  return r;
}

// Forward of one full-SA layer written with eager ops. `logit_sign` is the
// mutation fixture: a healthy run uses +1, the injected run −1, which the
// finite-difference comparison against the real layer must flag.
Tensor mutated_full_sa(const Tensor& x, const AttentionWeights& w, double logit_sign) {
  const int c = x.dim(0), n = x.dim(1) * x.dim(2);
  Tensor rows = transpose2d(reshape(x, {c, n}));
  Tensor q = matmul_nt(rows, w.w_theta);
  Tensor k = matmul_nt(rows, w.w_phi);
  Tensor v = matmul_nt(rows, w.w_g);
  Tensor s = scale(matmul_nt(q, k), logit_sign / std::sqrt(static_cast<double>(w.d())));
  Tensor beta = matmul(softmax_rows(s), v);
  Tensor out = add(rows, matmul_nt(beta, w.w_out));
  return reshape(transpose2d(out), {c, x.dim(1), x.dim(2)});
}

SuiteResult suite_attention_gradients(Rng rng, const std::string& inject) {
  SuiteResult r{"attention_gradients"};
  if (!inject.empty() && inject != "neg_logit_scale")
    throw ValidationError("unknown selfcheck.inject value '" + inject + "'");
  const double logit_sign = inject == "neg_logit_scale" ? -1.0 : 1.0;

  {  // full SA vs finite differences (through the mutation hook)
    Rng wr = rng.fork(1);
    AttentionWeights w = make_attention_weights(2, 1, 0, wr);
    Tensor x = random_tensor({2, 2, 3}, rng);
    Tensor proj = random_tensor({2, 2, 3}, rng, 0.5, 1.5);
    std::vector<double> ad;
    {
      Tape tape;
      Tensor leaf = x.detached_clone();
      tape.watch(leaf);
      tape.backward(sum(mul(full_self_attention(leaf, w), proj)));
      ad = leaf.grad();
    }
    Tensor fd = finite_diff_gradient(
        [&](const Tensor& probe) { return sum(mul(mutated_full_sa(probe, w, logit_sign), proj)).value(); }, x,
        1e-5);
    const std::vector<double> fdv(fd.data(), fd.data() + fd.size());
    check(r, max_rel_error(ad, fdv) < 1e-4, "full_sa_gradcheck");
  }

  {  // two stacked blocked layers: gradients w.r.t. input and every weight
    const int c = 3, d = 2, h = 6, wdt = 6;
    const BlockSchedule sched = enumerate_blocks(h, wdt, 4, 2);
    Rng wr = rng.fork(2);
    AttentionWeights w1 = make_attention_weights(c, d, 0, wr);
    AttentionWeights w2 = make_attention_weights(c, d, 0, wr);
    Tensor x = random_tensor({c, h, wdt}, rng);
    Tensor proj = random_tensor({c, h, wdt}, rng, 0.5, 1.5);

    auto forward = [&sched](const Tensor& in, const AttentionWeights& a, const AttentionWeights& b) {
      return nested_nbsa(in, a, b, sched);
    };
    std::vector<Tensor> wparams;
    for (auto& t : w1.params()) wparams.push_back(t);
    for (auto& t : w2.params()) wparams.push_back(t);
    std::vector<double> ad_x;
    std::vector<std::vector<double>> ad_w;
    {
      Tape tape;
      Tensor leaf = x.detached_clone();
      tape.watch(leaf);
      for (auto& t : wparams) tape.watch(t);
      tape.backward(sum(mul(forward(leaf, w1, w2), proj)));
      ad_x = leaf.grad();
      for (auto& t : wparams) ad_w.push_back(t.grad());
    }

    Tensor fd_x = finite_diff_gradient(
        [&](const Tensor& probe) { return sum(mul(forward(probe, w1, w2), proj)).value(); }, x, 1e-5);
    const std::vector<double> fdv(fd_x.data(), fd_x.data() + fd_x.size());
    check(r, max_rel_error(ad_x, fdv) < 1e-4, "nested_nbsa_input_gradcheck");

    for (size_t pi = 0; pi < wparams.size(); ++pi) {
      Tensor fd_w = finite_diff_gradient(
          [&](const Tensor& probe) {
            AttentionWeights a = w1, b = w2;
            std::vector<Tensor*> slots = {&a.w_theta, &a.w_phi, &a.w_g, &a.w_out,
                                          &b.w_theta, &b.w_phi, &b.w_g, &b.w_out};
            *slots[pi] = probe;
            return sum(mul(forward(x, a, b), proj)).value();
          },
          wparams[pi], 1e-5);
      const std::vector<double> fdw(fd_w.data(), fd_w.data() + fd_w.size());
      check(r, max_rel_error(ad_w[pi], fdw) < 1e-4,
            "nested_nbsa_weight_gradcheck[" + std::to_string(pi) + "]");
    }
  }

  {  // relative-position path, including the embedding gradient
    const int c = 2, d = 2, h = 4, wdt = 4;
    const BlockSchedule sched = enumerate_blocks(h, wdt, 2, 2);
    Rng wr = rng.fork(3);
    AttentionWeights w = make_attention_weights(c, d, sched.block_len(), wr);
    for (int64_t i = 0; i < w.e_rel.size(); ++i) w.e_rel.data()[i] = 0.3 * wr.normal();
    Tensor x = random_tensor({c, h, wdt}, rng);
    Tensor proj = random_tensor({c, h, wdt}, rng, 0.5, 1.5);
    std::vector<double> ad_e, ad_x;
    {
      Tape tape;
      Tensor leaf_e = w.e_rel;  // shares storage; watch directly
      Tensor leaf_x = x.detached_clone();
      tape.watch(leaf_x);
      tape.watch(leaf_e);
      tape.backward(sum(mul(nbsa_layer(leaf_x, w, sched), proj)));
      ad_e = leaf_e.grad();
      ad_x = leaf_x.grad();
    }

    Tensor fd_e = finite_diff_gradient(
        [&](const Tensor& probe) {
          AttentionWeights w2 = w;
          w2.e_rel = probe;
          return sum(mul(nbsa_layer(x, w2, sched), proj)).value();
        },
        w.e_rel.detached_clone(), 1e-5);
    const std::vector<double> fde(fd_e.data(), fd_e.data() + fd_e.size());
    check(r, max_rel_error(ad_e, fde) < 1e-4, "relative_embedding_gradcheck");
    Tensor fd_x = finite_diff_gradient(
        [&](const Tensor& probe) { return sum(mul(nbsa_layer(probe, w, sched), proj)).value(); }, x, 1e-5);
    const std::vector<double> fdx(fd_x.data(), fd_x.data() + fd_x.size());
    check(r, max_rel_error(ad_x, fdx) < 1e-4, "relative_input_gradcheck");
  }
  return r;
}

SuiteResult suite_determinism(Rng rng) {
  SuiteResult r{"graph_determinism"};
  auto run_once = [](std::uint64_t seed) {
    Rng g(seed);
    Tensor x = random_tensor({3, 4, 4}, g);
    Tensor w = random_tensor({2, 3, 3, 3}, g);
    Tensor b = random_tensor({2}, g);
    Tape tape;
    tape.watch(x);
    tape.watch(w);
    tape.watch(b);
    LabelMask target = make_label_mask(4, 4);
    Tensor loss = softmax_cross_entropy(conv2d(relu(x), w, b), target);
    tape.backward(loss);
    std::vector<double> out = {loss.value()};
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  const auto a = run_once(7), b = run_once(7), c = run_once(8);
  check(r, a == b, "replay with identical seed must be bit-identical");
  check(r, a != c, "different seed should not collide");
  return r;
}

SuiteResult suite_matmul_assoc(Rng rng) {
  SuiteResult r{"matmul_associativity"};
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    Tensor c = random_tensor({4, 4}, rng);
    const double diff = max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c)));
    check(r, diff < 1e-10, "associativity drift " + std::to_string(diff));
  }
  return r;
}

SuiteResult suite_degenerate(Rng rng) {
  SuiteResult r{"degenerate_equivalence"};
  for (int trial = 0; trial < 30; ++trial) {
    const int side = 4 + 4 * static_cast<int>(rng.below(3));  // 4, 8, 12
    const int c = 2 + 2 * static_cast<int>(rng.below(4));     // 2..8
    Rng wr = rng.fork(100 + static_cast<std::uint64_t>(trial));
    AttentionWeights w = make_attention_weights(c, std::max(1, c / 2), 0, wr);
    Tensor x = random_tensor({c, side, side}, rng);
    const BlockSchedule sched = enumerate_blocks(side, side, side, side);
    const double diff = max_abs_diff(nbsa_layer(x, w, sched), full_self_attention(x, w));
    check(r, diff < 1e-12, "single-block layer drifted from full attention by " + std::to_string(diff));
  }
  return r;
}

SuiteResult suite_block_support(Rng rng) {
  SuiteResult r{"block_support"};
  // Non-overlapping 1×2 blocks on a 1×8 strip: the Jacobian must be exactly
  // block-diagonal (finite differences of untouched outputs are exactly 0).
  const int n = 8;
  const BlockSchedule sched = enumerate_blocks(1, n, 2, 2);
  Rng wr = rng.fork(5);
  AttentionWeights w = make_attention_weights(1, 1, 0, wr);
  Tensor x = random_tensor({1, 1, n}, rng);
  const double h = 1e-5;
  for (int i = 0; i < n; ++i) {
    Tensor xp = x.detached_clone(), xm = x.detached_clone();
    xp.data()[i] += h;
    xm.data()[i] -= h;
    Tensor op = nbsa_layer(xp, w, sched), om = nbsa_layer(xm, w, sched);
    for (int j = 0; j < n; ++j) {
      const double jac = (op.data()[j] - om.data()[j]) / (2 * h);
      const bool same_block = i / 2 == j / 2;
      if (same_block)
        check(r, std::fabs(jac) > 0.0 || i != j, "within-block entry unexpectedly zero");
      else
        check(r, jac == 0.0, "cross-block leak at (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
  return r;
}

SuiteResult suite_block_reach(Rng rng) {
  SuiteResult r{"block_reach"};
  // Overlapping 1×2 blocks, stride 1, two layers: context hops one block per
  // layer, so position 0 reaches exactly {0, 1, 2} and no further.
  const int n = 8;
  const BlockSchedule sched = enumerate_blocks(1, n, 2, 1);
  Rng wr = rng.fork(6);
  AttentionWeights w1 = make_attention_weights(1, 1, 0, wr);
  AttentionWeights w2 = make_attention_weights(1, 1, 0, wr);
  Tensor x = random_tensor({1, 1, n}, rng);
  const double h = 1e-5;
  auto fwd2 = [&](const Tensor& in) { return nested_nbsa(in, w1, w2, sched); };
  auto fwd1 = [&](const Tensor& in) { return nbsa_layer(in, w1, sched); };
  Tensor xp = x.detached_clone(), xm = x.detached_clone();
  xp.data()[0] += h;
  xm.data()[0] -= h;
  Tensor p2 = fwd2(xp), m2 = fwd2(xm);
  Tensor p1 = fwd1(xp), m1 = fwd1(xm);
  auto jac = [](const Tensor& p, const Tensor& m, int j) { return (p.data()[j] - m.data()[j]) / 2e-5; };
  check(r, jac(p1, m1, 1) != 0.0, "one layer must reach the shared block");
  check(r, jac(p1, m1, 2) == 0.0, "one layer must not reach past its blocks");
  check(r, jac(p2, m2, 2) != 0.0, "two layers must cross into a non-adjacent block");
  check(r, jac(p2, m2, 3) == 0.0, "two layers must not reach three hops");
  return r;
}

SuiteResult suite_skew(Rng rng) {
  SuiteResult r{"skew_naive_identity"};
  for (int trial = 0; trial < 60; ++trial) {
    const int l = 1 + static_cast<int>(rng.below(16));
    const int d = 1 + static_cast<int>(rng.below(8));
    Tensor q = random_tensor({l, d}, rng);
    Tensor e = random_tensor({2 * l - 1, d}, rng);
    check(r, bitwise_equal(relative_logits_skew(q, e), relative_logits_naive(q, e)),
          "skew and naive differ at L=" + std::to_string(l) + " d=" + std::to_string(d));
  }
  return r;
}

SuiteResult suite_sqrt_d(Rng rng) {
  SuiteResult r{"sqrt_d_scaling"};
  // d=4: with W chosen so Q=K=X, logits must be exactly (X·Xᵀ)/2.
  const int n = 3, d = 4;
  Tensor x = random_tensor({n, d}, rng);
  Tensor qe = matmul_nt(x, x);
  Tensor probs = softmax_rows(scale(qe, 1.0 / std::sqrt(4.0)));
  // reproduce by hand: softmax of qe/2
  for (int i = 0; i < n; ++i) {
    double row[3];
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      row[j] = qe.data()[static_cast<size_t>(i) * n + j] / 2.0;
      mx = std::max(mx, row[j]);
    }
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    for (int j = 0; j < n; ++j) {
      const double want = std::exp(row[j] - mx) / s;
      check(r, std::fabs(probs.data()[static_cast<size_t>(i) * n + j] - want) < 1e-15,
            "logit scaling is not exactly 1/sqrt(d)");
    }
  }
  return r;
}

SuiteResult suite_aggregation_order(Rng rng) {
  SuiteResult r{"aggregation_order"};
  Rng wr = rng.fork(7);
  AttentionWeights w = make_attention_weights(4, 2, 0, wr);
  Tensor x = random_tensor({4, 8, 8}, rng);
  const BlockSchedule sched = enumerate_blocks(8, 8, 4, 2);
  NbsaOptions fwd, rev, par;
  rev.reverse_aggregate = true;
  par.parallel = true;
  Tensor a = nbsa_layer(x, w, sched, fwd);
  Tensor b = nbsa_layer(x, w, sched, rev);
  Tensor c = nbsa_layer(x, w, sched, par);
  check(r, max_abs_diff(a, b) < 1e-12, "raster vs reverse aggregation drift");
  check(r, bitwise_equal(a, c), "parallel block mode must be bit-identical to serial");
  return r;
}

SuiteResult suite_flops() {
  SuiteResult r{"flop_ledger"};
  AttentionConfig ref;
  ref.variant = AttnVariant::nbsa;
  ref.n_layers = 2;
  ref.block = 36;
  ref.stride = 24;
  ref.overlap = true;
  const FlopLedger nb = count_flops(ref, 64, 32, 252, 252);
  check(r, nb.total == nb.stage_sum(), "total must equal the stage sum");
  check(r, nb.blocks == 100, "block count must match ((252-36)/24+1)^2");
  const std::uint64_t n = 252ULL * 252ULL;
  check(r, nb.projections == 2 * 3 * n * 64 * 32, "projection count formula");
  check(r, nb.logits == 2 * 100ULL * 36 * 36 * 36 * 36 * 32, "logit count formula");
  check(r, nb.softmax == 2 * 100ULL * 36 * 36 * 36 * 36, "softmax count formula");
  check(r, nb.weighting == nb.logits, "weighting mirrors the logit count");
  check(r, nb.output_projection == 2 * n * 32 * 64, "output projection formula");
  check(r, nb.residual == 2 * n * 64, "residual formula");

  AttentionConfig full = ref;
  full.variant = AttnVariant::full_sa;
  const FlopLedger fl = count_flops(full, 64, 32, 252, 252);
  check(r, fl.logits == 2 * n * n * 32, "full-SA logit formula");
  check(r, nb.total * 10 < fl.total, "blocked cost must undercut full SA by 10x");

  // single block covering the map degenerates to the full-SA ledger
  AttentionConfig one = ref;
  one.block = 12;
  one.stride = 12;
  one.overlap = false;
  const FlopLedger a = count_flops(one, 8, 4, 12, 12);
  AttentionConfig fsa = one;
  fsa.variant = AttnVariant::full_sa;
  const FlopLedger b = count_flops(fsa, 8, 4, 12, 12);
  check(r, a.logits == b.logits && a.softmax == b.softmax && a.total == b.total,
        "single-block ledger must equal full SA");

  // monotone nonincreasing in s at fixed B
  std::uint64_t prev = UINT64_MAX;
  for (int s : {12, 18, 24, 27, 36}) {
    AttentionConfig cfg = ref;
    cfg.stride = s;
    cfg.overlap = s < 36;
    const FlopLedger led = count_flops(cfg, 64, 32, 252, 252);
    check(r, led.total <= prev, "total must be nonincreasing in stride");
    prev = led.total;
  }
  return r;
}

SuiteResult suite_metric_oracles(Rng rng) {
  SuiteResult r{"metric_oracles"};
  const int h = 16, w = 16;
  for (int trial = 0; trial < 60; ++trial) {
    auto draw_mask = [&](int max_px) {
      std::vector<std::uint8_t> m(static_cast<size_t>(h) * w, 0);
      const int count = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_px)));
      for (int i = 0; i < count; ++i) m[rng.below(m.size())] = 1;
      return m;
    };
    const auto a = draw_mask(64);
    const auto b = draw_mask(64);
    metrics::BinaryMask ma{h, w, a}, mb{h, w, b};
    const double tau = trial % 2 == 0 ? 1.0 : 2.0;
    const auto want = oracle::mask_metrics(a, b, h, w, tau);
    check(r, metrics::dsc(ma, mb) == want.dsc, "dsc disagrees with the exhaustive oracle");
    if (!ma.empty() && !mb.empty()) {
      check(r, std::fabs(metrics::hd95(ma, mb) - want.hd95) < 1e-9, "hd95 disagrees with the oracle");
      check(r, metrics::surface_dsc(ma, mb, tau) == want.sdsc, "surface dsc disagrees with the oracle");
    }
    if (!ma.empty()) {
      const auto eff = metrics::apl_tpl_car(ma, mb);
      check(r, eff.apl == want.apl && eff.tpl == want.tpl, "apl/tpl disagree with the oracle");
    }
  }
  // spearman identities
  check(r, metrics::spearman({1, 2, 3, 4}, {2, 4, 6, 8}) == 1.0, "increasing map must give rho=1");
  check(r, metrics::spearman({1, 2, 3, 4}, {8, 6, 4, 2}) == -1.0, "reversing map must give rho=-1");
  const double rho = metrics::spearman({1, 2, 2, 4}, {1, 3, 2, 4});
  check(r, std::fabs(rho - 3.0 / std::sqrt(10.0)) < 1e-12, "mid-rank tie handling");
  return r;
}

SuiteResult suite_dvh(Rng rng) {
  SuiteResult r{"dvh_dose"};
  {  // uniform dose
    phantom::DoseGrid g;
    g.h = 2;
    g.w = 2;
    g.prescription = 10;
    g.dose = {10, 10, 10, 10};
    metrics::BinaryMask m{2, 2, {1, 1, 1, 1}};
    const auto curve = metrics::dvh(g, m, 3.0);
    check(r, curve.cumulative_fraction.front() == 1.0, "curve must start at 1");
    for (size_t i = 0; i < curve.dose_edges.size(); ++i) {
      const double want = curve.dose_edges[i] <= 10.0 ? 1.0 : 0.0;
      check(r, curve.cumulative_fraction[i] == want, "uniform-dose fraction");
    }
  }
  for (int trial = 0; trial < 100; ++trial) {  // monotone on random pairs
    phantom::DoseGrid g;
    g.h = 6;
    g.w = 6;
    g.prescription = 50;
    for (int i = 0; i < 36; ++i) g.dose.push_back(rng.uniform(0.0, 50.0));
    metrics::BinaryMask m{6, 6, std::vector<std::uint8_t>(36, 0)};
    m.fg[rng.below(36)] = 1;
    for (int i = 0; i < 8; ++i) m.fg[rng.below(36)] = 1;
    const auto curve = metrics::dvh(g, m, 2.5);
    check(r, curve.cumulative_fraction.front() == 1.0, "random curve must start at 1");
    bool mono = true;
    for (size_t i = 1; i < curve.cumulative_fraction.size(); ++i)
      mono &= curve.cumulative_fraction[i] <= curve.cumulative_fraction[i - 1];
    check(r, mono, "cumulative fraction must be nonincreasing");
  }
  {  // synthetic dose field invariants
    const auto sample = phantom::generate(11, 64, 64, 5, phantom::Severity::none);
    const auto dose = phantom::generate_dose(11, sample.mask, 2, 70.0);
    double dmax = 0;
    for (double v : dose.dose) {
      check(r, v >= 0.0, "dose must be nonnegative");
      dmax = std::max(dmax, v);
    }
    check(r, dmax <= 1.2 * 70.0, "max dose cap");
    const auto far_organ = metrics::mask_for_label(sample.mask, 3);
    check(r, metrics::mean_dose(dose, far_organ) < 0.2 * 70.0, "far organ must stay below 0.2x prescription");
  }
  return r;
}

SuiteResult suite_phantom(Rng rng) {
  SuiteResult r{"phantom_generator"};
  {  // byte determinism
    const auto a = phantom::generate(42, 64, 64, 8, phantom::Severity::severe);
    const auto b = phantom::generate(42, 64, 64, 8, phantom::Severity::severe);
    check(r, bitwise_equal(a.image, b.image) && a.mask.labels == b.mask.labels, "generation must be pure");
  }
  for (int trial = 0; trial < 25; ++trial) {  // organ presence and size
    const std::uint64_t seed = rng.next_u64();
    const auto s = phantom::generate(seed, 64, 64, 8, phantom::Severity::none);
    std::vector<int> counts(8, 0);
    for (auto lb : s.mask.labels) counts[lb] += 1;
    for (int label = 1; label < 8; ++label)
      check(r, counts[label] >= 20, "organ " + std::to_string(label) + " has only " +
                                        std::to_string(counts[label]) + " px (seed " + std::to_string(seed) + ")");
    // mask pixels stay inside their analytic outer ellipse
    bool inside = true;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const int lb = s.mask.at(y, x);
        if (lb == 0) continue;
        inside &= s.organs[static_cast<size_t>(lb - 1)].inside_outer(y + 0.5, x + 0.5);
      }
    check(r, inside, "mask pixel escaped its analytic ellipse");
  }
  {  // dropout removes the organ and nothing else
    const auto full = phantom::generate(9, 64, 64, 5, phantom::Severity::none);
    const auto dropped = phantom::generate(9, 64, 64, 5, phantom::Severity::none, {2});
    bool sound = true;
    for (size_t i = 0; i < full.mask.labels.size(); ++i) {
      if (full.mask.labels[i] == 2)
        sound &= dropped.mask.labels[i] == 0;
      else
        sound &= dropped.mask.labels[i] == full.mask.labels[i];
    }
    check(r, sound, "dropout must erase exactly the dropped organ");
  }
  {  // severity changes pixels only on the streak support
    const auto clean = phantom::generate(13, 64, 64, 5, phantom::Severity::none);
    const auto bad = phantom::generate(13, 64, 64, 5, phantom::Severity::severe);
    const auto overlay = phantom::streak_overlay(13, 64, 64, 5, phantom::Severity::severe);
    int changed = 0;
    bool confined = true;
    for (size_t i = 0; i < overlay.size(); ++i) {
      const double diff = std::fabs(bad.image.data()[i] - clean.image.data()[i]);
      if (overlay[i] == 0.0)
        confined &= diff == 0.0;
      else
        changed += diff > 0.0;
    }
    check(r, confined, "image must change only on the streak support");
    check(r, changed > 50, "severe overlay must actually perturb the image");
    check(r, clean.mask.labels == bad.mask.labels, "severity must not move labels");
  }
  {  // severity histogram over 1000 sample draws
    phantom::DatasetSpec spec;
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 1000; ++i) {
      const auto sev = phantom::draw_severity(phantom::sample_seed(42, 1, i), spec);
      counts[static_cast<int>(sev)] += 1;
    }
    check(r, std::fabs(counts[0] / 1000.0 - 0.7) < 0.03, "none fraction off spec");
    check(r, std::fabs(counts[1] / 1000.0 - 0.2) < 0.03, "moderate fraction off spec");
    check(r, std::fabs(counts[2] / 1000.0 - 0.1) < 0.03, "severe fraction off spec");
  }
  {  // seed uniqueness across the default dataset shape
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < 200; ++i) seeds.push_back(phantom::sample_seed(42, 1, i));
    for (int i = 0; i < 50; ++i) seeds.push_back(phantom::sample_seed(42, 2, i));
    std::sort(seeds.begin(), seeds.end());
    check(r, std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end(), "sample seeds must be unique");
  }
  return r;
}

SuiteResult suite_backbone(Rng rng) {
  SuiteResult r{"backbone"};
  TinyUnetConfig cfg;
  cfg.classes = 4;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  cfg.attn.variant = AttnVariant::nbsa;
  cfg.attn.n_layers = 2;
  cfg.attn.block = 4;
  cfg.attn.stride = 2;
  cfg.attn.overlap = true;

  {  // closed-form parameter count
    TinyUnet m = build_tiny_unet(cfg, 5);
    check(r, m.param_count() == tiny_unet_param_count(cfg), "parameter count formula (blocked attention)");
    TinyUnetConfig plain = cfg;
    plain.attn.variant = AttnVariant::none;
    TinyUnet p = build_tiny_unet(plain, 5);
    check(r, p.param_count() == tiny_unet_param_count(plain), "parameter count formula (no attention)");
    check(r, m.param_count() == p.param_count() + 2 * (3 * 4 * 2 + 2 * 4), "attention parameter bookkeeping");
  }
  {  // residual neutrality: zero value path ⇒ logits equal the plain model's
    TinyUnet m = build_tiny_unet(cfg, 6);
    TinyUnetConfig plain = cfg;
    plain.attn.variant = AttnVariant::none;
    TinyUnet p = build_tiny_unet(plain, 999);
    auto copy_conv = [](ConvParams& dst, const ConvParams& src) {
      std::memcpy(dst.w.data(), src.w.data(), sizeof(double) * static_cast<size_t>(src.w.size()));
      std::memcpy(dst.b.data(), src.b.data(), sizeof(double) * static_cast<size_t>(src.b.size()));
    };
    copy_conv(p.enc1, m.enc1);
    copy_conv(p.enc2, m.enc2);
    copy_conv(p.dec1, m.dec1);
    copy_conv(p.dec2, m.dec2);
    copy_conv(p.head, m.head);
    for (auto& layer : m.attn_layers)
      for (int64_t i = 0; i < layer.w_g.size(); ++i) layer.w_g.data()[i] = 0.0;
    Tensor img = random_tensor({1, 32, 32}, rng, 0.0, 1.0);
    check(r, bitwise_equal(unet_forward(m, img), unet_forward(p, img)),
          "zero value path must reduce to the attention-free network");
  }
  {  // every parameter group receives gradient
    TinyUnet m = build_tiny_unet(cfg, 7);
    Tensor img = random_tensor({1, 32, 32}, rng, 0.0, 1.0);
    LabelMask target = make_label_mask(32, 32);
    for (int y = 4; y < 10; ++y)
      for (int x = 4; x < 10; ++x) target.at(y, x) = 1;
    auto params = m.named_params();
    Tape tape;
    for (auto& [name, t] : params) tape.watch(t);
    tape.backward(softmax_cross_entropy(unet_forward(m, img), target));
    for (auto& [name, t] : params) {
      double norm = 0;
      for (double g : t.grad()) norm += g * g;
      check(r, norm > 0.0, "dead gradient for parameter group " + name);
    }
  }
  {  // deterministic initialization and training step
    TinyUnet a = build_tiny_unet(cfg, 21), b = build_tiny_unet(cfg, 21);
    bool same = true;
    auto pa = a.params(), pb = b.params();
    for (size_t i = 0; i < pa.size(); ++i) same &= bitwise_equal(pa[i], pb[i]);
    check(r, same, "same seed must give bit-identical initialization");

    std::vector<TrainSample> data;
    for (int i = 0; i < 2; ++i) {
      const auto s = phantom::generate(100 + static_cast<std::uint64_t>(i), 32, 32, 4, phantom::Severity::none);
      data.push_back({s.image, s.mask});
    }
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 3;
    TrainResult ra = train(a, data, tc);
    TrainResult rb = train(b, data, tc);
    check(r, ra.epoch_loss == rb.epoch_loss, "training loss curve must replay bit-identically");
    pa = a.params();
    pb = b.params();
    same = true;
    for (size_t i = 0; i < pa.size(); ++i) same &= bitwise_equal(pa[i], pb[i]);
    check(r, same, "trained parameters must replay bit-identically");

    TrainConfig frozen = tc;
    frozen.lr = 0.0;
    TinyUnet c = build_tiny_unet(cfg, 21);
    auto before = c.params();
    std::vector<Tensor> snapshot;
    for (auto& t : before) snapshot.push_back(t.detached_clone());
    train(c, data, frozen);
    auto after = c.params();
    same = true;
    for (size_t i = 0; i < after.size(); ++i) same &= bitwise_equal(after[i], snapshot[i]);
    check(r, same, "lr=0 must leave parameters untouched");
  }
  return r;
}

}  // namespace

std::vector<SuiteResult> run_all(const std::string& inject) {
  std::vector<SuiteResult> out;
  out.push_back(suite_softmax(Rng(101)));
  out.push_back(suite_op_gradients(Rng(102)));
  out.push_back(suite_attention_gradients(Rng(103), inject));
  out.push_back(suite_determinism(Rng(104)));
  out.push_back(suite_matmul_assoc(Rng(105)));
  out.push_back(suite_degenerate(Rng(106)));
  out.push_back(suite_block_support(Rng(107)));
  out.push_back(suite_block_reach(Rng(108)));
  out.push_back(suite_skew(Rng(109)));
  out.push_back(suite_sqrt_d(Rng(110)));
  out.push_back(suite_aggregation_order(Rng(111)));
  out.push_back(suite_flops());
  out.push_back(suite_metric_oracles(Rng(113)));
  out.push_back(suite_dvh(Rng(114)));
  out.push_back(suite_phantom(Rng(115)));
  out.push_back(suite_backbone(Rng(116)));
  return out;
}

bool report(const std::vector<SuiteResult>& results, std::ostream& os) {
  bool ok = true;
  int total = 0, failed = 0;
  for (const auto& r : results) {
    total += r.checks;
    failed += static_cast<int>(r.failures.size());
    os << (r.ok() ? "[pass] " : "[FAIL] ") << r.name << ": " << (r.checks - static_cast<int>(r.failures.size()))
       << "/" << r.checks << " checks\n";
    for (const auto& f : r.failures) os << "         - " << f << "\n";
    ok &= r.ok();
  }
  os << (ok ? "OK" : "FAILED") << ": " << (total - failed) << "/" << total << " checks across "
     << results.size() << " suites\n";
  return ok;
}

}  // namespace selfcheck
}  // namespace nbsa
