#include "nbsa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kernels.hpp"

namespace nbsa {

namespace {

using detail::grad_buf;
using detail::TensorImpl;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

void require_2d(const Tensor& t, const char* who) {
  require(t.ndim() == 2, std::string(who) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

bool want_grad(const std::shared_ptr<TensorImpl>& impl) { return impl->tape != nullptr; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  require(a.dim(1) == b.dim(0),
          "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::zeros({m, n});
  kernels::nn(a.data(), b.data(), c.data(), m, k, n);
  detail::check_finite(c, "matmul");
  if (Tape* tape = detail::tape_of({a, b})) {
    auto ai = a.impl(), bi = b.impl(), ci = c.impl();
    tape->record("matmul", {a, b}, c, [ai, bi, ci, m, k, n] {
      const double* dc = ci->grad.data();
      if (want_grad(ai)) kernels::nt(dc, bi->data.data(), grad_buf(ai).data(), m, n, k);
      if (want_grad(bi)) kernels::tn(ai->data.data(), dc, grad_buf(bi).data(), m, k, n);
    });
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  require(a.dim(1) == b.dim(1),
          "matmul_nt: contraction dimensions disagree, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c = Tensor::zeros({m, n});
  kernels::nt(a.data(), b.data(), c.data(), m, k, n);
  detail::check_finite(c, "matmul_nt");
  if (Tape* tape = detail::tape_of({a, b})) {
    auto ai = a.impl(), bi = b.impl(), ci = c.impl();
    tape->record("matmul_nt", {a, b}, c, [ai, bi, ci, m, k, n] {
      const double* dc = ci->grad.data();
      if (want_grad(ai)) kernels::nn(dc, bi->data.data(), grad_buf(ai).data(), m, n, k);
      if (want_grad(bi)) kernels::tn(dc, ai->data.data(), grad_buf(bi).data(), m, n, k);
    });
  }
  return c;
}

Tensor transpose2d(const Tensor& x) {
  require_2d(x, "transpose2d");
  const int m = x.dim(0), n = x.dim(1);
  Tensor y = Tensor::zeros({n, m});
  const double* xd = x.data();
  double* yd = y.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) yd[static_cast<size_t>(j) * m + i] = xd[static_cast<size_t>(i) * n + j];
  if (Tape* tape = detail::tape_of({x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record("transpose2d", {x}, y, [xi, yi, m, n] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double* dy = yi->grad.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dx[static_cast<size_t>(i) * n + j] += dy[static_cast<size_t>(j) * m + i];
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.size(),
          "reshape: " + shape_str(x.shape()) + " has " + std::to_string(x.size()) +
              " elements, target " + shape_str(shape) + " wants " + std::to_string(shape_numel(shape)));
  Tensor y = Tensor::from_data(std::move(shape), x.values());
  if (Tape* tape = detail::tape_of({x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record("reshape", {x}, y, [xi, yi] {
      if (!want_grad(xi)) return;
      auto& dx = grad_buf(xi);
      const auto& dy = yi->grad;
      for (size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
  }
  return y;
}

Tensor softmax_rows(const Tensor& logits) {
  require_2d(logits, "softmax_rows");
  const int m = logits.dim(0), n = logits.dim(1);
  Tensor p = Tensor::zeros({m, n});
  const double* x = logits.data();
  double* y = p.data();
  for (int i = 0; i < m; ++i)
    kernels::softmax_row(x + static_cast<size_t>(i) * n, y + static_cast<size_t>(i) * n, n);
  detail::check_finite(p, "softmax_rows");
  if (Tape* tape = detail::tape_of({logits})) {
    auto xi = logits.impl(), pi = p.impl();
    tape->record("softmax_rows", {logits}, p, [xi, pi, m, n] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double* dy = pi->grad.data();
      const double* pv = pi->data.data();
      for (int i = 0; i < m; ++i) {
        const size_t off = static_cast<size_t>(i) * n;
        kernels::softmax_row_backward(pv + off, dy + off, dx + off, n);
      }
    });
  }
  return p;
}

Tensor relu(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  const double* xd = x.data();
  double* yd = y.data();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  if (Tape* tape = detail::tape_of({x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record("relu", {x}, y, [xi, yi, n] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double* dy = yi->grad.data();
      const double* xv = xi->data.data();
      // gradient at exactly 0 is 0
      for (int64_t i = 0; i < n; ++i)
        if (xv[i] > 0.0) dx[i] += dy[i];
    });
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor c = Tensor::zeros(a.shape());
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = c.data();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) cd[i] = ad[i] + bd[i];
  detail::check_finite(c, "add");
  if (Tape* tape = detail::tape_of({a, b})) {
    auto ai = a.impl(), bi = b.impl(), ci = c.impl();
    tape->record("add", {a, b}, c, [ai, bi, ci, n] {
      const double* dy = ci->grad.data();
      if (want_grad(ai)) {
        double* da = grad_buf(ai).data();
        for (int64_t i = 0; i < n; ++i) da[i] += dy[i];
      }
      if (want_grad(bi)) {
        double* db = grad_buf(bi).data();
        for (int64_t i = 0; i < n; ++i) db[i] += dy[i];
      }
    });
  }
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor c = Tensor::zeros(a.shape());
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = c.data();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) cd[i] = ad[i] * bd[i];
  detail::check_finite(c, "mul");
  if (Tape* tape = detail::tape_of({a, b})) {
    auto ai = a.impl(), bi = b.impl(), ci = c.impl();
    tape->record("mul", {a, b}, c, [ai, bi, ci, n] {
      const double* dy = ci->grad.data();
      if (want_grad(ai)) {
        double* da = grad_buf(ai).data();
        const double* bv = bi->data.data();
        for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
      }
      if (want_grad(bi)) {
        double* db = grad_buf(bi).data();
        const double* av = ai->data.data();
        for (int64_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
      }
    });
  }
  return c;
}

Tensor scale(const Tensor& x, double alpha) {
  Tensor y = Tensor::zeros(x.shape());
  const double* xd = x.data();
  double* yd = y.data();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) yd[i] = alpha * xd[i];
  detail::check_finite(y, "scale");
  if (Tape* tape = detail::tape_of({x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record("scale", {x}, y, [xi, yi, n, alpha] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double* dy = yi->grad.data();
      for (int64_t i = 0; i < n; ++i) dx[i] += alpha * dy[i];
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  const double* xd = x.data();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) s += xd[i];
  Tensor y = Tensor::scalar(s);
  detail::check_finite(y, "sum");
  if (Tape* tape = detail::tape_of({x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record("sum", {x}, y, [xi, yi, n] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double dy = yi->grad[0];
      for (int64_t i = 0; i < n; ++i) dx[i] += dy;
    });
  }
  return y;
}

namespace {

// Zero-padded copy of one channel plane, 1-pixel border.
void pad_plane(const double* src, double* dst, int h, int w) {
  const int pw = w + 2;
  std::memset(dst, 0, sizeof(double) * static_cast<size_t>(h + 2) * pw);
  for (int y = 0; y < h; ++y)
    std::memcpy(dst + static_cast<size_t>(y + 1) * pw + 1, src + static_cast<size_t>(y) * w,
                sizeof(double) * static_cast<size_t>(w));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.ndim() == 3, "conv2d: input must be [C×H×W], got " + shape_str(x.shape()));
  require(w.ndim() == 4, "conv2d: weight must be [Cout×Cin×k×k], got " + shape_str(w.shape()));
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == ci, "conv2d: channel mismatch, input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
  require(kh == kw && (kh == 1 || kh == 3),
          "conv2d: unsupported kernel size " + std::to_string(kh) + "x" + std::to_string(kw) + " (only 1 and 3)");
  require(bias.ndim() == 1 && bias.dim(0) == co,
          "conv2d: bias must be [Cout]=" + std::to_string(co) + ", got " + shape_str(bias.shape()));

  Tensor y = Tensor::zeros({co, h, wd});
  const size_t plane = static_cast<size_t>(h) * wd;
  const double* xd = x.data();
  const double* wv = w.data();
  const double* bv = bias.data();
  double* yd = y.data();

  if (kh == 1) {
    for (int o = 0; o < co; ++o) {
      double* out = yd + static_cast<size_t>(o) * plane;
      for (size_t p = 0; p < plane; ++p) out[p] = bv[o];
      for (int c = 0; c < ci; ++c) {
        const double wk = wv[static_cast<size_t>(o) * ci + c];
        const double* in = xd + static_cast<size_t>(c) * plane;
        for (size_t p = 0; p < plane; ++p) out[p] += wk * in[p];
      }
    }
  } else {
    const int pw = wd + 2;
    std::vector<double> pad(static_cast<size_t>(ci) * (h + 2) * pw);
    for (int c = 0; c < ci; ++c)
      pad_plane(xd + static_cast<size_t>(c) * plane, pad.data() + static_cast<size_t>(c) * (h + 2) * pw, h, wd);
    for (int o = 0; o < co; ++o) {
      double* out = yd + static_cast<size_t>(o) * plane;
      for (size_t p = 0; p < plane; ++p) out[p] = bv[o];
      for (int c = 0; c < ci; ++c) {
        const double* pp = pad.data() + static_cast<size_t>(c) * (h + 2) * pw;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const double wk = wv[((static_cast<size_t>(o) * ci + c) * 3 + ky) * 3 + kx];
            for (int yy = 0; yy < h; ++yy) {
              const double* irow = pp + static_cast<size_t>(yy + ky) * pw + kx;
              double* orow = out + static_cast<size_t>(yy) * wd;
              for (int xx = 0; xx < wd; ++xx) orow[xx] += wk * irow[xx];
            }
          }
      }
    }
  }
  detail::check_finite(y, "conv2d");

  if (Tape* tape = detail::tape_of({x, w, bias})) {
    auto xi = x.impl(), wi = w.impl(), bi = bias.impl(), yi = y.impl();
    tape->record("conv2d", {x, w, bias}, y, [xi, wi, bi, yi, ci, co, h, wd, kh] {
      const size_t plane = static_cast<size_t>(h) * wd;
      const double* dy = yi->grad.data();
      if (want_grad(bi)) {
        double* db = grad_buf(bi).data();
        for (int o = 0; o < co; ++o) {
          const double* g = dy + static_cast<size_t>(o) * plane;
          double acc = 0.0;
          for (size_t p = 0; p < plane; ++p) acc += g[p];
          db[o] += acc;
        }
      }
      if (kh == 1) {
        if (want_grad(wi)) {
          double* dw = grad_buf(wi).data();
          const double* xv = xi->data.data();
          for (int o = 0; o < co; ++o)
            for (int c = 0; c < ci; ++c) {
              const double* g = dy + static_cast<size_t>(o) * plane;
              const double* in = xv + static_cast<size_t>(c) * plane;
              double acc = 0.0;
              for (size_t p = 0; p < plane; ++p) acc += g[p] * in[p];
              dw[static_cast<size_t>(o) * ci + c] += acc;
            }
        }
        if (want_grad(xi)) {
          double* dx = grad_buf(xi).data();
          const double* wv = wi->data.data();
          for (int o = 0; o < co; ++o)
            for (int c = 0; c < ci; ++c) {
              const double wk = wv[static_cast<size_t>(o) * ci + c];
              const double* g = dy + static_cast<size_t>(o) * plane;
              double* out = dx + static_cast<size_t>(c) * plane;
              for (size_t p = 0; p < plane; ++p) out[p] += wk * g[p];
            }
        }
        return;
      }
      const int pw = wd + 2;
      const size_t pplane = static_cast<size_t>(h + 2) * pw;
      if (want_grad(wi)) {
        double* dw = grad_buf(wi).data();
        std::vector<double> pad(static_cast<size_t>(ci) * pplane);
        for (int c = 0; c < ci; ++c)
          pad_plane(xi->data.data() + static_cast<size_t>(c) * plane, pad.data() + c * pplane, h, wd);
        for (int o = 0; o < co; ++o)
          for (int c = 0; c < ci; ++c) {
            const double* pp = pad.data() + c * pplane;
            const double* g = dy + static_cast<size_t>(o) * plane;
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                double acc = 0.0;
                for (int yy = 0; yy < h; ++yy) {
                  const double* irow = pp + static_cast<size_t>(yy + ky) * pw + kx;
                  const double* grow = g + static_cast<size_t>(yy) * wd;
                  for (int xx = 0; xx < wd; ++xx) acc += grow[xx] * irow[xx];
                }
                dw[((static_cast<size_t>(o) * ci + c) * 3 + ky) * 3 + kx] += acc;
              }
          }
      }
      if (want_grad(xi)) {
        double* dx = grad_buf(xi).data();
        const double* wv = wi->data.data();
        std::vector<double> padg(static_cast<size_t>(ci) * pplane, 0.0);
        for (int o = 0; o < co; ++o) {
          const double* g = dy + static_cast<size_t>(o) * plane;
          for (int c = 0; c < ci; ++c) {
            double* pp = padg.data() + c * pplane;
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const double wk = wv[((static_cast<size_t>(o) * ci + c) * 3 + ky) * 3 + kx];
                for (int yy = 0; yy < h; ++yy) {
                  double* prow = pp + static_cast<size_t>(yy + ky) * pw + kx;
                  const double* grow = g + static_cast<size_t>(yy) * wd;
                  for (int xx = 0; xx < wd; ++xx) prow[xx] += wk * grow[xx];
                }
              }
          }
        }
        for (int c = 0; c < ci; ++c) {
          const double* pp = padg.data() + c * pplane;
          double* out = dx + static_cast<size_t>(c) * plane;
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < wd; ++xx)
              out[static_cast<size_t>(yy) * wd + xx] += pp[static_cast<size_t>(yy + 1) * pw + xx + 1];
        }
      }
    });
  }
  return y;
}

Tensor maxpool2(const Tensor& x) {
  require(x.ndim() == 3, "maxpool2: input must be [C×H×W], got " + shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h % 2 == 0 && w % 2 == 0,
          "maxpool2: H and W must be even, got " + std::to_string(h) + "x" + std::to_string(w));
  const int oh = h / 2, ow = w / 2;
  Tensor y = Tensor::zeros({c, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(c) * oh * ow);
  const double* xd = x.data();
  double* yd = y.data();
  for (int cc = 0; cc < c; ++cc) {
    const size_t xoff = static_cast<size_t>(cc) * h * w;
    const size_t yoff = static_cast<size_t>(cc) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        // window scanned row-major; strict > keeps the first max on ties
        int64_t best = xoff + static_cast<size_t>(2 * oy) * w + 2 * ox;
        double bv = xd[best];
        const int64_t cand[3] = {best + 1, best + w, best + w + 1};
        for (int64_t idx : cand)
          if (xd[idx] > bv) {
            bv = xd[idx];
            best = idx;
          }
        yd[yoff + static_cast<size_t>(oy) * ow + ox] = bv;
        (*argmax)[yoff + static_cast<size_t>(oy) * ow + ox] = best;
      }
  }
  if (Tape* tape = detail::tape_of({x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record("maxpool2", {x}, y, [xi, yi, argmax] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double* dy = yi->grad.data();
      for (size_t i = 0; i < argmax->size(); ++i) dx[(*argmax)[i]] += dy[i];
    });
  }
  return y;
}

Tensor upsample2(const Tensor& x) {
  require(x.ndim() == 3, "upsample2: input must be [C×H×W], got " + shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = 2 * h, ow = 2 * w;
  Tensor y = Tensor::zeros({c, oh, ow});
  const double* xd = x.data();
  double* yd = y.data();
  for (int cc = 0; cc < c; ++cc)
    for (int oy = 0; oy < oh; ++oy) {
      const double* irow = xd + (static_cast<size_t>(cc) * h + oy / 2) * w;
      double* orow = yd + (static_cast<size_t>(cc) * oh + oy) * ow;
      for (int ox = 0; ox < ow; ++ox) orow[ox] = irow[ox / 2];
    }
  if (Tape* tape = detail::tape_of({x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record("upsample2", {x}, y, [xi, yi, c, h, w] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double* dy = yi->grad.data();
      const int oh = 2 * h, ow = 2 * w;
      for (int cc = 0; cc < c; ++cc)
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) {
            const size_t base = (static_cast<size_t>(cc) * oh + 2 * yy) * ow + 2 * xx;
            dx[(static_cast<size_t>(cc) * h + yy) * w + xx] +=
                dy[base] + dy[base + 1] + dy[base + ow] + dy[base + ow + 1];
          }
    });
  }
  return y;
}

Tensor concat0(const Tensor& a, const Tensor& b) {
  require(a.ndim() == b.ndim() && a.ndim() >= 1, "concat0: rank mismatch");
  for (int i = 1; i < a.ndim(); ++i)
    require(a.dim(i) == b.dim(i),
            "concat0: trailing dims differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<double> data;
  data.reserve(static_cast<size_t>(a.size() + b.size()));
  data.insert(data.end(), a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  Tensor c = Tensor::from_data(std::move(shape), std::move(data));
  if (Tape* tape = detail::tape_of({a, b})) {
    auto ai = a.impl(), bi = b.impl(), ci = c.impl();
    const int64_t na = a.size();
    tape->record("concat0", {a, b}, c, [ai, bi, ci, na] {
      const double* dy = ci->grad.data();
      if (want_grad(ai)) {
        double* da = grad_buf(ai).data();
        for (int64_t i = 0; i < na; ++i) da[i] += dy[i];
      }
      if (want_grad(bi)) {
        double* db = grad_buf(bi).data();
        const int64_t nb = static_cast<int64_t>(bi->data.size());
        for (int64_t i = 0; i < nb; ++i) db[i] += dy[na + i];
      }
    });
  }
  return c;
}

Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
  require_2d(x, "gather_rows");
  const int n = x.dim(0), c = x.dim(1);
  for (int r : idx)
    require(r >= 0 && r < n, "gather_rows: row " + std::to_string(r) + " out of range [0," + std::to_string(n) + ")");
  const int l = static_cast<int>(idx.size());
  Tensor y = Tensor::zeros({l, c});
  const double* xd = x.data();
  double* yd = y.data();
  for (int r = 0; r < l; ++r)
    std::memcpy(yd + static_cast<size_t>(r) * c, xd + static_cast<size_t>(idx[r]) * c,
                sizeof(double) * static_cast<size_t>(c));
  if (Tape* tape = detail::tape_of({x})) {
    auto xi = x.impl(), yi = y.impl();
    auto rows = std::make_shared<std::vector<int>>(std::move(idx));
    tape->record("gather_rows", {x}, y, [xi, yi, rows, c] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double* dy = yi->grad.data();
      for (size_t r = 0; r < rows->size(); ++r) {
        double* drow = dx + static_cast<size_t>((*rows)[r]) * c;
        const double* grow = dy + r * c;
        for (int j = 0; j < c; ++j) drow[j] += grow[j];
      }
    });
  }
  return y;
}

Tensor softmax_cross_entropy(const Tensor& logits, const LabelMask& target) {
  require(logits.ndim() == 3, "softmax_cross_entropy: logits must be [K×H×W], got " + shape_str(logits.shape()));
  const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  require(target.h == h && target.w == w,
          "softmax_cross_entropy: target " + std::to_string(target.h) + "x" + std::to_string(target.w) +
              " does not match logits " + shape_str(logits.shape()));
  const size_t npix = static_cast<size_t>(h) * w;
  for (size_t p = 0; p < npix; ++p)
    require(target.labels[p] < k,
            "softmax_cross_entropy: label " + std::to_string(int(target.labels[p])) + " out of range [0," +
                std::to_string(k) + ")");

  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(k) * npix);
  const double* z = logits.data();
  double loss = 0.0;
  for (size_t p = 0; p < npix; ++p) {
    double mx = z[p];
    for (int c = 1; c < k; ++c) mx = std::max(mx, z[c * npix + p]);
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      const double e = std::exp(z[c * npix + p] - mx);
      (*probs)[c * npix + p] = e;
      s += e;
    }
    for (int c = 0; c < k; ++c) (*probs)[c * npix + p] /= s;
    loss += mx + std::log(s) - z[static_cast<size_t>(target.labels[p]) * npix + p];
  }
  loss /= static_cast<double>(npix);
  Tensor y = Tensor::scalar(loss);
  detail::check_finite(y, "softmax_cross_entropy");
  if (Tape* tape = detail::tape_of({logits})) {
    auto xi = logits.impl(), yi = y.impl();
    auto labels = std::make_shared<std::vector<std::uint8_t>>(target.labels);
    tape->record("softmax_cross_entropy", {logits}, y, [xi, yi, probs, labels, k, npix] {
      if (!want_grad(xi)) return;
      double* dx = grad_buf(xi).data();
      const double dy = yi->grad[0] / static_cast<double>(npix);
      for (int c = 0; c < k; ++c)
        for (size_t p = 0; p < npix; ++p) {
          const double ind = (*labels)[p] == c ? 1.0 : 0.0;
          dx[c * npix + p] += dy * ((*probs)[c * npix + p] - ind);
        }
    });
  }
  return y;
}

}  // namespace nbsa
