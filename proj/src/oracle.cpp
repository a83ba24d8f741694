#include "nbsa/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace nbsa {
namespace oracle {

namespace {

// rows[i] = x viewed as N×C (library layout is C-major planes)
std::vector<double> to_rows(const std::vector<double>& x, int c, int n) {
  std::vector<double> rows(static_cast<size_t>(n) * c);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) rows[static_cast<size_t>(i) * c + ch] = x[static_cast<size_t>(ch) * n + i];
  return rows;
}

std::vector<double> project(const std::vector<double>& rows, int n, int c,
                            const std::vector<double>& weight, int d) {
  std::vector<double> out(static_cast<size_t>(n) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < d; ++t) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch)
        acc += rows[static_cast<size_t>(i) * c + ch] * weight[static_cast<size_t>(t) * c + ch];
      out[static_cast<size_t>(i) * d + t] = acc;
    }
  return out;
}

// attn[i][t] over the subset of positions `ids` (empty ids → all 0..n-1)
void attend(const std::vector<double>& q, const std::vector<double>& k, const std::vector<double>& v,
            int d, const std::vector<int>& ids, std::vector<double>& accum, double weight_scale) {
  const int l = static_cast<int>(ids.size());
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> row(static_cast<size_t>(l));
  for (int a = 0; a < l; ++a) {
    const int i = ids[static_cast<size_t>(a)];
    for (int b = 0; b < l; ++b) {
      const int j = ids[static_cast<size_t>(b)];
      double acc = 0.0;
      for (int t = 0; t < d; ++t)
        acc += q[static_cast<size_t>(i) * d + t] * k[static_cast<size_t>(j) * d + t];
      row[static_cast<size_t>(b)] = acc * inv;
    }
    double mx = row[0];
    for (double vvv : row) mx = std::max(mx, vvv);
    double s = 0.0;
    for (auto& vvv : row) {
      vvv = std::exp(vvv - mx);
      s += vvv;
    }
    for (int b = 0; b < l; ++b) {
      const int j = ids[static_cast<size_t>(b)];
      const double a_ij = row[static_cast<size_t>(b)] / s;
      for (int t = 0; t < d; ++t)
        accum[static_cast<size_t>(i) * d + t] += weight_scale * a_ij * v[static_cast<size_t>(j) * d + t];
    }
  }
}

std::vector<double> finish(const std::vector<double>& x, const std::vector<double>& rows,
                           const std::vector<double>& beta, int c, int n,
                           const std::vector<double>& w_out, int d) {
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int t = 0; t < d; ++t)
        acc += beta[static_cast<size_t>(i) * d + t] * w_out[static_cast<size_t>(ch) * d + t];
      out[static_cast<size_t>(ch) * n + i] = rows[static_cast<size_t>(i) * c + ch] + acc;
    }
  return out;
}

}  // namespace

std::vector<double> full_attention(const std::vector<double>& x, int c, int h, int w,
                                   const std::vector<double>& w_theta,
                                   const std::vector<double>& w_phi,
                                   const std::vector<double>& w_g,
                                   const std::vector<double>& w_out, int d) {
  const int n = h * w;
  const std::vector<double> rows = to_rows(x, c, n);
  const std::vector<double> q = project(rows, n, c, w_theta, d);
  const std::vector<double> k = project(rows, n, c, w_phi, d);
  const std::vector<double> v = project(rows, n, c, w_g, d);
  std::vector<int> all(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
  std::vector<double> beta(static_cast<size_t>(n) * d, 0.0);
  attend(q, k, v, d, all, beta, 1.0);
  return finish(x, rows, beta, c, n, w_out, d);
}

std::vector<double> blocked_attention(const std::vector<double>& x, int c, int h, int w,
                                      const std::vector<double>& w_theta,
                                      const std::vector<double>& w_phi,
                                      const std::vector<double>& w_g,
                                      const std::vector<double>& w_out, int d,
                                      const std::vector<std::vector<int>>& blocks, bool average) {
  const int n = h * w;
  const std::vector<double> rows = to_rows(x, c, n);
  const std::vector<double> q = project(rows, n, c, w_theta, d);
  const std::vector<double> k = project(rows, n, c, w_phi, d);
  const std::vector<double> v = project(rows, n, c, w_g, d);
  std::vector<double> beta(static_cast<size_t>(n) * d, 0.0);
  for (const auto& ids : blocks) attend(q, k, v, d, ids, beta, 1.0);
  if (average) {
    std::vector<int> membership(static_cast<size_t>(n), 0);
    for (const auto& ids : blocks)
      for (int p : ids) membership[static_cast<size_t>(p)] += 1;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < d; ++t)
        beta[static_cast<size_t>(i) * d + t] /= static_cast<double>(membership[static_cast<size_t>(i)]);
  }
  return finish(x, rows, beta, c, n, w_out, d);
}

namespace {

bool fg(const std::vector<std::uint8_t>& m, int h, int w, int y, int x) {
  if (y < 0 || y >= h || x < 0 || x >= w) return false;
  return m[static_cast<size_t>(y) * w + x] != 0;
}

// Boundary pixels: foreground with any 4-neighbour outside the foreground
// (out-of-grid counts as outside).
std::vector<std::pair<int, int>> boundary(const std::vector<std::uint8_t>& m, int h, int w) {
  std::vector<std::pair<int, int>> pts;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (fg(m, h, w, y, x) &&
          (!fg(m, h, w, y - 1, x) || !fg(m, h, w, y + 1, x) || !fg(m, h, w, y, x - 1) ||
           !fg(m, h, w, y, x + 1)))
        pts.emplace_back(y, x);
  return pts;
}

double p95_of(std::vector<double> ds) {
  std::sort(ds.begin(), ds.end());
  size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(ds.size())));
  if (rank < 1) rank = 1;
  return ds[rank - 1];
}

}  // namespace

MaskMetrics mask_metrics(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                         int h, int w, double tau) {
  MaskMetrics out;
  std::int64_t na = 0, nb = 0, inter = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] != 0;
    nb += b[i] != 0;
    inter += a[i] != 0 && b[i] != 0;
  }
  out.dsc = (na + nb) == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);

  const auto sa = boundary(a, h, w);
  const auto sb = boundary(b, h, w);
  out.tpl = static_cast<std::int64_t>(sa.size());
  if (!sa.empty() && !sb.empty()) {
    std::vector<double> dab, dba;
    std::int64_t close_ab = 0, close_ba = 0;
    for (const auto& [ya, xa] : sa) {
      double best = 1e300;
      for (const auto& [yb, xb] : sb)
        best = std::min(best, std::hypot(static_cast<double>(ya - yb), static_cast<double>(xa - xb)));
      dab.push_back(best);
      close_ab += best <= tau;
    }
    for (const auto& [yb, xb] : sb) {
      double best = 1e300;
      for (const auto& [ya, xa] : sa)
        best = std::min(best, std::hypot(static_cast<double>(ya - yb), static_cast<double>(xa - xb)));
      dba.push_back(best);
      close_ba += best <= tau;
    }
    out.hd95 = std::max(p95_of(dab), p95_of(dba));
    out.sdsc = static_cast<double>(close_ab + close_ba) / static_cast<double>(sa.size() + sb.size());
  }
  // symmetric boundary difference
  for (const auto& pa : sa)
    if (std::find(sb.begin(), sb.end(), pa) == sb.end()) out.apl += 1;
  for (const auto& pb : sb)
    if (std::find(sa.begin(), sa.end(), pb) == sa.end()) out.apl += 1;
  return out;
}

}  // namespace oracle
}  // namespace nbsa
