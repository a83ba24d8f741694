#include "nbsa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "nbsa/error.hpp"

namespace nbsa {
namespace metrics {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

void require_same_grid(const BinaryMask& a, const BinaryMask& b, const char* who) {
  require(a.h == b.h && a.w == b.w, std::string(who) + ": mask dimensions differ, " + std::to_string(a.h) + "x" +
                                        std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
}

// Squared Euclidean distance between pixel ids on a w-wide grid.
inline std::int64_t sq_dist(int p, int q, int w) {
  const std::int64_t dy = p / w - q / w;
  const std::int64_t dx = p % w - q % w;
  return dy * dy + dx * dx;
}

// Per element of `from`: squared distance to the nearest element of `to`.
std::vector<std::int64_t> nearest_sq(const std::vector<int>& from, const std::vector<int>& to, int w) {
  std::vector<std::int64_t> out;
  out.reserve(from.size());
  for (int p : from) {
    std::int64_t best = -1;
    for (int q : to) {
      const std::int64_t d = sq_dist(p, q, w);
      if (best < 0 || d < best) best = d;
    }
    out.push_back(best);
  }
  return out;
}

double nearest_rank_p95(std::vector<std::int64_t> sq) {
  std::sort(sq.begin(), sq.end());
  const size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(sq.size())));
  return std::sqrt(static_cast<double>(sq[rank - 1]));
}

}  // namespace

std::int64_t BinaryMask::count() const {
  std::int64_t n = 0;
  for (auto v : fg) n += v != 0;
  return n;
}

BinaryMask mask_for_label(const LabelMask& mask, int label) {
  BinaryMask out;
  out.h = mask.h;
  out.w = mask.w;
  out.fg.resize(mask.labels.size());
  for (size_t i = 0; i < mask.labels.size(); ++i) out.fg[i] = mask.labels[i] == label ? 1 : 0;
  return out;
}

std::vector<int> surface(const BinaryMask& m) {
  std::vector<int> out;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      const bool border = y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1;
      if (border || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1))
        out.push_back(y * m.w + x);
    }
  return out;
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a, b, "dsc");
  std::int64_t na = 0, nb = 0, inter = 0;
  for (size_t i = 0; i < a.fg.size(); ++i) {
    na += a.fg[i] != 0;
    nb += b.fg[i] != 0;
    inter += (a.fg[i] != 0 && b.fg[i] != 0);
  }
  if (na + nb == 0) return 1.0;  // agreement on absence
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double hd95(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a, b, "hd95");
  require(!a.empty() && !b.empty(), "hd95 is undefined for an empty mask");
  const std::vector<int> sa = surface(a);
  const std::vector<int> sb = surface(b);
  const double ab = nearest_rank_p95(nearest_sq(sa, sb, a.w));
  const double ba = nearest_rank_p95(nearest_sq(sb, sa, a.w));
  return std::max(ab, ba);
}

double surface_dsc(const BinaryMask& a, const BinaryMask& b, double tau) {
  require_same_grid(a, b, "surface_dsc");
  require(!a.empty() && !b.empty(), "surface_dsc is undefined for an empty mask");
  require(tau >= 0, "surface_dsc: tau must be nonnegative");
  const std::vector<int> sa = surface(a);
  const std::vector<int> sb = surface(b);
  const double tau2 = tau * tau;
  std::int64_t hit = 0;
  for (std::int64_t d : nearest_sq(sa, sb, a.w)) hit += static_cast<double>(d) <= tau2;
  for (std::int64_t d : nearest_sq(sb, sa, a.w)) hit += static_cast<double>(d) <= tau2;
  return static_cast<double>(hit) / static_cast<double>(sa.size() + sb.size());
}

ContourEffort apl_tpl_car(const BinaryMask& reference, const BinaryMask& predicted) {
  require_same_grid(reference, predicted, "apl_tpl_car");
  require(!reference.empty(), "apl_tpl_car needs a nonempty reference");
  const std::vector<int> sr = surface(reference);
  const std::vector<int> sp = surface(predicted);
  const std::unordered_set<int> ref_set(sr.begin(), sr.end());
  const std::unordered_set<int> pred_set(sp.begin(), sp.end());
  ContourEffort eff;
  eff.tpl = static_cast<std::int64_t>(sr.size());
  for (int p : sr) eff.apl += pred_set.find(p) == pred_set.end();  // added
  for (int p : sp) eff.apl += ref_set.find(p) == ref_set.end();    // deleted
  eff.car = static_cast<double>(eff.apl) / static_cast<double>(eff.tpl);
  return eff;
}

DvhCurve dvh(const phantom::DoseGrid& dose, const BinaryMask& mask, double bin_width) {
  require(dose.h == mask.h && dose.w == mask.w, "dvh: dose grid and mask dimensions differ");
  require(bin_width > 0, "dvh: bin width must be positive");
  require(!mask.empty(), "dvh is undefined for an empty mask");
  std::vector<double> doses;
  for (size_t i = 0; i < mask.fg.size(); ++i)
    if (mask.fg[i]) doses.push_back(dose.dose[i]);
  const double dmax = *std::max_element(doses.begin(), doses.end());
  DvhCurve curve;
  for (double edge = 0.0;; edge += bin_width) {
    std::int64_t n = 0;
    for (double d : doses) n += d >= edge;
    curve.dose_edges.push_back(edge);
    curve.cumulative_fraction.push_back(static_cast<double>(n) / static_cast<double>(doses.size()));
    if (edge >= dmax) break;
  }
  return curve;
}

double mean_dose(const phantom::DoseGrid& dose, const BinaryMask& mask) {
  require(dose.h == mask.h && dose.w == mask.w, "mean_dose: grid mismatch");
  require(!mask.empty(), "mean_dose is undefined for an empty mask");
  double s = 0.0;
  std::int64_t n = 0;
  for (size_t i = 0; i < mask.fg.size(); ++i)
    if (mask.fg[i]) {
      s += dose.dose[i];
      ++n;
    }
  return s / static_cast<double>(n);
}

double max_dose(const phantom::DoseGrid& dose, const BinaryMask& mask) {
  require(dose.h == mask.h && dose.w == mask.w, "max_dose: grid mismatch");
  require(!mask.empty(), "max_dose is undefined for an empty mask");
  double m = 0.0;
  bool first = true;
  for (size_t i = 0; i < mask.fg.size(); ++i)
    if (mask.fg[i]) {
      if (first || dose.dose[i] > m) m = dose.dose[i];
      first = false;
    }
  return m;
}

double vx_percent(const phantom::DoseGrid& dose, const BinaryMask& mask, double x) {
  require(dose.h == mask.h && dose.w == mask.w, "vx: grid mismatch");
  require(!mask.empty(), "vx is undefined for an empty mask");
  std::int64_t total = 0, hit = 0;
  for (size_t i = 0; i < mask.fg.size(); ++i)
    if (mask.fg[i]) {
      ++total;
      hit += dose.dose[i] >= x;
    }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(total);
}

DoseMetrics dose_metrics(const phantom::DoseGrid& dose, const BinaryMask& manual,
                         const BinaryMask& aut, const std::vector<double>& x_levels) {
  DoseMetrics out;
  out.mean_add = std::fabs(mean_dose(dose, manual) - mean_dose(dose, aut));
  out.max_add = std::fabs(max_dose(dose, manual) - max_dose(dose, aut));
  for (double x : x_levels)
    out.delta_vx.push_back(std::fabs(vx_percent(dose, manual, x) - vx_percent(dose, aut, x)));
  return out;
}

namespace {

std::vector<double> midranks(const std::vector<double>& xs) {
  const size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&xs](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size(), "spearman: series lengths differ");
  require(xs.size() >= 2, "spearman needs at least two points");
  const std::vector<double> rx = midranks(xs);
  const std::vector<double> ry = midranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  require(sxx > 0 && syy > 0, "spearman is undefined for a constant series");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace metrics
}  // namespace nbsa
