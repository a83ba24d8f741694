#pragma once

#include <cstdint>
#include <vector>

#include "nbsa/label_mask.hpp"
#include "nbsa/phantom.hpp"

namespace nbsa {
namespace metrics {

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> fg;  // 0/1, row-major

  bool at(int y, int x) const { return fg[static_cast<size_t>(y) * w + x] != 0; }
  std::int64_t count() const;
  bool empty() const { return count() == 0; }
};

BinaryMask mask_for_label(const LabelMask& mask, int label);

// Foreground pixels 4-adjacent to background; the image border counts as
// background. Returned as row-major pixel ids.
std::vector<int> surface(const BinaryMask& m);

// 2|A∩B| / (|A|+|B|); both empty → 1, one empty → 0.
double dsc(const BinaryMask& a, const BinaryMask& b);

// Max over both directions of the nearest-rank 95th percentile of
// surface-to-surface Euclidean distances, in pixels. Both operands must be
// nonempty.
double hd95(const BinaryMask& a, const BinaryMask& b);

// Fraction of the two surfaces lying within tau (pixels) of each other.
double surface_dsc(const BinaryMask& a, const BinaryMask& b, double tau);

struct ContourEffort {
  std::int64_t apl = 0;  // boundary pixels added plus deleted
  std::int64_t tpl = 0;  // reference boundary pixels
  double car = 0.0;      // apl / tpl, may exceed 1
};

ContourEffort apl_tpl_car(const BinaryMask& reference, const BinaryMask& predicted);

struct DvhCurve {
  std::vector<double> dose_edges;           // ascending, starts at 0
  std::vector<double> cumulative_fraction;  // fraction of volume with dose ≥ edge
};

DvhCurve dvh(const phantom::DoseGrid& dose, const BinaryMask& mask, double bin_width);

struct DoseMetrics {
  double mean_add = 0;  // |mean(dose|manual) − mean(dose|auto)|, Gy
  double max_add = 0;
  std::vector<double> delta_vx;  // per requested level, percent volume
};

DoseMetrics dose_metrics(const phantom::DoseGrid& dose, const BinaryMask& manual,
                         const BinaryMask& aut, const std::vector<double>& x_levels);

// Percent of the structure receiving at least x Gy.
double vx_percent(const phantom::DoseGrid& dose, const BinaryMask& mask, double x);

double mean_dose(const phantom::DoseGrid& dose, const BinaryMask& mask);
double max_dose(const phantom::DoseGrid& dose, const BinaryMask& mask);

// Pearson correlation of mid-ranks (ties share the average rank). Throws on
// length mismatch, length < 2, or a constant series.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace metrics
}  // namespace nbsa
