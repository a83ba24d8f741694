#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbsa/label_mask.hpp"
#include "nbsa/tensor.hpp"

namespace nbsa {
namespace phantom {

enum class Severity { none, moderate, severe };

const char* severity_name(Severity s);
Severity severity_from(const std::string& name);

// Analytic description of one organ, recorded so tests can recheck mask
// pixels against the generating geometry.
struct OrganGeometry {
  int label = 0;
  double cy = 0, cx = 0;      // center, pixels
  double ry = 0, rx = 0;      // semi-axes, pixels (outer for the arc)
  double angle = 0;           // ellipse rotation, radians
  bool is_arc = false;        // elliptical annulus opening upward
  double inner_scale = 0.0;   // arc hole, fraction of the outer ellipse
  double dy_cut = 0.0;        // arc keeps pixels with y−cy ≥ dy_cut

  bool inside_outer(double y, double x) const;   // outer ellipse membership
  bool inside_region(double y, double x) const;  // full organ region
};

struct PhantomSample {
  Tensor image;  // [1×H×W], values in [0, 1]
  LabelMask mask;
  std::uint64_t seed = 0;
  Severity severity = Severity::none;
  std::vector<int> dropout;            // labels removed from image and mask
  std::vector<OrganGeometry> organs;   // pre-dropout geometry, labels 1..K−1
};

// Deterministic in (seed, parameters). K−1 organs drawn from a fixed palette
// (label 1 is the high-contrast arc); organ intensities sit within ±0.05 of
// the 0.5 background plus sigma-0.01 pixel noise; moderate adds 1–2 streaks,
// severe 3–6. K ≤ 8, H and W ≥ 32.
PhantomSample generate(std::uint64_t seed, int h, int w, int k, Severity severity,
                       const std::vector<int>& dropout = {});

// The additive (already blurred) artifact field that `generate` applies for
// this seed/severity; zero everywhere for Severity::none.
std::vector<double> streak_overlay(std::uint64_t seed, int h, int w, int k, Severity severity);

struct DatasetSpec {
  double p_none = 0.7;
  double p_moderate = 0.2;
  double p_severe = 0.1;
  std::vector<int> dropout;
};

struct Dataset {
  std::vector<PhantomSample> train;
  std::vector<PhantomSample> test;
};

// Disjoint per-split seed streams; severity drawn per sample from the spec's
// distribution.
Dataset make_dataset(std::uint64_t seed, int n_train, int n_test, int h, int w, int k,
                     const DatasetSpec& spec = {});

std::uint64_t sample_seed(std::uint64_t dataset_seed, int split, int index);

// The severity a sample with this seed receives under the given spec.
Severity draw_severity(std::uint64_t sample_seed, const DatasetSpec& spec);

struct DoseGrid {
  int h = 0, w = 0;
  std::vector<double> dose;  // Gy, row-major
  double prescription = 0;   // Gy
};

// Radial plateau over the target organ (dose = prescription out to the
// organ's farthest pixel from its centroid), then a Gaussian shoulder whose
// sigma is drawn in [5.5, 6.5] px (scaled by H/64) from the seed.
DoseGrid generate_dose(std::uint64_t seed, const LabelMask& mask, int target_label,
                       double prescription);

}  // namespace phantom
}  // namespace nbsa
