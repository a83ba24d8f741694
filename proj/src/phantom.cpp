#include "nbsa/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "nbsa/error.hpp"
#include "nbsa/rng.hpp"

namespace nbsa {
namespace phantom {

namespace {

constexpr std::uint64_t kGeometryStream = 0x67656F6DULL;   // "geom"
constexpr std::uint64_t kIntensityStream = 0x696E7465ULL;  // "inte"
constexpr std::uint64_t kNoiseStream = 0x6E6F6973ULL;      // "nois"
constexpr std::uint64_t kStreakStream = 0x73747265ULL;     // "stre"
constexpr std::uint64_t kSeverityStream = 0x73657665ULL;   // "seve"
constexpr std::uint64_t kDoseStream = 0x646F7365ULL;       // "dose"

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// Fixed palette in (row, col, ry, rx) fractions of the map. Label 1 is the
// arc; the rest are plain ellipses placed clear of it.
struct PaletteEntry {
  double cy, cx, ry, rx;
};
constexpr PaletteEntry kPalette[7] = {
    {0.70, 0.50, 0.24, 0.32},    // 1: arc
    {0.40, 0.20, 0.130, 0.095},  // 2
    {0.40, 0.80, 0.130, 0.095},  // 3
    {0.26, 0.50, 0.110, 0.150},  // 4
    {0.52, 0.50, 0.080, 0.075},  // 5
    {0.57, 0.32, 0.068, 0.060},  // 6
    {0.57, 0.68, 0.068, 0.060},  // 7
};

}  // namespace

namespace {

std::vector<OrganGeometry> layout(std::uint64_t seed, int h, int w, int k) {
  Rng geom = Rng(seed).fork(kGeometryStream);
  std::vector<OrganGeometry> organs;
  for (int label = 1; label < k; ++label) {
    const PaletteEntry& p = kPalette[label - 1];
    OrganGeometry g;
    g.label = label;
    const double jitter = label == 1 ? 0.035 : 0.025;
    g.cy = (p.cy + geom.uniform(-jitter, jitter)) * h;
    g.cx = (p.cx + geom.uniform(-jitter, jitter)) * w;
    g.ry = p.ry * h * geom.uniform(0.85, 1.15);
    g.rx = p.rx * w * geom.uniform(0.85, 1.15);
    g.angle = label == 1 ? 0.0 : geom.uniform(-0.5, 0.5);
    if (label == 1) {
      g.is_arc = true;
      g.inner_scale = geom.uniform(0.58, 0.66);
      g.dy_cut = -0.05 * g.ry;
    }
    organs.push_back(g);
  }
  return organs;
}

}  // namespace

std::vector<double> streak_overlay(std::uint64_t seed, int h, int w, int k, Severity severity) {
  const size_t npix = static_cast<size_t>(h) * w;
  std::vector<double> overlay(npix, 0.0);
  if (severity == Severity::none) return overlay;
  const std::vector<OrganGeometry> organs = layout(seed, h, w, k);
  Rng streak = Rng(seed).fork(kStreakStream);
  const int n_streaks = severity == Severity::moderate ? 1 + static_cast<int>(streak.below(2))
                                                       : 3 + static_cast<int>(streak.below(4));
  for (int i = 0; i < n_streaks; ++i) {
    const auto& g = organs[streak.below(organs.size())];
    const double theta = streak.uniform(0.0, 3.14159265358979323846);
    const double amp = streak.uniform() < 0.5 ? -0.5 : 0.5;
    const double dy = std::sin(theta), dx = std::cos(theta);
    const double reach = h + w;
    const int y0 = static_cast<int>(std::lround(g.cy - reach * dy));
    const int x0 = static_cast<int>(std::lround(g.cx - reach * dx));
    const int y1 = static_cast<int>(std::lround(g.cy + reach * dy));
    const int x1 = static_cast<int>(std::lround(g.cx + reach * dx));
    int ax = std::abs(x1 - x0), ay = std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = ax - ay, x = x0, y = y0;
    while (true) {
      if (y >= 0 && y < h && x >= 0 && x < w) overlay[static_cast<size_t>(y) * w + x] += amp;
      if (x == x1 && y == y1) break;
      const int e2 = 2 * err;
      if (e2 > -ay) {
        err -= ay;
        x += sx;
      }
      if (e2 < ax) {
        err += ax;
        y += sy;
      }
    }
  }
  std::vector<double> blurred(npix, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int oy = -1; oy <= 1; ++oy)
        for (int ox = -1; ox <= 1; ++ox) {
          const int yy = y + oy, xx = x + ox;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w) acc += overlay[static_cast<size_t>(yy) * w + xx];
        }
      blurred[static_cast<size_t>(y) * w + x] = acc / 9.0;
    }
  return blurred;
}

const char* severity_name(Severity s) {
  switch (s) {
    case Severity::none: return "none";
    case Severity::moderate: return "moderate";
    default: return "severe";
  }
}

Severity severity_from(const std::string& name) {
  if (name == "none") return Severity::none;
  if (name == "moderate") return Severity::moderate;
  if (name == "severe") return Severity::severe;
  throw ValidationError("unknown severity '" + name + "'");
}

bool OrganGeometry::inside_outer(double y, double x) const {
  const double dy = y - cy, dx = x - cx;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double u = (dx * ca + dy * sa) / rx;
  const double v = (-dx * sa + dy * ca) / ry;
  return u * u + v * v <= 1.0;
}

bool OrganGeometry::inside_region(double y, double x) const {
  if (!inside_outer(y, x)) return false;
  if (!is_arc) return true;
  const double dy = y - cy, dx = x - cx;
  const double ui = dx / (inner_scale * rx);
  const double vi = dy / (inner_scale * ry);
  if (ui * ui + vi * vi <= 1.0) return false;  // hole
  return dy >= dy_cut;                         // opens upward
}

PhantomSample generate(std::uint64_t seed, int h, int w, int k, Severity severity,
                       const std::vector<int>& dropout) {
  require(h >= 32 && w >= 32, "phantom needs H,W >= 32, got " + std::to_string(h) + "x" + std::to_string(w));
  require(k >= 2 && k <= 8, "phantom supports 2..8 classes, got " + std::to_string(k));
  for (int lb : dropout) require(lb >= 1 && lb < k, "dropout label " + std::to_string(lb) + " out of range");

  const Rng base(seed);
  Rng inten = base.fork(kIntensityStream);
  Rng noise = base.fork(kNoiseStream);

  PhantomSample sample;
  sample.seed = seed;
  sample.severity = severity;
  sample.dropout = dropout;
  sample.mask = make_label_mask(h, w);
  // Per-purpose substreams keep the layout independent of severity and
  // dropout: only the streak stream varies with the artifact level.
  sample.organs = layout(seed, h, w, k);

  // Mask: first label claims contested pixels.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (const auto& g : sample.organs) {
        if (g.inside_region(y + 0.5, x + 0.5)) {
          sample.mask.at(y, x) = static_cast<std::uint8_t>(g.label);
          break;
        }
      }

  // Organ contrasts relative to the 0.5 background. The arc is the one
  // high-contrast structure; everything else stays within ±0.05 with a
  // per-label sign (even labels brighter, odd darker) and a per-sample
  // magnitude.
  std::vector<double> contrast(static_cast<size_t>(k), 0.0);
  for (int label = 1; label < k; ++label) {
    if (label == 1) {
      contrast[static_cast<size_t>(label)] = 0.4;
    } else {
      const double mag = inten.uniform(0.035, 0.05);
      contrast[static_cast<size_t>(label)] = label % 2 == 0 ? mag : -mag;
    }
  }

  // Dropout erases labels after the full layout is fixed, so the surviving
  // organs keep their geometry.
  std::vector<bool> dropped(static_cast<size_t>(k), false);
  for (int lb : dropout) dropped[static_cast<size_t>(lb)] = true;
  for (auto& lb : sample.mask.labels)
    if (dropped[lb]) lb = 0;

  sample.image = Tensor::zeros({1, h, w});
  double* img = sample.image.data();
  const size_t npix = static_cast<size_t>(h) * w;
  for (size_t p = 0; p < npix; ++p)
    img[p] = 0.5 + contrast[sample.mask.labels[p]] + 0.008 * noise.normal();

  if (severity != Severity::none) {
    const std::vector<double> overlay = streak_overlay(seed, h, w, k, severity);
    for (size_t p = 0; p < npix; ++p) img[p] += overlay[p];
  }

  for (size_t p = 0; p < npix; ++p) img[p] = std::clamp(img[p], 0.0, 1.0);
  return sample;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, int split, int index) {
  return Rng(dataset_seed).fork(static_cast<std::uint64_t>(split) + 1).fork(static_cast<std::uint64_t>(index) + 1).next_u64();
}

Severity draw_severity(std::uint64_t sample_seed, const DatasetSpec& spec) {
  Rng sev = Rng(sample_seed).fork(kSeverityStream);
  const double u = sev.uniform();
  if (u < spec.p_none) return Severity::none;
  if (u < spec.p_none + spec.p_moderate) return Severity::moderate;
  return Severity::severe;
}

Dataset make_dataset(std::uint64_t seed, int n_train, int n_test, int h, int w, int k,
                     const DatasetSpec& spec) {
  require(n_train >= 1 && n_test >= 1, "dataset needs n_train >= 1 and n_test >= 1");
  require(spec.p_none >= 0 && spec.p_moderate >= 0 && spec.p_severe >= 0, "severity fractions must be nonnegative");
  const double psum = spec.p_none + spec.p_moderate + spec.p_severe;
  require(std::fabs(psum - 1.0) < 1e-9, "severity fractions must sum to 1");

  Dataset ds;
  auto emit = [&](int split, int n, std::vector<PhantomSample>& out) {
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const std::uint64_t s = sample_seed(seed, split, i);
      out.push_back(generate(s, h, w, k, draw_severity(s, spec), spec.dropout));
    }
  };
  emit(1, n_train, ds.train);
  emit(2, n_test, ds.test);
  return ds;
}

DoseGrid generate_dose(std::uint64_t seed, const LabelMask& mask, int target_label,
                       double prescription) {
  require(prescription > 0, "prescription must be positive");
  double cy = 0, cx = 0;
  std::int64_t count = 0;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(y, x) == target_label) {
        cy += y;
        cx += x;
        ++count;
      }
  require(count > 0, "target label " + std::to_string(target_label) + " not present in mask");
  cy /= static_cast<double>(count);
  cx /= static_cast<double>(count);

  double r0 = 0.0;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(y, x) == target_label)
        r0 = std::max(r0, std::hypot(y - cy, x - cx));

  Rng rng = Rng(seed).fork(kDoseStream);
  const double sigma = rng.uniform(5.5, 6.5) * (mask.h / 64.0);

  DoseGrid grid;
  grid.h = mask.h;
  grid.w = mask.w;
  grid.prescription = prescription;
  grid.dose.resize(static_cast<size_t>(mask.h) * mask.w);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      const double r = std::hypot(y - cy, x - cx);
      const double f = r <= r0 ? 1.0 : std::exp(-(r - r0) * (r - r0) / (2.0 * sigma * sigma));
      grid.dose[static_cast<size_t>(y) * mask.w + x] = prescription * f;
    }
  return grid;
}

}  // namespace phantom
}  // namespace nbsa
