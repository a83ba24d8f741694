#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "nbsa/metrics.hpp"
#include "nbsa/phantom.hpp"
#include "nbsa/rng.hpp"

using namespace nbsa;
using namespace nbsa::phantom;

TEST_CASE("generation is a pure function of seed and parameters") {
  const auto a = generate(42, 64, 64, 5, Severity::severe);
  const auto b = generate(42, 64, 64, 5, Severity::severe);
  CHECK(std::memcmp(a.image.data(), b.image.data(), sizeof(double) * 64 * 64) == 0);
  CHECK(a.mask.labels == b.mask.labels);
  const auto c = generate(43, 64, 64, 5, Severity::severe);
  CHECK(a.mask.labels != c.mask.labels);
}

TEST_CASE("all K-1 organs are present without artifacts or dropout") {
  for (std::uint64_t seed : {1ULL, 7ULL, 99ULL}) {
    const auto s = generate(seed, 64, 64, 5, Severity::none);
    std::set<int> present;
    for (auto lb : s.mask.labels)
      if (lb) present.insert(lb);
    CHECK(present == std::set<int>{1, 2, 3, 4});
  }
}

TEST_CASE("image values are clipped to [0,1] and organs stay low contrast") {
  const auto s = generate(5, 64, 64, 8, Severity::severe);
  for (int64_t i = 0; i < s.image.size(); ++i) {
    CHECK(s.image.data()[i] >= 0.0);
    CHECK(s.image.data()[i] <= 1.0);
  }
  // sample the analytic contrast: non-arc organs sit within ±0.05 of 0.5
  const auto clean = generate(5, 64, 64, 8, Severity::none);
  for (int label = 2; label < 8; ++label) {
    double acc = 0;
    int n = 0;
    for (int i = 0; i < 64 * 64; ++i)
      if (clean.mask.labels[static_cast<size_t>(i)] == label) {
        acc += clean.image.data()[i];
        ++n;
      }
    REQUIRE(n > 0);
    CHECK(std::fabs(acc / n - 0.5) < 0.06);  // mean contrast within the band (plus noise)
  }
}

TEST_CASE("organ geometry: mask pixels lie inside their analytic outer ellipse") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = generate(rng.next_u64(), 64, 64, 8, Severity::none);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const int lb = s.mask.at(y, x);
        if (lb == 0) continue;
        CHECK(s.organs[static_cast<size_t>(lb - 1)].inside_outer(y + 0.5, x + 0.5));
      }
  }
}

TEST_CASE("organs occupy at least 20 pixels each at 64x64") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = generate(rng.next_u64(), 64, 64, 8, Severity::none);
    std::vector<int> counts(8, 0);
    for (auto lb : s.mask.labels) counts[lb] += 1;
    for (int label = 1; label < 8; ++label) CHECK(counts[static_cast<size_t>(label)] >= 20);
  }
}

TEST_CASE("dropout removes exactly the dropped organs and keeps geometry") {
  const auto full = generate(11, 64, 64, 6, Severity::none);
  const auto dropped = generate(11, 64, 64, 6, Severity::none, {2, 4});
  CHECK(dropped.dropout == std::vector<int>{2, 4});
  for (size_t i = 0; i < full.mask.labels.size(); ++i) {
    if (full.mask.labels[i] == 2 || full.mask.labels[i] == 4)
      CHECK(dropped.mask.labels[i] == 0);
    else
      CHECK(dropped.mask.labels[i] == full.mask.labels[i]);
  }
  CHECK_THROWS_AS(generate(11, 64, 64, 6, Severity::none, {9}), ValidationError);
}

TEST_CASE("severity perturbs the image only on the blurred streak support") {
  const auto clean = generate(21, 64, 64, 5, Severity::none);
  const auto bad = generate(21, 64, 64, 5, Severity::severe);
  const auto overlay = streak_overlay(21, 64, 64, 5, Severity::severe);
  CHECK(clean.mask.labels == bad.mask.labels);
  int changed = 0;
  for (size_t i = 0; i < overlay.size(); ++i) {
    const double diff = std::fabs(bad.image.data()[i] - clean.image.data()[i]);
    if (overlay[i] == 0.0) CHECK(diff == 0.0);
    changed += diff > 0.0;
  }
  CHECK(changed > 100);
  // no streaks at all for Severity::none
  const auto none_overlay = streak_overlay(21, 64, 64, 5, Severity::none);
  CHECK(std::all_of(none_overlay.begin(), none_overlay.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("phantom rejects out-of-range parameters") {
  CHECK_THROWS_AS(generate(1, 16, 64, 5, Severity::none), ValidationError);
  CHECK_THROWS_AS(generate(1, 64, 64, 1, Severity::none), ValidationError);
  CHECK_THROWS_AS(generate(1, 64, 64, 9, Severity::none), ValidationError);
}

TEST_CASE("datasets use disjoint unique seed streams") {
  const auto ds = make_dataset(42, 200, 50, 64, 64, 5);
  CHECK(ds.train.size() == 200);
  CHECK(ds.test.size() == 50);
  std::set<std::uint64_t> seeds;
  for (const auto& s : ds.train) seeds.insert(s.seed);
  for (const auto& s : ds.test) seeds.insert(s.seed);
  CHECK(seeds.size() == 250);
  CHECK_THROWS_AS(make_dataset(42, 200, 0, 64, 64, 5), ValidationError);
}

TEST_CASE("severity distribution tracks the spec within 3 percent") {
  DatasetSpec spec;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 1000; ++i)
    counts[static_cast<int>(draw_severity(sample_seed(42, 1, i), spec))] += 1;
  CHECK(std::fabs(counts[0] / 1000.0 - 0.7) <= 0.03);
  CHECK(std::fabs(counts[1] / 1000.0 - 0.2) <= 0.03);
  CHECK(std::fabs(counts[2] / 1000.0 - 0.1) <= 0.03);

  DatasetSpec all_severe;
  all_severe.p_none = 0;
  all_severe.p_moderate = 0;
  all_severe.p_severe = 1;
  const auto ds = make_dataset(7, 2, 5, 64, 64, 5, all_severe);
  for (const auto& s : ds.test) CHECK(s.severity == Severity::severe);
}

TEST_CASE("dose grid: plateau at the prescription, radial monotonicity, far-organ falloff") {
  const auto s = generate(11, 64, 64, 5, Severity::none);
  const auto dose = generate_dose(11, s.mask, 2, 70.0);

  // centroid pixel carries the prescription
  double cy = 0, cx = 0;
  int n = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (s.mask.at(y, x) == 2) {
        cy += y;
        cx += x;
        ++n;
      }
  cy /= n;
  cx /= n;
  const int iy = static_cast<int>(std::lround(cy)), ix = static_cast<int>(std::lround(cx));
  CHECK(dose.dose[static_cast<size_t>(iy) * 64 + ix] == doctest::Approx(70.0));

  // dose along a ray is nonincreasing with radius
  double prev = 1e300;
  for (int x = ix; x < 64; ++x) {
    const double v = dose.dose[static_cast<size_t>(iy) * 64 + x];
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
  for (double v : dose.dose) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.2 * 70.0);
  }

  // organ 3 sits across the map from organ 2
  const auto far_organ = metrics::mask_for_label(s.mask, 3);
  CHECK(metrics::mean_dose(dose, far_organ) < 0.2 * 70.0);

  CHECK_THROWS_AS(generate_dose(11, s.mask, 7, 70.0), ValidationError);
}

TEST_CASE("every non-dropped organ keeps its pixels disjoint") {
  // first-label priority plus geometry: each pixel carries at most one label,
  // and the painted region matches the analytic region minus earlier claims
  const auto s = generate(33, 64, 64, 8, Severity::none);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const int lb = s.mask.at(y, x);
      if (lb == 0) continue;
      for (const auto& g : s.organs) {
        if (g.label >= lb) break;
        CHECK(!g.inside_region(y + 0.5, x + 0.5));  // no earlier organ claims it
      }
    }
}
