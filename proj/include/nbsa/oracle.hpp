#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace nbsa {
namespace oracle {

// Reference implementations written independently of the library code paths
// they check. Everything here works on plain vectors and nested loops; the
// selfcheck command and the test suites compare library output against these.

// All-pairs self-attention: out = x + W_out·(softmax(QKᵀ/√d)·V).
// x is [C×H×W] row-major; weight layouts match the library ([d×C], [C×d]).
std::vector<double> full_attention(const std::vector<double>& x, int c, int h, int w,
                                   const std::vector<double>& w_theta,
                                   const std::vector<double>& w_phi,
                                   const std::vector<double>& w_g,
                                   const std::vector<double>& w_out, int d);

// Blocked variant: per-block all-pairs attention over the given pixel-id
// blocks, contributions summed per pixel (divided by the membership count
// when average is set), then the output projection and residual.
std::vector<double> blocked_attention(const std::vector<double>& x, int c, int h, int w,
                                      const std::vector<double>& w_theta,
                                      const std::vector<double>& w_phi,
                                      const std::vector<double>& w_g,
                                      const std::vector<double>& w_out, int d,
                                      const std::vector<std::vector<int>>& blocks, bool average);

// Exhaustive mask metrics on 0/1 grids (row-major).
struct MaskMetrics {
  double dsc = 0;
  double hd95 = 0;
  double sdsc = 0;
  std::int64_t apl = 0;
  std::int64_t tpl = 0;
};

// dsc is always filled; the distance fields require both masks nonempty and
// apl/tpl a nonempty `a` (callers arrange that).
MaskMetrics mask_metrics(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                         int h, int w, double tau);

}  // namespace oracle
}  // namespace nbsa
