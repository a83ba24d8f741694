#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nbsa {

// Integer-labelled segmentation grid. 0 is background, 1..K-1 are organs.
struct LabelMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> labels;  // row-major, h*w entries

  std::uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * w + x]; }
  std::uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * w + x]; }
};

LabelMask make_label_mask(int h, int w);

// ".msk" format: magic "MSK1", u32 LE height, u32 LE width, then h*w u8 labels.
void save_mask(const LabelMask& mask, const std::string& path);
LabelMask load_mask(const std::string& path);

}  // namespace nbsa
