#include "nbsa/label_mask.hpp"

#include <cstring>
#include <fstream>

#include "nbsa/error.hpp"

namespace nbsa {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF), static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ValidationError("mask stream truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

LabelMask make_label_mask(int h, int w) {
  if (h <= 0 || w <= 0) throw ValidationError("mask dimensions must be positive");
  LabelMask m;
  m.h = h;
  m.w = w;
  m.labels.assign(static_cast<size_t>(h) * w, 0);
  return m;
}

void save_mask(const LabelMask& mask, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path);
  os.write("MSK1", 4);
  put_u32(os, static_cast<std::uint32_t>(mask.h));
  put_u32(os, static_cast<std::uint32_t>(mask.w));
  os.write(reinterpret_cast<const char*>(mask.labels.data()),
           static_cast<std::streamsize>(mask.labels.size()));
  if (!os) throw std::runtime_error("short write to " + path);
}

LabelMask load_mask(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MSK1", 4) != 0) throw ValidationError("bad mask magic (want MSK1)");
  const int h = static_cast<int>(get_u32(is));
  const int w = static_cast<int>(get_u32(is));
  LabelMask m = make_label_mask(h, w);
  is.read(reinterpret_cast<char*>(m.labels.data()), static_cast<std::streamsize>(m.labels.size()));
  if (!is) throw ValidationError("mask payload truncated in " + path);
  return m;
}

}  // namespace nbsa
