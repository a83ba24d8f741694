#include "nbsa/tensor_io.hpp"

#include <cstring>
#include <fstream>

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
  if (!is) throw ValidationError("tensor stream truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void write_tensor(const Tensor& t, std::ostream& os) {
  os.write("TNS1", 4);
  put_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  const double* d = t.data();
  for (int64_t i = 0; i < t.size(); ++i) put_f32(os, static_cast<float>(d[i]));
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNS1", 4) != 0) throw ValidationError("bad tensor magic (want TNS1)");
  const std::uint32_t ndim = get_u32(is);
  if (ndim == 0 || ndim > 8) throw ValidationError("tensor ndim out of range: " + std::to_string(ndim));
  Shape shape(ndim);
  for (auto& d : shape) d = static_cast<int>(get_u32(is));
  const int64_t n = shape_numel(shape);
  std::vector<double> data(static_cast<size_t>(n));
  for (auto& v : data) v = static_cast<double>(get_f32(is));
  return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const Tensor& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path);
  write_tensor(t, os);
  if (!os) throw std::runtime_error("short write to " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path);
  return read_tensor(is);
}

}  // namespace nbsa
