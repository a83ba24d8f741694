#include "nbsa/pgm.hpp"

#include <fstream>

#include "nbsa/error.hpp"

namespace nbsa {

void write_pgm(const std::string& path, int h, int w, const std::vector<unsigned char>& pixels) {
  if (static_cast<size_t>(h) * w != pixels.size())
    throw ValidationError("write_pgm: pixel count does not match dimensions");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!os) throw std::runtime_error("short write to " + path);
}

}  // namespace nbsa
