#pragma once

#include <string>
#include <vector>

namespace nbsa {

// Binary PGM (P5, maxval 255).
void write_pgm(const std::string& path, int h, int w, const std::vector<unsigned char>& pixels);

}  // namespace nbsa
