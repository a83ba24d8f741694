#pragma once

#include <iosfwd>
#include <string>

#include "nbsa/tensor.hpp"

namespace nbsa {

// ".tns" format: magic "TNS1", u32 LE ndim, ndim u32 LE dims, then
// product(dims) f32 LE values row-major. Values are stored as f32 and
// widened to f64 on load.
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

void write_tensor(const Tensor& t, std::ostream& os);
Tensor read_tensor(std::istream& is);

}  // namespace nbsa
