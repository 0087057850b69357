#pragma once

#include <string>
#include <vector>

#include "ganevade/tensor.hpp"

namespace ganevade {

// Images are 3xHxW tensors with values in [0,1] (v/255 on read).
using Image = Tensor<double>;

// Binary PPM (P6), maxval 255. Read accepts standard whitespace and
// '#' comments in the header; write emits exactly
// "P6\n<W> <H>\n255\n" followed by interleaved RGB rows.
Image read_ppm(const std::string& path);

// Clamps to [0,1] and quantizes with round(v*255).
void write_ppm(const Image& img, const std::string& path);

// *.ppm entries of a directory, sorted by filename.
std::vector<std::string> list_ppm_files(const std::string& dir);

std::vector<Image> read_ppm_dir(const std::string& dir);

} // namespace ganevade
