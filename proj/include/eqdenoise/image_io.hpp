#pragma once

#include <string>
#include <vector>

#include "eqdenoise/tensor.hpp"

namespace eqd {

// Images are [C,H,W] tensors on the [0,255] float scale.
Tensor load_image(const std::string& path);  // .pgm/.ppm (P2/P3/P5/P6) or .png
// Format chosen by extension; values clipped to [0,255] and quantized to 8 bit.
void save_image(const std::string& path, const Tensor& img);

Tensor to_gray(const Tensor& img);  // luma weights 0.299/0.587/0.114

// Sorted image paths (.pgm/.ppm/.png) directly inside `dir`.
std::vector<std::string> list_images(const std::string& dir);

}  // namespace eqd
