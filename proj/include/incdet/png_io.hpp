#pragma once

#include <array>
#include <string>
#include <vector>

#include "incdet/codec.hpp"
#include "incdet/tensor.hpp"

namespace incdet {

// 8-bit RGB files. Tensors are [3,H,W] with values in [0,1]; out-of-range
// values are clamped on write. Throws std::runtime_error on I/O failure.
void write_png(const std::string& path, const Tensor& image);
Tensor read_png(const std::string& path);

// Burns detection rectangles and their scores (two-decimal, tiny bitmap
// digits) into a copy of the image. Colors cycle per class id.
Tensor annotate_detections(const Tensor& image,
                           const std::vector<Detection>& detections);

}  // namespace incdet
