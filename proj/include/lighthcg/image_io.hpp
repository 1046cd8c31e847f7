#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace lighthcg::img {

struct Image {
  int height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> data;  // HWC
};

// 8-bit RGB(A)/gray PNG only. Throws std::runtime_error naming the file.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& im);

// [0,1] doubles (HWC row vector) <-> 8-bit image.
Image from_unit(const Eigen::RowVectorXd& pixels, int h, int w, int c);
Eigen::RowVectorXd to_unit(const Image& im);

// Bilinear resize, channel count preserved.
Image resize(const Image& im, int out_h, int out_w);

}  // namespace lighthcg::img
