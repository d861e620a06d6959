#pragma once

#include "segattr/core.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>

namespace segattr {

/// H x W integer class labels; 0 is background, 255 is ignore.
using LabelMask = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class NetpbmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary P6, maxval up to 65535, scaled to [0,1].
Image read_ppm(const std::filesystem::path& path);
/// Binary P6, 8-bit, round(255 * value).
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Binary P5 read as raw integer labels (no scaling).
LabelMask read_pgm_labels(const std::filesystem::path& path);
void write_pgm_labels(const std::filesystem::path& path, const LabelMask& labels);

/// 8-bit P5 with value round(255 * A).
void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& heatmap);

}  // namespace segattr
