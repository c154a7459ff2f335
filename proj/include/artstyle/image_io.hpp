#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "artstyle/imageproc.hpp"

namespace artstyle {

// PNG and JPEG are detected from the leading bytes, not the extension.
RasterImage decode_image(std::span<const std::uint8_t> bytes);
RasterImage load_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const RasterImage& image);
void save_png(const RasterImage& image, const std::filesystem::path& path);

}  // namespace artstyle
