#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "makeup/image.hpp"
#include "makeup/regions.hpp"

namespace makeup {

using Bytes = std::vector<std::uint8_t>;

// PNG or JPEG bytes (8 or 16 bit, gray/RGB/RGBA) to an RGB image in [0,1].
// kIo on undecodable data.
RasterImage decode_image(const Bytes& bytes);
RasterImage read_image(const std::filesystem::path& path);

// 8-bit RGB PNG.
Bytes encode_png(const RasterImage& image);
void write_image(const std::filesystem::path& path, const RasterImage& image);

// Single-channel 8-bit label raster. Three-channel files are accepted when
// all channels agree.
Grid<std::uint8_t> decode_label_grid(const Bytes& bytes);
Grid<std::uint8_t> read_label_grid(const std::filesystem::path& path);
Bytes encode_label_png(const Grid<std::uint8_t>& grid);

// Mask weights scaled to 0..255 grayscale.
Bytes encode_mask_png(const SoftMask& mask);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);
std::string read_text_file(const std::filesystem::path& path);

// Cheap header sniffing: "png", "jpeg" or "".
std::string sniff_image_format(const Bytes& bytes);
// Width/height from a PNG IHDR; {0, 0} when not a PNG.
std::pair<int, int> png_dimensions(const Bytes& bytes);

}  // namespace makeup
