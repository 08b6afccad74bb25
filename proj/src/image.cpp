#include "makeup/image.hpp"

#include <algorithm>
#include <cmath>

#include "makeup/error.hpp"

namespace makeup {

RasterImage::RasterImage(int height, int width, Rgb fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw Error(ErrorKind::kShape, "negative image dimensions");
  data_.resize(pixel_count() * 3);
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) data_[i * 3 + c] = fill[c];
  }
}

Rgb RasterImage::pixel(int y, int x) const {
  const std::size_t i = index(y, x) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void RasterImage::set_pixel(int y, int x, const Rgb& rgb) {
  const std::size_t i = index(y, x) * 3;
  data_[i] = rgb[0];
  data_[i + 1] = rgb[1];
  data_[i + 2] = rgb[2];
}

void RasterImage::clamp() {
  for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

bool RasterImage::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool RasterImage::in_unit_range() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

double max_abs_difference(const RasterImage& a, const RasterImage& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw Error(ErrorKind::kShape, "image dimensions differ");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

}  // namespace makeup
