#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace makeup {

// Row-major 2-D grid.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int h, int w, T fill = T{})
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  T& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
  std::size_t size() const { return values.size(); }
  bool same_dims(int h, int w) const { return height == h && width == w; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using Rgb = std::array<double, 3>;

// H x W x 3 image, RGB order, values in [0, 1] at module boundaries.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int height, int width, Rgb fill = {0.0, 0.0, 0.0});

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

  double& at(int y, int x, int c) { return data_[index(y, x) * 3 + c]; }
  double at(int y, int x, int c) const { return data_[index(y, x) * 3 + c]; }
  Rgb pixel(int y, int x) const;
  void set_pixel(int y, int x, const Rgb& rgb);

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void clamp();
  bool all_finite() const;
  bool in_unit_range() const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

double max_abs_difference(const RasterImage& a, const RasterImage& b);

}  // namespace makeup
