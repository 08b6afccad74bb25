#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "makeup/image.hpp"
#include "makeup/latent.hpp"
#include "makeup/regions.hpp"

namespace testing {

// Seeded generator shared by the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(eng_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  bool coin(double p = 0.5) { return uniform() < p; }

  makeup::Latent latent(const makeup::Shape& shape, double sd = 1.0) {
    makeup::Latent z(shape);
    for (auto& v : z.values()) v = normal(0.0, sd);
    return z;
  }

  makeup::RasterImage image(int h, int w, double lo = 0.0, double hi = 1.0) {
    makeup::RasterImage img(h, w);
    for (auto& v : img.data()) v = uniform(lo, hi);
    return img;
  }

  // Union of a few random rectangles.
  makeup::SoftMask blob_mask(int h, int w, int rects, int max_side) {
    makeup::SoftMask m(h, w);
    for (int r = 0; r < rects; ++r) {
      const int rh = integer(1, max_side);
      const int rw = integer(1, max_side);
      const int y0 = integer(0, h - 1);
      const int x0 = integer(0, w - 1);
      for (int y = y0; y < std::min(h, y0 + rh); ++y)
        for (int x = x0; x < std::min(w, x0 + rw); ++x) m.weights.at(y, x) = 1.0;
    }
    return m;
  }

  makeup::SoftMask sparse_mask(int h, int w, double density) {
    makeup::SoftMask m(h, w);
    for (auto& v : m.weights.values) v = coin(density) ? 1.0 : 0.0;
    return m;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

inline makeup::SoftMask rect_mask(int h, int w, int y0, int x0, int rh, int rw) {
  makeup::SoftMask m(h, w);
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x)
      if (m.weights.contains(y, x)) m.weights.at(y, x) = 1.0;
  return m;
}

using PixelSet = std::set<std::pair<int, int>>;

inline PixelSet to_set(const makeup::SoftMask& m) {
  PixelSet s;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.weights.at(y, x) > 0.0) s.insert({y, x});
  return s;
}

// Explicit footprint of a cross or box kernel, anchored at (h/2, w/2),
// enumerated independently of StructuringKernel::offsets.
inline std::vector<std::pair<int, int>> footprint(bool cross, int kh, int kw) {
  std::vector<std::pair<int, int>> out;
  const int ay = kh / 2, ax = kw / 2;
  if (cross) {
    for (int x = 0; x < kw; ++x) out.push_back({0, x - ax});
    for (int y = 0; y < kh; ++y)
      if (y != ay) out.push_back({y - ay, 0});
  } else {
    for (int y = 0; y < kh; ++y)
      for (int x = 0; x < kw; ++x) out.push_back({y - ay, x - ax});
  }
  return out;
}

// Minkowski sum of a pixel set with a footprint, clipped to the frame.
inline PixelSet brute_dilate(const PixelSet& s, const std::vector<std::pair<int, int>>& fp, int h,
                             int w, int iterations) {
  PixelSet cur = s;
  for (int i = 0; i < iterations; ++i) {
    PixelSet next;
    for (const auto& [y, x] : cur)
      for (const auto& [dy, dx] : fp) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w) next.insert({yy, xx});
      }
    cur = std::move(next);
  }
  return cur;
}

// Multi-source BFS from every zero pixel, 4-connected.
inline makeup::Grid<int> bfs_distance(const makeup::SoftMask& m) {
  const int h = m.height(), w = m.width();
  makeup::Grid<int> d(h, w, -1);
  std::deque<std::pair<int, int>> q;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!(m.weights.at(y, x) > 0.0)) {
        d.at(y, x) = 0;
        q.push_back({y, x});
      }
  const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  while (!q.empty()) {
    const auto [y, x] = q.front();
    q.pop_front();
    for (const auto& dd : dirs) {
      const int yy = y + dd[0], xx = x + dd[1];
      if (yy < 0 || yy >= h || xx < 0 || xx >= w || d.at(yy, xx) >= 0) continue;
      d.at(yy, xx) = d.at(y, x) + 1;
      q.push_back({yy, xx});
    }
  }
  return d;
}

inline double rel_l2(const makeup::Latent& a, const makeup::Latent& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  std::random_device rd;
  auto p = std::filesystem::temp_directory_path() /
           ("makeup-test-" + tag + "-" + std::to_string(rd()));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
