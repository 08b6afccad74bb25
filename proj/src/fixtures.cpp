#include "makeup/fixtures.hpp"

#include <cmath>

#include "makeup/error.hpp"

namespace makeup {

namespace {

struct Geometry {
  double cx = 0.5, cy = 0.52, rx = 0.30, ry = 0.38;  // face ellipse
  double eye_dx = 0.125, eye_y = 0.44, eye_rx = 0.07, eye_ry = 0.032;
  double brow_y = 0.355, brow_h = 0.03;
  double lip_y = 0.72, lip_rx = 0.10, lip_ry = 0.04;
};

struct Palette {
  Rgb background{0.90, 0.90, 0.92};
  Rgb skin{0.88, 0.72, 0.62};
  Rgb hair{0.20, 0.13, 0.10};
  Rgb brow{0.30, 0.20, 0.15};
  Rgb eye{0.22, 0.17, 0.15};
  Rgb nose{0.84, 0.67, 0.57};
  Rgb upper_lip{0.74, 0.48, 0.47};
  Rgb lower_lip{0.78, 0.52, 0.50};
  Rgb neck{0.82, 0.66, 0.56};
};

double q8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

bool in_ellipse(double u, double v, double cx, double cy, double rx, double ry) {
  const double a = (u - cx) / rx;
  const double b = (v - cy) / ry;
  return a * a + b * b <= 1.0;
}

std::optional<Rgb> p_eyeshadow(FixtureFace which) {
  if (which == FixtureFace::kB) return Rgb{0.55, 0.35, 0.62};
  return std::nullopt;
}

void draw(FixtureFace which, int h2, int w2, Grid<std::uint8_t>& labels, RasterImage& image) {
  Geometry g;
  Palette p;
  if (which == FixtureFace::kB) {
    g.cx = 0.51;
    g.cy = 0.53;
    g.rx = 0.31;
    g.ry = 0.39;
    g.eye_dx = 0.13;
    g.eye_y = 0.45;
    g.eye_rx = 0.075;
    g.eye_ry = 0.035;
    g.lip_y = 0.73;
    g.lip_rx = 0.11;
    p.skin = {0.80, 0.62, 0.50};
    p.nose = {0.76, 0.58, 0.47};
    p.neck = {0.74, 0.56, 0.45};
    p.upper_lip = {0.74, 0.14, 0.22};
    p.lower_lip = p.upper_lip;
  }
  for (int y = 0; y < h2; ++y) {
    for (int x = 0; x < w2; ++x) {
      const double u = (x + 0.5) / w2;
      const double v = (y + 0.5) / h2;
      int label = 0;
      Rgb c = p.background;
      const bool face = in_ellipse(u, v, g.cx, g.cy, g.rx, g.ry);
      if (!face && in_ellipse(u, v, g.cx, g.cy - 0.06, g.rx + 0.06, g.ry + 0.02) && v < g.cy) {
        label = 17;
        c = p.hair;
      }
      if (!face && std::abs(u - g.cx) < 0.10 && v > g.cy + 0.25) {
        label = 14;
        c = p.neck;
      }
      if (face) {
        label = 1;
        // Soft vertical shading keeps skin statistics non-degenerate.
        const double shade = 0.04 * (v - g.cy) + 0.02 * std::cos(9.0 * u);
        c = {p.skin[0] - shade, p.skin[1] - shade, p.skin[2] - shade};
        for (int side : {-1, 1}) {
          const double ex = g.cx + side * g.eye_dx;
          if (std::abs(u - ex) < g.eye_rx + 0.01 && std::abs(v - g.brow_y - (g.eye_y - 0.44)) < g.brow_h / 2) {
            label = side < 0 ? 2 : 3;
            c = p.brow;
          }
          if (in_ellipse(u, v, ex, g.eye_y, g.eye_rx, g.eye_ry)) {
            label = side < 0 ? 4 : 5;
            c = p.eye;
          }
        }
        if (std::abs(u - g.cx) < 0.03 && v > g.eye_y + 0.06 && v < g.lip_y - 0.08) {
          label = 10;
          c = p.nose;
        }
        if (in_ellipse(u, v, g.cx, g.lip_y, g.lip_rx, g.lip_ry)) {
          const bool upper = v < g.lip_y;
          label = upper ? 12 : 13;
          c = upper ? p.upper_lip : p.lower_lip;
        }
      }
      labels.at(y, x) = static_cast<std::uint8_t>(label);
      image.set_pixel(y, x, {q8(c[0]), q8(c[1]), q8(c[2])});
    }
  }
}

}  // namespace

Fixture synthetic_face(FixtureFace which, int height, int width) {
  if (height < 32 || width < 32 || height % 2 || width % 2) {
    throw Error(ErrorKind::kParameter, "fixture size must be even and at least 32");
  }
  const int h2 = height / 2;
  const int w2 = width / 2;
  Grid<std::uint8_t> small_labels(h2, w2);
  RasterImage small(h2, w2);
  draw(which, h2, w2, small_labels, small);

  Fixture f;
  f.image = RasterImage(height, width);
  f.labels.grid = Grid<std::uint8_t>(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      f.image.set_pixel(y, x, small.pixel(y / 2, x / 2));
      f.labels.grid.at(y, x) = small_labels.at(y / 2, x / 2);
    }
  }
  if (p_eyeshadow(which)) {
    // Paint the 2x2 blocks that lie inside the derived eyeshadow area, so
    // B's makeup stays within its region masks and pool2 round-trips it.
    const RegionMaskSet masks = build_region_masks(f.labels);
    const Rgb paint = *p_eyeshadow(which);
    const SoftMask& shadow = masks.at("eyeshadow");
    for (int y = 0; y < height; y += 2) {
      for (int x = 0; x < width; x += 2) {
        const bool inside = shadow.weights.at(y, x) > 0.0 && shadow.weights.at(y + 1, x) > 0.0 &&
                            shadow.weights.at(y, x + 1) > 0.0 && shadow.weights.at(y + 1, x + 1) > 0.0;
        if (!inside) continue;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            f.image.set_pixel(y + dy, x + dx, {q8(paint[0]), q8(paint[1]), q8(paint[2])});
      }
    }
  }
  return f;
}

std::optional<FixtureFace> parse_fixture_name(std::string_view name) {
  if (name == "a" || name == "A" || name == "face-a" || name == "synthetic-a") return FixtureFace::kA;
  if (name == "b" || name == "B" || name == "face-b" || name == "synthetic-b") return FixtureFace::kB;
  return std::nullopt;
}

const char* fixture_name(FixtureFace which) { return which == FixtureFace::kA ? "face-a" : "face-b"; }

std::optional<LabelMap> fixture_segment(const RasterImage& image) {
  if (image.height() < 32 || image.width() < 32 || image.height() % 2 || image.width() % 2) {
    return std::nullopt;
  }
  for (FixtureFace which : {FixtureFace::kA, FixtureFace::kB}) {
    Fixture f = synthetic_face(which, image.height(), image.width());
    if (max_abs_difference(f.image, image) <= 0.5 / 255.0) return f.labels;
  }
  return std::nullopt;
}

}  // namespace makeup
