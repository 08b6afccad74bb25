#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "makeup/color_transfer.hpp"
#include "makeup/error.hpp"
#include "makeup/fixtures.hpp"
#include "makeup/reference_transfer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace makeup;

namespace {

SoftMask disk(int h, int w, double cy, double cx, double ry, double rx) {
  SoftMask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = (y - cy) / ry, v = (x - cx) / rx;
      if (u * u + v * v <= 1.0) m.weights.at(y, x) = 1.0;
    }
  return m;
}

SoftMask eye_area(const RegionMaskSet& set) {
  const StructuringKernel k{KernelShape::kCross, 12, 7};
  const auto grown = dilate(set.at("eyes"), k, 2);
  const auto up = shift_mask(grown, -6, 0);
  SoftMask out = grown;
  for (std::size_t i = 0; i < out.weights.size(); ++i)
    out.weights.values[i] = std::max(out.weights.values[i], up.weights.values[i]);
  return out;
}

SoftMask binarized_support(const SoftMask& m) {
  SoftMask out = m;
  for (auto& v : out.weights.values) v = v > 0.0 ? 1.0 : 0.0;
  return out;
}

}  // namespace

TEST_CASE("histogram matching examples") {
  testing::Gen g(51);
  const auto img = g.image(12, 12);
  const auto m = g.blob_mask(12, 12, 3, 6);
  REQUIRE(!m.empty());
  const auto self = histogram_match(img, m, img, m, 256);
  CHECK(max_abs_difference(self, img) <= 1.0 / 256.0);

  RasterImage flat(8, 8, {0.2, 0.55, 0.9});
  const auto to_flat = histogram_match(img, m, flat, testing::rect_mask(8, 8, 0, 0, 3, 3), 256);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      if (m.weights.at(y, x) == 0.0) {
        CHECK(to_flat.pixel(y, x) == img.pixel(y, x));
      } else {
        CHECK(to_flat.pixel(y, x) == flat.pixel(0, 0));
      }
    }

  CHECK_THROWS_AS(histogram_match(img, SoftMask(12, 12), img, m), Error);
  CHECK_THROWS_AS(histogram_match(img, m, img, SoftMask(12, 12)), Error);
}

TEST_CASE("property: histogram matching equals the CDF oracle on small regions") {
  testing::Gen g(52);
  for (int trial = 0; trial < 60; ++trial) {
    const int h = g.integer(3, 10), w = g.integer(3, 10);
    const auto src = g.image(h, w);
    const auto ref = g.image(g.integer(3, 10), g.integer(3, 10));
    auto sm = g.sparse_mask(h, w, g.uniform(0.2, 0.9));
    auto rm = g.sparse_mask(ref.height(), ref.width(), g.uniform(0.2, 0.9));
    sm.weights.at(0, 0) = 1.0;
    rm.weights.at(0, 0) = 1.0;
    const int bins = trial % 3 == 0 ? 256 : g.integer(2, 64);
    CHECK(histogram_match(src, sm, ref, rm, bins) == testing::cdf_oracle(src, sm, ref, rm, bins));
  }

  // 8-pixel regions with known values: rank matching.
  RasterImage src(1, 8), ref(1, 8);
  const double sv[8] = {0.10, 0.80, 0.30, 0.55, 0.20, 0.95, 0.40, 0.65};
  const double rv[8] = {0.05, 0.15, 0.25, 0.35, 0.45, 0.60, 0.70, 0.90};
  for (int i = 0; i < 8; ++i) {
    src.set_pixel(0, i, {sv[i], sv[i], sv[i]});
    ref.set_pixel(0, i, {rv[i], rv[i], rv[i]});
  }
  SoftMask all(1, 8);
  for (auto& v : all.weights.values) v = 1.0;
  const auto out = histogram_match(src, all, ref, all, 256);
  const double expect[8] = {0.05, 0.70, 0.25, 0.45, 0.15, 0.90, 0.35, 0.60};
  for (int i = 0; i < 8; ++i) CHECK(out.at(0, i, 0) == expect[i]);
}

TEST_CASE("property: histogram matching preserves rank order in the region") {
  testing::Gen g(53);
  for (int trial = 0; trial < 30; ++trial) {
    const auto src = g.image(9, 9), ref = g.image(7, 11);
    const auto sm = g.blob_mask(9, 9, 3, 6), rm = g.blob_mask(7, 11, 3, 6);
    if (sm.empty() || rm.empty()) continue;
    const auto out = histogram_match(src, sm, ref, rm, g.integer(8, 256));
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < sm.weights.size(); ++i)
        for (std::size_t j = 0; j < sm.weights.size(); ++j) {
          if (sm.weights.values[i] == 0.0 || sm.weights.values[j] == 0.0) continue;
          if (src.data()[3 * i + c] <= src.data()[3 * j + c]) CHECK(out.data()[3 * i + c] <= out.data()[3 * j + c]);
        }
  }
}

TEST_CASE("affine estimation examples") {
  const auto src = testing::rect_mask(64, 64, 20, 24, 10, 6);
  const auto same = estimate_affine(src, src);
  CHECK((same.linear() - Eigen::Matrix2d::Identity()).norm() < 1e-6);
  CHECK(same.translation().norm() < 1e-6);

  const auto moved = testing::rect_mask(64, 64, 25, 27, 10, 6);
  const auto t = estimate_affine(src, moved).inverse();
  CHECK(t.translation()(0) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(t.translation()(1) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK((t.linear() - Eigen::Matrix2d::Identity()).norm() < 1e-6);

  const auto big = testing::rect_mask(64, 64, 15, 21, 20, 12);
  const auto s = estimate_affine(src, big).inverse();
  CHECK(std::abs(s.linear()(0, 0) - 2.0) < 1e-3);
  CHECK(std::abs(s.linear()(1, 1) - 2.0) < 1e-3);
  CHECK(std::abs(s.linear()(0, 1)) < 1e-3);
  const Eigen::Vector2d c(24.5, 26.5);
  CHECK((s.apply(c) - c).norm() < 1e-6);

  const auto line = testing::rect_mask(32, 32, 10, 3, 1, 20);
  try {
    estimate_affine(line, src);
    FAIL("expected a registration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kRegistration);
  }
  CHECK_THROWS_AS(estimate_affine(SoftMask(8, 8), src), Error);
}

TEST_CASE("property: affine inverse and mask warping") {
  testing::Gen g(54);
  for (int trial = 0; trial < 20; ++trial) {
    AffineTransform a;
    a.m << g.uniform(0.5, 1.5), g.uniform(-0.3, 0.3), g.uniform(-5, 5), g.uniform(-0.3, 0.3),
        g.uniform(0.5, 1.5), g.uniform(-5, 5);
    const Eigen::Vector2d p(g.uniform(0, 30), g.uniform(0, 30));
    CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-10);
  }
  const auto src = testing::rect_mask(40, 40, 10, 10, 8, 12);
  const auto moved = testing::rect_mask(40, 40, 14, 16, 8, 12);
  const auto a = estimate_affine(src, moved);
  CHECK(mask_iou(warp_mask_affine(moved, a, 40, 40), src) > 0.99);
}

TEST_CASE("diffeomorphic refinement examples") {
  const auto m = disk(48, 48, 24, 24, 9, 13);
  const auto f = diffeo_refine(m, m, 2.0);
  CHECK(f.max_magnitude() < 0.1);
  CHECK(min_jacobian_determinant(f) > 0.0);

  // Bulge: an ellipse with a bump, after affine alignment.
  testing::Gen g(55);
  for (int trial = 0; trial < 5; ++trial) {
    const int h = 64, w = 64;
    const auto src = disk(h, w, 32, 32, 10, 14);
    auto ref = disk(h, w, 30 + g.uniform(-2, 2), 33 + g.uniform(-2, 2), 11, 13);
    const auto bump = disk(h, w, 21 + g.uniform(-1, 1), 33 + g.uniform(-4, 4), 4, 5);
    for (std::size_t i = 0; i < ref.weights.size(); ++i)
      ref.weights.values[i] = std::max(ref.weights.values[i], bump.weights.values[i]);
    const auto a = estimate_affine(src, ref);
    const auto affine_only = warp_mask_affine(ref, a, h, w);
    const auto field = diffeo_refine(src, affine_only);
    CHECK(min_jacobian_determinant(field) > 0.0);
    CHECK(mask_iou(warp_mask(affine_only, field), src) > mask_iou(affine_only, src));
  }
}

TEST_CASE("displacement fields") {
  DisplacementField f(10, 10);
  CHECK(min_jacobian_determinant(f) == doctest::Approx(1.0));
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) f.dx.at(y, x) = -1.5 * x;  // det = 1 - 1.5 < 0
  CHECK(min_jacobian_determinant(f) < 0.0);

  DisplacementField shift(8, 8);
  for (auto& v : shift.dy.values) v = 1.0;
  const auto m = testing::rect_mask(8, 8, 3, 2, 2, 3);
  const auto warped = warp_mask(m, shift);
  CHECK(testing::to_set(warped) == testing::to_set(testing::rect_mask(8, 8, 2, 2, 2, 3)));
}

TEST_CASE("composite eye warp aligns fixture eye areas") {
  // Per eye, as the transfer pairs them; fixture eyes sit left and right of centre.
  auto side = [](const SoftMask& m, bool left) {
    SoftMask out = m;
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x)
        if ((x < m.width() / 2) != left) out.weights.at(y, x) = 0.0;
    return out;
  };
  for (int size : {128, 256}) {
    const auto a = synthetic_face(FixtureFace::kA, size, size);
    const auto b = synthetic_face(FixtureFace::kB, size, size);
    const auto sa = build_region_masks(a.labels), sb = build_region_masks(b.labels);
    for (bool left : {true, false}) {
      const auto src_area = side(eye_area(sa), left), ref_area = side(eye_area(sb), left);
      const auto al = align_eye_area(src_area, ref_area);
      CHECK(mask_iou(al.warped_ref_area, al.src_area) >= 0.9);
      CHECK(min_jacobian_determinant(al.field) > 0.0);
      const auto back = align_eye_area(ref_area, src_area);
      CHECK(mask_iou(back.warped_ref_area, back.src_area) >= 0.9);
    }
  }
}

TEST_CASE("reference transfer examples") {
  const auto a = synthetic_face(FixtureFace::kA, 128, 128);
  const auto b = synthetic_face(FixtureFace::kB, 128, 128);
  const auto sa = build_region_masks(a.labels), sb = build_region_masks(b.labels);

  const auto self = transfer_reference(a.image, sa, a.image, sa);
  CHECK(max_abs_difference(self, a.image) <= 1.0 / 256.0);

  const auto out = transfer_reference(a.image, sa, b.image, sb);
  const auto lips_a = labelmap_to_mask(a.labels, "lips");
  const auto lips_b = labelmap_to_mask(b.labels, "lips");
  const auto got = region_stats(out, lips_a).mu;
  const auto want = region_stats(b.image, lips_b).mu;
  for (int c = 0; c < 3; ++c) CHECK(std::abs(got[c] - want[c]) < 1e-3);

  // Only skin, lips and eyeshadow pixels may change.
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const bool region = sa.at("skin").weights.at(y, x) > 0.0 || sa.at("lips").weights.at(y, x) > 0.0 ||
                          sa.at("eyeshadow").weights.at(y, x) > 0.0;
      if (!region) CHECK(out.pixel(y, x) == a.image.pixel(y, x));
    }

  // The pasted eyeshadow pulls the reference's purple into the source.
  const auto shadow = sa.at("eyeshadow");
  const auto purple = region_stats(b.image, binarized_support(sb.at("eyeshadow"))).mu;
  auto dist = [&](const Rgb& c) {
    return std::hypot(c[0] - purple[0], c[1] - purple[1], c[2] - purple[2]);
  };
  CHECK(dist(region_stats(out, shadow).mu) < 0.5 * dist(region_stats(a.image, shadow).mu));

  RegionMaskSet no_eyes = sb;
  no_eyes.masks.erase("eyes");
  try {
    transfer_reference(a.image, sa, b.image, no_eyes);
    FAIL("expected an error naming eyes");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("eyes") != std::string::npos);
  }
}
