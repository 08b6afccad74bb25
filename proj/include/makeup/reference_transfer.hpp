#pragma once

#include <Eigen/Dense>

#include "makeup/image.hpp"
#include "makeup/regions.hpp"

namespace makeup {

// 2x3 matrix acting on (y, x) pixel coordinates.
struct AffineTransform {
  Eigen::Matrix<double, 2, 3> m = Eigen::Matrix<double, 2, 3>::Identity();

  Eigen::Matrix2d linear() const { return m.leftCols<2>(); }
  Eigen::Vector2d translation() const { return m.col(2); }
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return linear() * p + translation(); }
  AffineTransform inverse() const;
};

// Per-pixel (dy, dx) offsets. Warps use the pull-back convention:
// warped(p) = moving(p + u(p)).
struct DisplacementField {
  Grid<double> dy;
  Grid<double> dx;

  DisplacementField() = default;
  DisplacementField(int h, int w) : dy(h, w, 0.0), dx(h, w, 0.0) {}
  int height() const { return dy.height; }
  int width() const { return dy.width; }
  double max_magnitude() const;
};

// Smallest det(I + grad u) over interior pixels (central differences).
double min_jacobian_determinant(const DisplacementField& field);

// Per-channel CDF matching of the src region onto the ref region. Region
// distributions use every pixel with weight > 0; the result is blended
// back by weight, so zero-weight pixels are untouched. Source values are
// quantised into `bins` levels and each level maps to the reference order
// statistic at the same cumulative fraction.
RasterImage histogram_match(const RasterImage& src, const SoftMask& src_mask, const RasterImage& ref,
                            const SoftMask& ref_mask, int bins = 256);

// Maps reference coordinates onto source coordinates by matching the
// centroid and second moments (pixels treated as unit squares) of the two
// masks. kRegistration when either mask is collinear.
AffineTransform estimate_affine(const SoftMask& src_mask, const SoftMask& ref_mask);

// Bilinear pull-back of a mask through an affine map given in the
// ref -> src direction: out(p) = mask(A^-1 p).
SoftMask warp_mask_affine(const SoftMask& mask, const AffineTransform& ref_to_src, int height,
                          int width);

struct DiffeoOptions {
  double smoothing = 2.0;     // Gaussian sigma applied to the field each iteration
  double mask_blur = 1.5;     // pre-blur of both masks, widens the capture range
  int max_iterations = 60;
  double max_step = 0.5;      // pixels per iteration
  double tolerance = 1e-4;    // stop when mean |mismatch| changes less than this
};

// Demons-style residual registration of `moving` onto `fixed`. The field is
// regularised by Gaussian smoothing; an update that would fold the grid is
// discarded and iteration stops. kRegistration if the result still has a
// non-positive Jacobian determinant.
DisplacementField diffeo_refine(const SoftMask& fixed, const SoftMask& moving,
                                const DiffeoOptions& options = {});
inline DisplacementField diffeo_refine(const SoftMask& fixed, const SoftMask& moving,
                                       double smoothing) {
  DiffeoOptions o;
  o.smoothing = smoothing;
  return diffeo_refine(fixed, moving, o);
}

SoftMask warp_mask(const SoftMask& mask, const DisplacementField& field);

double mask_iou(const SoftMask& a, const SoftMask& b);

// Composite src -> ref map for one eye area: phi(p) = A^-1 (p + u(p)).
struct EyeAlignment {
  AffineTransform ref_to_src;
  DisplacementField field;
  SoftMask src_area;         // dilated src eye region
  SoftMask warped_ref_area;  // dilated ref eye region pulled through phi

  Eigen::Vector2d source_to_reference(int y, int x) const;
};

EyeAlignment align_eye_area(const SoftMask& src_area, const SoftMask& ref_area,
                            const DiffeoOptions& options = {});

struct ReferenceOptions {
  int bins = 256;
  RegionConfig regions;
  DiffeoOptions diffeo;
};

// Histogram-matches skin (minus derived eyeshadow) and lips, then pastes
// reference eyeshadow pixels through the composite eye warp weighted by the
// smoothed source eyeshadow mask. Both region sets need skin, lips and
// eyes; failures are annotated with the region name.
RasterImage transfer_reference(const RasterImage& src, const RegionMaskSet& src_regions,
                               const RasterImage& ref, const RegionMaskSet& ref_regions,
                               const ReferenceOptions& options = {});

}  // namespace makeup
