#include "makeup/reference_transfer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <opencv2/imgproc.hpp>

#include "makeup/error.hpp"

namespace makeup {

namespace {

double sample_bilinear(const Grid<double>& g, double y, double x, bool clamp_border) {
  if (clamp_border) {
    y = std::clamp(y, 0.0, g.height - 1.0);
    x = std::clamp(x, 0.0, g.width - 1.0);
  }
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0;
  const double fx = x - x0;
  auto get = [&](int yy, int xx) { return g.contains(yy, xx) ? g.at(yy, xx) : 0.0; };
  double v = (1 - fy) * (1 - fx) * get(y0, x0);
  if (fx > 0) v += (1 - fy) * fx * get(y0, x0 + 1);
  if (fy > 0) v += fy * (1 - fx) * get(y0 + 1, x0);
  if (fy > 0 && fx > 0) v += fy * fx * get(y0 + 1, x0 + 1);
  return v;
}

cv::Mat to_mat(const Grid<double>& g) {
  cv::Mat m(g.height, g.width, CV_64F);
  std::copy(g.values.begin(), g.values.end(), m.ptr<double>());
  return m;
}

Grid<double> from_mat(const cv::Mat& m) {
  Grid<double> g(m.rows, m.cols);
  std::copy(m.ptr<double>(), m.ptr<double>() + g.size(), g.values.begin());
  return g;
}

Grid<double> gaussian(const Grid<double>& g, double sigma) {
  if (sigma <= 0.0) return g;
  cv::Mat out;
  cv::GaussianBlur(to_mat(g), out, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);
  return from_mat(out);
}

SoftMask binarized(const SoftMask& m) {
  SoftMask out = m;
  for (double& w : out.weights.values) w = w > 0.0 ? 1.0 : 0.0;
  return out;
}

SoftMask mask_union(const SoftMask& a, const SoftMask& b) {
  SoftMask out = a;
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    out.weights.values[i] = std::max(a.weights.values[i], b.weights.values[i]);
  }
  return out;
}

struct Moments {
  Eigen::Vector2d center;
  Eigen::Matrix2d cov;
};

Moments mask_moments(const SoftMask& mask, const char* which) {
  double total = 0.0;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const double w = mask.weights.at(y, x);
      if (w <= 0.0) continue;
      total += w;
      sum += w * Eigen::Vector2d(y, x);
    }
  }
  if (!(total > 0.0)) throw Error(ErrorKind::kEmptyRegion, std::string(which) + " mask is empty");
  Moments mo;
  mo.center = sum / total;
  mo.cov.setZero();
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const double w = mask.weights.at(y, x);
      if (w <= 0.0) continue;
      const Eigen::Vector2d d = Eigen::Vector2d(y, x) - mo.center;
      mo.cov += w * d * d.transpose();
    }
  }
  mo.cov /= total;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(mo.cov);
  if (eig.eigenvalues().minCoeff() < 1e-9) {
    throw Error(ErrorKind::kRegistration, std::string(which) + " mask has degenerate second moments");
  }
  // Unit-square pixels add 1/12 variance per axis.
  mo.cov += Eigen::Matrix2d::Identity() / 12.0;
  return mo;
}

void check_region(const RegionMaskSet& set, const std::string& name, const char* side) {
  if (!set.has(name)) {
    throw Error(ErrorKind::kUnknownRegion, std::string(side) + " has no '" + name + "' region")
        .annotated("region " + name);
  }
  if (set.at(name).empty()) {
    throw Error(ErrorKind::kEmptyRegion, std::string(side) + " '" + name + "' region is empty")
        .annotated("region " + name);
  }
}

// Connected eye blobs ordered left to right.
std::vector<SoftMask> eye_components(const SoftMask& eyes) {
  cv::Mat bin(eyes.height(), eyes.width(), CV_8U);
  for (std::size_t i = 0; i < eyes.weights.size(); ++i) {
    bin.data[i] = eyes.weights.values[i] > 0.0 ? 1 : 0;
  }
  cv::Mat labels, stats, centroids;
  const int n = cv::connectedComponentsWithStats(bin, labels, stats, centroids, 8, CV_32S);
  std::vector<std::pair<double, SoftMask>> parts;
  for (int k = 1; k < n; ++k) {
    SoftMask m(eyes.height(), eyes.width(), "eyes");
    for (int y = 0; y < eyes.height(); ++y) {
      for (int x = 0; x < eyes.width(); ++x) {
        if (labels.at<int>(y, x) == k) m.weights.at(y, x) = 1.0;
      }
    }
    parts.emplace_back(centroids.at<double>(k, 0), std::move(m));
  }
  std::sort(parts.begin(), parts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<SoftMask> out;
  for (auto& p : parts) out.push_back(std::move(p.second));
  return out;
}

SoftMask eye_area(const SoftMask& eyes, const RegionConfig& config) {
  const SoftMask grown = dilate(eyes, config.eyeshadow_kernel, config.eyeshadow_iterations);
  const Offset s = config.eyeshadow_shift.value_or(Offset{-(config.eyeshadow_kernel.height / 2), 0});
  SoftMask area = mask_union(grown, shift_mask(grown, s.dy, s.dx));
  area.region = "eye_area";
  return area;
}

}  // namespace

AffineTransform AffineTransform::inverse() const {
  const Eigen::Matrix2d l = linear();
  if (std::abs(l.determinant()) < 1e-12) {
    throw Error(ErrorKind::kRegistration, "affine transform is not invertible");
  }
  AffineTransform inv;
  const Eigen::Matrix2d li = l.inverse();
  inv.m.leftCols<2>() = li;
  inv.m.col(2) = -li * translation();
  return inv;
}

double DisplacementField::max_magnitude() const {
  double best = 0.0;
  for (std::size_t i = 0; i < dy.size(); ++i) {
    best = std::max(best, std::hypot(dy.values[i], dx.values[i]));
  }
  return best;
}

double min_jacobian_determinant(const DisplacementField& f) {
  double best = std::numeric_limits<double>::infinity();
  for (int y = 1; y + 1 < f.height(); ++y) {
    for (int x = 1; x + 1 < f.width(); ++x) {
      const double dyy = (f.dy.at(y + 1, x) - f.dy.at(y - 1, x)) / 2;
      const double dyx = (f.dy.at(y, x + 1) - f.dy.at(y, x - 1)) / 2;
      const double dxy = (f.dx.at(y + 1, x) - f.dx.at(y - 1, x)) / 2;
      const double dxx = (f.dx.at(y, x + 1) - f.dx.at(y, x - 1)) / 2;
      best = std::min(best, (1 + dyy) * (1 + dxx) - dyx * dxy);
    }
  }
  return best;
}

RasterImage histogram_match(const RasterImage& src, const SoftMask& src_mask, const RasterImage& ref,
                            const SoftMask& ref_mask, int bins) {
  if (bins < 1) throw Error(ErrorKind::kParameter, "bins must be >= 1");
  if (!src_mask.weights.same_dims(src.height(), src.width()) ||
      !ref_mask.weights.same_dims(ref.height(), ref.width())) {
    throw Error(ErrorKind::kShape, "histogram_match mask and image sizes differ");
  }
  std::vector<std::size_t> src_idx, ref_idx;
  for (std::size_t i = 0; i < src_mask.weights.size(); ++i) {
    if (src_mask.weights.values[i] > 0.0) src_idx.push_back(i);
  }
  for (std::size_t i = 0; i < ref_mask.weights.size(); ++i) {
    if (ref_mask.weights.values[i] > 0.0) ref_idx.push_back(i);
  }
  if (src_idx.empty()) throw Error(ErrorKind::kEmptyRegion, "source '" + src_mask.region + "' mask is empty");
  if (ref_idx.empty()) throw Error(ErrorKind::kEmptyRegion, "reference '" + ref_mask.region + "' mask is empty");

  const std::uint64_t n_src = src_idx.size();
  const std::uint64_t n_ref = ref_idx.size();
  auto bin_of = [bins](double v) {
    return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1);
  };

  RasterImage out = src;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ref_sorted;
    ref_sorted.reserve(n_ref);
    for (std::size_t i : ref_idx) ref_sorted.push_back(ref.data()[3 * i + c]);
    std::sort(ref_sorted.begin(), ref_sorted.end());

    std::vector<std::uint64_t> cdf(bins, 0);
    for (std::size_t i : src_idx) ++cdf[bin_of(src.data()[3 * i + c])];
    for (int b = 1; b < bins; ++b) cdf[b] += cdf[b - 1];

    // Level b takes the smallest reference rank k with (k+1)/n_ref >= cdf[b]/n_src.
    std::vector<double> lut(bins);
    for (int b = 0; b < bins; ++b) {
      const std::uint64_t k = (cdf[b] * n_ref + n_src - 1) / n_src;
      lut[b] = ref_sorted[k == 0 ? 0 : k - 1];
    }
    for (std::size_t i : src_idx) {
      const double m = std::min(src_mask.weights.values[i], 1.0);
      double& x = out.data()[3 * i + c];
      const double v = lut[bin_of(x)];
      x = m == 1.0 ? v : x + m * (v - x);
    }
  }
  return out;
}

AffineTransform estimate_affine(const SoftMask& src_mask, const SoftMask& ref_mask) {
  const Moments s = mask_moments(src_mask, "source");
  const Moments r = mask_moments(ref_mask, "reference");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(s.cov), er(r.cov);
  const Eigen::Matrix2d a = es.operatorSqrt() * er.operatorInverseSqrt();
  AffineTransform t;
  t.m.leftCols<2>() = a;
  t.m.col(2) = s.center - a * r.center;
  return t;
}

SoftMask warp_mask_affine(const SoftMask& mask, const AffineTransform& ref_to_src, int height,
                          int width) {
  const AffineTransform inv = ref_to_src.inverse();
  SoftMask out(height, width, mask.region);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d q = inv.apply(Eigen::Vector2d(y, x));
      out.weights.at(y, x) = std::clamp(sample_bilinear(mask.weights, q[0], q[1], false), 0.0, 1.0);
    }
  }
  return out;
}

SoftMask warp_mask(const SoftMask& mask, const DisplacementField& field) {
  if (!field.dy.same_dims(mask.height(), mask.width())) {
    throw Error(ErrorKind::kShape, "displacement field and mask sizes differ");
  }
  SoftMask out(mask.height(), mask.width(), mask.region);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      out.weights.at(y, x) = std::clamp(
          sample_bilinear(mask.weights, y + field.dy.at(y, x), x + field.dx.at(y, x), false), 0.0, 1.0);
    }
  }
  return out;
}

double mask_iou(const SoftMask& a, const SoftMask& b) {
  if (!a.weights.same_dims(b.height(), b.width())) throw Error(ErrorKind::kShape, "mask sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    const bool pa = a.weights.values[i] >= 0.5;
    const bool pb = b.weights.values[i] >= 0.5;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

DisplacementField diffeo_refine(const SoftMask& fixed, const SoftMask& moving,
                                const DiffeoOptions& options) {
  if (!fixed.weights.same_dims(moving.height(), moving.width())) {
    throw Error(ErrorKind::kShape, "diffeo_refine mask sizes differ");
  }
  if (options.smoothing < 0.0 || options.max_iterations < 0 || !(options.max_step > 0.0)) {
    throw Error(ErrorKind::kParameter, "invalid diffeo options");
  }
  const int h = fixed.height();
  const int w = fixed.width();
  const Grid<double> f = gaussian(fixed.weights, options.mask_blur);
  const Grid<double> mv = gaussian(moving.weights, options.mask_blur);

  auto warped = [&](const DisplacementField& u) {
    Grid<double> out(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(y, x) = sample_bilinear(mv, y + u.dy.at(y, x), x + u.dx.at(y, x), true);
      }
    }
    return out;
  };
  auto mismatch = [&](const Grid<double>& mw) {
    double s = 0.0;
    for (std::size_t i = 0; i < mw.size(); ++i) s += std::abs(mw.values[i] - f.values[i]);
    return s / static_cast<double>(mw.size());
  };
  auto grad = [](const Grid<double>& g, int y, int x) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, g.height - 1);
    const int xm = std::max(x - 1, 0), xp = std::min(x + 1, g.width - 1);
    return Eigen::Vector2d((g.at(yp, x) - g.at(ym, x)) / std::max(1, yp - ym),
                           (g.at(y, xp) - g.at(y, xm)) / std::max(1, xp - xm));
  };

  DisplacementField u(h, w);
  Grid<double> mw = warped(u);
  double err = mismatch(mw);
  for (int it = 0; it < options.max_iterations; ++it) {
    DisplacementField next = u;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double diff = mw.at(y, x) - f.at(y, x);
        if (diff == 0.0) continue;
        const Eigen::Vector2d g = 0.5 * (grad(f, y, x) + grad(mw, y, x));
        const double denom = g.squaredNorm() + diff * diff;
        if (denom < 1e-12) continue;
        Eigen::Vector2d step = -diff * g / denom;
        const double len = step.norm();
        if (len > options.max_step) step *= options.max_step / len;
        next.dy.at(y, x) += step[0];
        next.dx.at(y, x) += step[1];
      }
    }
    next.dy = gaussian(next.dy, options.smoothing);
    next.dx = gaussian(next.dx, options.smoothing);
    if (min_jacobian_determinant(next) <= 0.0) break;
    Grid<double> next_mw = warped(next);
    const double next_err = mismatch(next_mw);
    if (!(next_err < err)) break;
    const double gain = err - next_err;
    u = std::move(next);
    mw = std::move(next_mw);
    err = next_err;
    if (gain < options.tolerance) break;
  }
  if (!(min_jacobian_determinant(u) > 0.0)) {
    throw Error(ErrorKind::kRegistration, "displacement field folds (non-positive Jacobian)");
  }
  return u;
}

Eigen::Vector2d EyeAlignment::source_to_reference(int y, int x) const {
  const Eigen::Vector2d p(y + field.dy.at(y, x), x + field.dx.at(y, x));
  return ref_to_src.inverse().apply(p);
}

EyeAlignment align_eye_area(const SoftMask& src_area, const SoftMask& ref_area,
                            const DiffeoOptions& options) {
  EyeAlignment a;
  a.ref_to_src = estimate_affine(src_area, ref_area);
  const SoftMask affine_ref = warp_mask_affine(ref_area, a.ref_to_src, src_area.height(), src_area.width());
  a.field = diffeo_refine(src_area, affine_ref, options);
  a.src_area = src_area;
  a.warped_ref_area = warp_mask(affine_ref, a.field);
  return a;
}

RasterImage transfer_reference(const RasterImage& src, const RegionMaskSet& src_regions,
                               const RasterImage& ref, const RegionMaskSet& ref_regions,
                               const ReferenceOptions& options) {
  for (const char* name : {"skin", "lips", "eyes"}) {
    check_region(src_regions, name, "source");
    check_region(ref_regions, name, "reference");
  }
  RasterImage out = src;

  auto skin_without_shadow = [](const RegionMaskSet& set) {
    SoftMask skin = binarized(set.at("skin"));
    if (set.has("eyeshadow")) {
      const SoftMask& shadow = set.at("eyeshadow");
      for (std::size_t i = 0; i < skin.weights.size(); ++i) {
        if (shadow.weights.values[i] > 0.0) skin.weights.values[i] = 0.0;
      }
    }
    return skin;
  };
  try {
    out = histogram_match(out, skin_without_shadow(src_regions), ref, skin_without_shadow(ref_regions),
                          options.bins);
  } catch (const Error& e) {
    throw e.annotated("region skin");
  }
  try {
    out = histogram_match(out, binarized(src_regions.at("lips")), ref,
                          binarized(ref_regions.at("lips")), options.bins);
  } catch (const Error& e) {
    throw e.annotated("region lips");
  }

  try {
    const SoftMask& src_eyes = src_regions.at("eyes");
    const SoftMask& ref_eyes = ref_regions.at("eyes");
    SoftMask paste = src_regions.has("eyeshadow")
                         ? src_regions.at("eyeshadow")
                         : gradation_smooth(build_eyeshadow_mask(binarized(src_eyes),
                                                                 options.regions.eyeshadow_kernel,
                                                                 options.regions.eyeshadow_iterations,
                                                                 options.regions.eyeshadow_shift),
                                            options.regions.eyeshadow_decay);
    if (!paste.weights.same_dims(src.height(), src.width())) {
      throw Error(ErrorKind::kShape, "eyeshadow mask size differs from the image");
    }

    std::vector<SoftMask> src_parts = eye_components(src_eyes);
    std::vector<SoftMask> ref_parts = eye_components(ref_eyes);
    if (src_parts.size() != ref_parts.size() || src_parts.size() > 2) {
      src_parts = {src_eyes};
      ref_parts = {ref_eyes};
    }
    std::vector<EyeAlignment> aligned;
    std::vector<Eigen::Vector2d> centers;
    for (std::size_t k = 0; k < src_parts.size(); ++k) {
      aligned.push_back(align_eye_area(eye_area(src_parts[k], options.regions),
                                       eye_area(ref_parts[k], options.regions), options.diffeo));
      centers.push_back(mask_moments(src_parts[k], "source").center);
    }

    Grid<double> ref_channel[3];
    for (int c = 0; c < 3; ++c) {
      ref_channel[c] = Grid<double>(ref.height(), ref.width());
      for (std::size_t i = 0; i < ref_channel[c].size(); ++i) ref_channel[c].values[i] = ref.data()[3 * i + c];
    }
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        const double m = std::min(paste.weights.at(y, x), 1.0);
        if (!(m > 0.0)) continue;
        std::size_t best = 0;
        for (std::size_t k = 1; k < centers.size(); ++k) {
          if ((centers[k] - Eigen::Vector2d(y, x)).norm() < (centers[best] - Eigen::Vector2d(y, x)).norm()) best = k;
        }
        const Eigen::Vector2d q = aligned[best].source_to_reference(y, x);
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(sample_bilinear(ref_channel[c], q[0], q[1], true), 0.0, 1.0);
          double& o = out.at(y, x, c);
          o = m == 1.0 ? v : o + m * (v - o);
        }
      }
    }
  } catch (const Error& e) {
    throw e.annotated("region eyes");
  }
  return out;
}

}  // namespace makeup
