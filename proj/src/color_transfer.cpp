#include "makeup/color_transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "makeup/error.hpp"

namespace makeup {

namespace {

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

void require_dims(const RasterImage& image, const SoftMask& mask) {
  if (!mask.weights.same_dims(image.height(), image.width())) {
    throw Error(ErrorKind::kShape, "mask '" + mask.region + "' is " +
                                       std::to_string(mask.height()) + "x" +
                                       std::to_string(mask.width()) + ", image is " +
                                       std::to_string(image.height()) + "x" +
                                       std::to_string(image.width()));
  }
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

Rgb parse_hex_color(std::string_view text) {
  if (!text.empty() && text.front() == '#') text.remove_prefix(1);
  if (text.size() != 6) {
    throw Error(ErrorKind::kParameter, "color '" + std::string(text) + "' is not #RRGGBB");
  }
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    const int hi = hex_digit(text[2 * c]);
    const int lo = hex_digit(text[2 * c + 1]);
    if (hi < 0 || lo < 0) {
      throw Error(ErrorKind::kParameter, "color '" + std::string(text) + "' is not #RRGGBB");
    }
    out[c] = (hi * 16 + lo) / 255.0;
  }
  return out;
}

std::string to_hex_color(const Rgb& rgb) {
  char buf[8];
  auto byte = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", byte(rgb[0]), byte(rgb[1]), byte(rgb[2]));
  return buf;
}

void RegionColorTarget::validate() const {
  if (!std::isfinite(alpha) || !in_unit(alpha)) {
    throw Error(ErrorKind::kParameter, "alpha for '" + region + "' must lie in [0, 1]");
  }
  for (double v : mu_tgt) {
    if (!std::isfinite(v) || !in_unit(v)) {
      throw Error(ErrorKind::kParameter, "target color for '" + region + "' is out of gamut");
    }
  }
  if (sigma_policy == SigmaPolicy::kExplicit) {
    for (double s : sigma_tgt) {
      if (!std::isfinite(s) || s <= 0.0) {
        throw Error(ErrorKind::kParameter, "sigma_tgt for '" + region + "' must be positive");
      }
    }
  }
}

RegionStats region_stats(const RasterImage& image, const SoftMask& mask) {
  require_dims(image, mask);
  double total = 0.0;
  Rgb sum{0.0, 0.0, 0.0};
  const auto& w = mask.weights.values;
  const auto& px = image.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    total += w[i];
    for (int c = 0; c < 3; ++c) sum[c] += w[i] * px[3 * i + c];
  }
  if (!(total > 0.0)) {
    throw Error(ErrorKind::kEmptyRegion, "region '" + mask.region + "' has zero mask weight");
  }
  RegionStats stats;
  for (int c = 0; c < 3; ++c) stats.mu[c] = sum[c] / total;
  Rgb var{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = px[3 * i + c] - stats.mu[c];
      var[c] += w[i] * d * d;
    }
  }
  for (int c = 0; c < 3; ++c) stats.sigma[c] = std::sqrt(var[c] / total);
  return stats;
}

RasterImage apply_rgb_transfer(const RasterImage& image, const SoftMask& mask,
                               const RegionColorTarget& target) {
  target.validate();
  const RegionStats stats = region_stats(image, mask);
  Rgb shift{}, ratio{1.0, 1.0, 1.0};
  for (int c = 0; c < 3; ++c) {
    shift[c] = target.alpha * (stats.mu[c] - target.mu_tgt[c]);
    if (target.sigma_policy == SigmaPolicy::kExplicit) ratio[c] = stats.sigma[c] / target.sigma_tgt[c];
  }
  RasterImage out = image;
  auto& px = out.data();
  const auto& w = mask.weights.values;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double m = std::min(w[i], 1.0);
    if (!(m > 0.0)) continue;
    for (int c = 0; c < 3; ++c) {
      const double x = px[3 * i + c];
      const double t = ratio[c] * (x - shift[c]);
      px[3 * i + c] = std::clamp(m == 1.0 ? t : x + m * (t - x), 0.0, 1.0);
    }
  }
  return out;
}

int region_precedence(std::string_view region) {
  if (region == "skin") return 0;
  if (region == "eyeshadow") return 1;
  if (region == "lips") return 2;
  return 3;
}

RasterImage compose_regions(const RasterImage& image, const std::vector<RegionColorTarget>& targets,
                            const RegionMaskSet& masks) {
  std::vector<const RegionColorTarget*> order;
  for (const auto& t : targets) {
    if (!masks.has(t.region)) {
      throw Error(ErrorKind::kUnknownRegion, "no mask for target region '" + t.region + "'");
    }
    order.push_back(&t);
  }
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return region_precedence(a->region) < region_precedence(b->region);
  });
  RasterImage current = image;
  for (const auto* t : order) {
    try {
      current = apply_rgb_transfer(current, masks.at(t->region), *t);
    } catch (const Error& e) {
      throw e.annotated("region " + t->region);
    }
  }
  return current;
}

}  // namespace makeup
