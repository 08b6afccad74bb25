#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "makeup/image.hpp"
#include "makeup/regions.hpp"

namespace makeup {

// "#RRGGBB" (case-insensitive, '#' optional) to [0,1] RGB. kParameter on
// malformed input.
Rgb parse_hex_color(std::string_view text);
std::string to_hex_color(const Rgb& rgb);

enum class SigmaPolicy { kEqualize, kExplicit };

struct RegionColorTarget {
  std::string region;
  Rgb mu_tgt{0.0, 0.0, 0.0};
  double alpha = 1.0;
  SigmaPolicy sigma_policy = SigmaPolicy::kEqualize;
  Rgb sigma_tgt{1.0, 1.0, 1.0};  // explicit policy only

  // kParameter unless alpha and mu_tgt lie in [0,1] and, for the explicit
  // policy, every sigma_tgt entry is positive.
  void validate() const;
};

struct RegionStats {
  Rgb mu{0.0, 0.0, 0.0};
  Rgb sigma{0.0, 0.0, 0.0};
};

// Mask-weighted per-channel mean and (population) standard deviation.
RegionStats region_stats(const RasterImage& image, const SoftMask& mask);

// out = x + m * (T(x) - x) with
//   T(x) = (sigma_src / sigma_tgt) * (x - alpha * (mu_src - mu_tgt)),
// where the ratio is 1 under the equalize policy. Pixels with m == 0 are
// copied untouched; the rest are clamped to [0,1].
RasterImage apply_rgb_transfer(const RasterImage& image, const SoftMask& mask,
                               const RegionColorTarget& target);

// skin -> eyeshadow -> lips, then any other region; ties keep input order.
int region_precedence(std::string_view region);

// Applies targets in precedence order, each on the current intermediate.
RasterImage compose_regions(const RasterImage& image, const std::vector<RegionColorTarget>& targets,
                            const RegionMaskSet& masks);

}  // namespace makeup
