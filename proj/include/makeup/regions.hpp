#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "makeup/image.hpp"

namespace makeup {

// Region names a label mapping may refer to. "eyeshadow" is derived and
// never appears in a mapping.
const std::vector<std::string>& known_regions();
bool is_known_region(std::string_view name);

using LabelMapping = std::map<int, std::string>;

// 19-class face-parsing convention (skin=1, brows=2/3, eyes=4/5, nose=10,
// lips=12/13, hair=17, ...).
LabelMapping default_label_mapping();

// "label=region" per line; blank lines and '#' comments are ignored.
// Unknown region names or malformed lines throw kConfiguration.
LabelMapping parse_label_mapping(std::string_view text);

struct LabelMap {
  Grid<std::uint8_t> grid;
  LabelMapping mapping = default_label_mapping();

  // Labels without an entry map to "other".
  const std::string& region_of(int label) const;
  std::vector<std::string> region_names() const;
};

struct SoftMask {
  Grid<double> weights;
  std::string region;

  SoftMask() = default;
  SoftMask(int height, int width, std::string name = {})
      : weights(height, width, 0.0), region(std::move(name)) {}

  int height() const { return weights.height; }
  int width() const { return weights.width; }
  double total() const;
  std::size_t support() const;  // pixels with weight > 0
  bool is_binary() const;
  bool empty() const { return support() == 0; }

  friend bool operator==(const SoftMask&, const SoftMask&) = default;
};

enum class KernelShape { kCross, kBox };

struct StructuringKernel {
  KernelShape shape = KernelShape::kCross;
  int height = 12;
  int width = 7;

  // (dy, dx) offsets of the footprint relative to the anchor
  // (height / 2, width / 2).
  std::vector<std::pair<int, int>> offsets() const;
};

SoftMask labelmap_to_mask(const LabelMap& labels, std::string_view region);

// Iterated binary dilation (weights >= 0.5 are members). iterations == 0
// returns the input unchanged.
SoftMask dilate(const SoftMask& mask, const StructuringKernel& kernel, int iterations);

// Translation by (dy, dx); pixels leaving the frame are dropped.
SoftMask shift_mask(const SoftMask& mask, int dy, int dx);

struct Offset {
  int dy = 0;
  int dx = 0;

  friend bool operator==(const Offset&, const Offset&) = default;
};

// Dilate, translate (default: up by half the kernel height), then remove
// the original eye pixels.
SoftMask build_eyeshadow_mask(const SoftMask& eye_mask, const StructuringKernel& kernel,
                              int iterations, std::optional<Offset> shift = std::nullopt);

// Sentinel returned by distance_to_exterior when no exterior pixel exists.
inline constexpr int kNoExterior = 1 << 29;

// City-block distance from every support pixel to the nearest pixel with
// zero weight (0 outside the support). The image border is not exterior.
Grid<int> distance_to_exterior(const SoftMask& mask);

// Soft edge: weight(p) = m(p) * (1 - exp(-decay_rate * d(p))) where d is
// distance_to_exterior. Makeup opacity is highest deep inside and falls off
// toward the outer boundary; larger rates give crisper edges.
SoftMask gradation_smooth(const SoftMask& mask, double decay_rate);

struct RegionConfig {
  StructuringKernel eyeshadow_kernel{KernelShape::kCross, 12, 7};
  int eyeshadow_iterations = 2;
  std::optional<Offset> eyeshadow_shift;
  double eyeshadow_decay = 0.35;
  double lip_decay = 2.0;
  bool eyeshadow_on_skin_only = true;
};

struct RegionMaskSet {
  std::map<std::string, SoftMask> masks;

  bool has(std::string_view name) const { return masks.count(std::string(name)) > 0; }
  const SoftMask& at(std::string_view name) const;
};

// Binary masks for every mapped region, smoothed lips and a derived,
// smoothed "eyeshadow" mask when the map has eyes.
RegionMaskSet build_region_masks(const LabelMap& labels, const RegionConfig& config = {});

}  // namespace makeup
