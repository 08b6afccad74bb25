#include "makeup/regions.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "makeup/error.hpp"

namespace makeup {

const std::vector<std::string>& known_regions() {
  static const std::vector<std::string> names = {
      "background", "skin",     "brows",    "eyes",  "eyeglasses", "ears",
      "earrings",   "nose",     "mouth",    "lips",  "neck",       "necklace",
      "cloth",      "hair",     "hat",      "other", "eyeshadow"};
  return names;
}

bool is_known_region(std::string_view name) {
  const auto& names = known_regions();
  return std::find(names.begin(), names.end(), name) != names.end();
}

LabelMapping default_label_mapping() {
  return {{0, "background"}, {1, "skin"},  {2, "brows"},     {3, "brows"},    {4, "eyes"},
          {5, "eyes"},       {6, "eyeglasses"}, {7, "ears"}, {8, "ears"},     {9, "earrings"},
          {10, "nose"},      {11, "mouth"}, {12, "lips"},    {13, "lips"},    {14, "neck"},
          {15, "necklace"},  {16, "cloth"}, {17, "hair"},    {18, "hat"}};
}

LabelMapping parse_label_mapping(std::string_view text) {
  LabelMapping mapping;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string();
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "mapping line " + std::to_string(line_no);
    if (eq == std::string::npos) throw Error(ErrorKind::kConfiguration, where + ": expected label=region");
    const std::string label_text = trim(line.substr(0, eq));
    const std::string region = trim(line.substr(eq + 1));
    int label = -1;
    try {
      std::size_t used = 0;
      label = std::stoi(label_text, &used);
      if (used != label_text.size()) label = -1;
    } catch (const std::exception&) {
      label = -1;
    }
    if (label < 0 || label > 255) throw Error(ErrorKind::kConfiguration, where + ": label must be 0..255");
    if (!is_known_region(region) || region == "eyeshadow") {
      throw Error(ErrorKind::kConfiguration, where + ": unknown region name '" + region + "'");
    }
    mapping[label] = region;
  }
  return mapping;
}

const std::string& LabelMap::region_of(int label) const {
  static const std::string other = "other";
  const auto it = mapping.find(label);
  return it == mapping.end() ? other : it->second;
}

std::vector<std::string> LabelMap::region_names() const {
  std::set<std::string> names{"other"};
  for (const auto& [label, name] : mapping) names.insert(name);
  return {names.begin(), names.end()};
}

double SoftMask::total() const {
  double s = 0.0;
  for (double w : weights.values) s += w;
  return s;
}

std::size_t SoftMask::support() const {
  return static_cast<std::size_t>(
      std::count_if(weights.values.begin(), weights.values.end(), [](double w) { return w > 0.0; }));
}

bool SoftMask::is_binary() const {
  return std::all_of(weights.values.begin(), weights.values.end(),
                     [](double w) { return w == 0.0 || w == 1.0; });
}

std::vector<std::pair<int, int>> StructuringKernel::offsets() const {
  if (height < 1 || width < 1) throw Error(ErrorKind::kParameter, "kernel size must be positive");
  const int ay = height / 2;
  const int ax = width / 2;
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (shape == KernelShape::kBox || y == ay || x == ax) out.emplace_back(y - ay, x - ax);
    }
  }
  return out;
}

const SoftMask& RegionMaskSet::at(std::string_view name) const {
  const auto it = masks.find(std::string(name));
  if (it == masks.end()) {
    throw Error(ErrorKind::kUnknownRegion, "no mask for region '" + std::string(name) + "'");
  }
  return it->second;
}

SoftMask labelmap_to_mask(const LabelMap& labels, std::string_view region) {
  const auto names = labels.region_names();
  if (std::find(names.begin(), names.end(), region) == names.end()) {
    throw Error(ErrorKind::kUnknownRegion, "region '" + std::string(region) + "' is not in the label mapping");
  }
  SoftMask mask(labels.grid.height, labels.grid.width, std::string(region));
  for (std::size_t i = 0; i < labels.grid.size(); ++i) {
    if (labels.region_of(labels.grid.values[i]) == region) mask.weights.values[i] = 1.0;
  }
  return mask;
}

SoftMask dilate(const SoftMask& mask, const StructuringKernel& kernel, int iterations) {
  if (iterations < 0) throw Error(ErrorKind::kParameter, "iterations must be >= 0");
  if (iterations == 0) return mask;
  const auto offsets = kernel.offsets();
  SoftMask current = mask;
  for (auto& w : current.weights.values) w = w >= 0.5 ? 1.0 : 0.0;
  for (int it = 0; it < iterations; ++it) {
    SoftMask next(current.height(), current.width(), mask.region);
    for (int y = 0; y < current.height(); ++y) {
      for (int x = 0; x < current.width(); ++x) {
        if (current.weights.at(y, x) == 0.0) continue;
        for (const auto& [dy, dx] : offsets) {
          if (next.weights.contains(y + dy, x + dx)) next.weights.at(y + dy, x + dx) = 1.0;
        }
      }
    }
    current = std::move(next);
  }
  return current;
}

SoftMask shift_mask(const SoftMask& mask, int dy, int dx) {
  if (std::abs(dy) >= mask.height() || std::abs(dx) >= mask.width()) {
    throw Error(ErrorKind::kParameter, "shift (" + std::to_string(dy) + ", " + std::to_string(dx) +
                                           ") exceeds the image");
  }
  SoftMask out(mask.height(), mask.width(), mask.region);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (out.weights.contains(y + dy, x + dx)) out.weights.at(y + dy, x + dx) = mask.weights.at(y, x);
    }
  }
  return out;
}

SoftMask build_eyeshadow_mask(const SoftMask& eye_mask, const StructuringKernel& kernel,
                              int iterations, std::optional<Offset> shift) {
  if (!eye_mask.is_binary()) throw Error(ErrorKind::kParameter, "eye mask must be binary");
  const Offset s = shift.value_or(Offset{-(kernel.height / 2), 0});
  SoftMask out = shift_mask(dilate(eye_mask, kernel, iterations), s.dy, s.dx);
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    if (eye_mask.weights.values[i] > 0.0) out.weights.values[i] = 0.0;
  }
  out.region = "eyeshadow";
  return out;
}

Grid<int> distance_to_exterior(const SoftMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  Grid<int> d(h, w, kNoExterior);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(mask.weights.values[i] > 0.0)) d.values[i] = 0;
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int& v = d.at(y, x);
      if (y > 0) v = std::min(v, d.at(y - 1, x) + 1);
      if (x > 0) v = std::min(v, d.at(y, x - 1) + 1);
    }
  }
  for (int y = h - 1; y >= 0; --y) {
    for (int x = w - 1; x >= 0; --x) {
      int& v = d.at(y, x);
      if (y + 1 < h) v = std::min(v, d.at(y + 1, x) + 1);
      if (x + 1 < w) v = std::min(v, d.at(y, x + 1) + 1);
    }
  }
  for (int& v : d.values) v = std::min(v, kNoExterior);
  return d;
}

SoftMask gradation_smooth(const SoftMask& mask, double decay_rate) {
  if (!(decay_rate > 0.0)) throw Error(ErrorKind::kParameter, "decay_rate must be > 0");
  const Grid<int> d = distance_to_exterior(mask);
  SoftMask out(mask.height(), mask.width(), mask.region);
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    const double m = std::clamp(mask.weights.values[i], 0.0, 1.0);
    if (m == 0.0) continue;
    const double falloff = d.values[i] >= kNoExterior ? 0.0 : std::exp(-decay_rate * d.values[i]);
    out.weights.values[i] = m * (1.0 - falloff);
  }
  return out;
}

RegionMaskSet build_region_masks(const LabelMap& labels, const RegionConfig& config) {
  RegionMaskSet set;
  for (const std::string& name : labels.region_names()) {
    set.masks[name] = labelmap_to_mask(labels, name);
  }
  if (set.has("eyes")) {
    SoftMask shadow = build_eyeshadow_mask(set.at("eyes"), config.eyeshadow_kernel,
                                           config.eyeshadow_iterations, config.eyeshadow_shift);
    if (config.eyeshadow_on_skin_only && set.has("skin")) {
      const SoftMask& skin = set.at("skin");
      for (std::size_t i = 0; i < shadow.weights.size(); ++i) {
        if (skin.weights.values[i] == 0.0) shadow.weights.values[i] = 0.0;
      }
    }
    set.masks["eyeshadow"] = gradation_smooth(shadow, config.eyeshadow_decay);
  }
  if (set.has("lips")) set.masks["lips"] = gradation_smooth(set.at("lips"), config.lip_decay);
  return set;
}

}  // namespace makeup
