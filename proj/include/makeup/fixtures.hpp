#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "makeup/image.hpp"
#include "makeup/regions.hpp"

namespace makeup {

enum class FixtureFace { kA, kB };

struct Fixture {
  RasterImage image;
  LabelMap labels;
};

// Procedural face drawn at half resolution and upsampled 2x. Values are
// multiples of 1/255, so 8-bit PNG export is lossless. Face A is a bare
// face. Face B has a different geometry, flat red lips and purple eyeshadow
// painted on the 2x2 blocks inside its derived eyeshadow mask; it serves
// as the makeup reference. Every 2x2 block of either face is constant, so
// the pool2 codec round-trips both exactly. Sizes must be even and at least 32.
Fixture synthetic_face(FixtureFace which, int height = 128, int width = 128);

std::optional<FixtureFace> parse_fixture_name(std::string_view name);
const char* fixture_name(FixtureFace which);

// Built-in "segmenter" for the synthetic faces: returns the label map of
// the fixture the image matches (within half an 8-bit level), or nullopt.
std::optional<LabelMap> fixture_segment(const RasterImage& image);

}  // namespace makeup
