#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "makeup/conditioning.hpp"

namespace makeup {

struct WeightedText {
  std::string text;
  double weight = 1.0;

  friend bool operator==(const WeightedText&, const WeightedText&) = default;
};

// Parses emphasis syntax used in diffusion prompt lists: "(text:1.6)" sets
// an explicit weight, bare "(text)" multiplies by 1.1 and "[text]" divides
// by 1.1; nesting multiplies. Adjacent spans with equal weight are merged.
// Unbalanced brackets are treated as literal text.
std::vector<WeightedText> parse_prompt_weights(std::string_view prompt);

// Lower-cased alphanumeric/underscore tokens.
std::vector<std::string> tokenize_prompt(std::string_view text);

// Deterministic N x d_c context: each token row is drawn from a generator
// seeded by the token's content and scaled by its emphasis weight; unused
// rows hold a fixed padding vector. Throws kParameter on an empty prompt.
Conditioning toy_text_encode(std::string_view prompt, int tokens, int width);

}  // namespace makeup
