#include "makeup/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <random>

#include "makeup/error.hpp"

namespace makeup {
namespace {

constexpr double kEmphasis = 1.1;

std::optional<std::size_t> matching_bracket(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '(' || s[i] == '[') ++depth;
    if (s[i] == ')' || s[i] == ']') {
      if (--depth == 0) {
        const char expected = s[open] == '(' ? ')' : ']';
        if (s[i] != expected) return std::nullopt;
        return i;
      }
    }
  }
  return std::nullopt;
}

std::optional<double> parse_number(std::string_view s) {
  std::string text(s);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
  std::size_t start = 0;
  while (start < text.size() && std::isspace(static_cast<unsigned char>(text[start]))) ++start;
  if (start == text.size()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(text.c_str() + start, &end);
  if (end != text.c_str() + text.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Position of the last ':' outside nested brackets.
std::optional<std::size_t> top_level_colon(std::string_view s) {
  int depth = 0;
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(' || s[i] == '[') ++depth;
    else if (s[i] == ')' || s[i] == ']') --depth;
    else if (s[i] == ':' && depth == 0) found = i;
  }
  return found;
}

void append_span(std::vector<WeightedText>& out, std::string text, double weight) {
  if (text.empty()) return;
  if (!out.empty() && out.back().weight == weight) {
    out.back().text += text;
  } else {
    out.push_back({std::move(text), weight});
  }
}

void parse_range(std::string_view s, double weight, std::vector<WeightedText>& out) {
  std::string literal;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char ch = s[i];
    if (ch == '(' || ch == '[') {
      if (const auto close = matching_bracket(s, i)) {
        append_span(out, std::move(literal), weight);
        literal.clear();
        const std::string_view inner = s.substr(i + 1, *close - i - 1);
        if (ch == '(') {
          const auto colon = top_level_colon(inner);
          const auto explicit_weight =
              colon ? parse_number(inner.substr(*colon + 1)) : std::optional<double>{};
          if (explicit_weight) {
            parse_range(inner.substr(0, *colon), weight * *explicit_weight, out);
          } else {
            parse_range(inner, weight * kEmphasis, out);
          }
        } else {
          parse_range(inner, weight / kEmphasis, out);
        }
        i = *close;
        continue;
      }
    }
    literal.push_back(ch);
  }
  append_span(out, std::move(literal), weight);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Eigen::RowVectorXd token_vector(std::string_view token, int width) {
  std::mt19937_64 rng(fnv1a(token));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(width)));
  Eigen::RowVectorXd v(width);
  for (int i = 0; i < width; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace

std::vector<WeightedText> parse_prompt_weights(std::string_view prompt) {
  std::vector<WeightedText> out;
  parse_range(prompt, 1.0, out);
  return out;
}

std::vector<std::string> tokenize_prompt(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '_') {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Conditioning toy_text_encode(std::string_view prompt, int tokens, int width) {
  bool blank = true;
  for (unsigned char c : prompt) blank = blank && std::isspace(c);
  if (blank) throw Error(ErrorKind::kParameter, "prompt must be nonempty");
  if (tokens < 1 || width < 1) throw Error(ErrorKind::kParameter, "context must be at least 1 x 1");

  Conditioning c;
  c.raw_prompt = std::string(prompt);
  c.context = Eigen::MatrixXd(tokens, width);
  int row = 0;
  for (const WeightedText& span : parse_prompt_weights(prompt)) {
    for (const std::string& token : tokenize_prompt(span.text)) {
      if (row == tokens) break;
      c.context.row(row++) = span.weight * token_vector(token, width);
    }
  }
  const Eigen::RowVectorXd pad = token_vector("<pad>", width);
  for (; row < tokens; ++row) c.context.row(row) = pad;
  return c;
}

}  // namespace makeup
