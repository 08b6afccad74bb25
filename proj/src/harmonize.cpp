#include "makeup/harmonize.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "makeup/error.hpp"
#include "makeup/text_encoder.hpp"

namespace makeup {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

ConceptPrompt parse_concept(std::string_view entry) {
  ConceptPrompt out;
  const auto colon = entry.rfind(':');
  if (colon != std::string_view::npos) {
    const std::string number = trim(entry.substr(colon + 1));
    double w = 0.0;
    const auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), w);
    if (!number.empty() && ec == std::errc() && ptr == number.data() + number.size() && std::isfinite(w)) {
      out.text = trim(entry.substr(0, colon));
      out.alpha_s = w;
      if (out.text.empty()) throw Error(ErrorKind::kParameter, "concept has no text");
      return out;
    }
  }
  out.text = trim(entry);
  if (out.text.empty()) throw Error(ErrorKind::kParameter, "concept has no text");
  // Emphasis such as "(glossy lips:1.6)" scales the default weight by the
  // mean span weight.
  const auto spans = parse_prompt_weights(out.text);
  if (!spans.empty()) {
    double sum = 0.0;
    for (const auto& span : spans) sum += span.weight;
    out.alpha_s = kDefaultConceptWeight * sum / static_cast<double>(spans.size());
  }
  return out;
}

std::string format_concept(const ConceptPrompt& c) {
  std::ostringstream os;
  os << c.text << ':' << c.alpha_s;
  return os.str();
}

void CompositionConfig::validate() const {
  if (trim(main_prompt).empty()) throw Error(ErrorKind::kParameter, "main_prompt is empty");
  for (const auto& c : concepts) {
    if (trim(c.text).empty()) throw Error(ErrorKind::kParameter, "concept has no text");
    if (!std::isfinite(c.alpha_s)) throw Error(ErrorKind::kParameter, "concept weight is not finite");
  }
}

void GuidanceConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::kParameter, "lambda must lie in [0, 1]");
  if (apply_steps < 0) throw Error(ErrorKind::kParameter, "apply_steps must be >= 0");
}

Eigen::MatrixXd compose_cross_attention(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& main_keys,
                                        const Eigen::MatrixXd& main_values,
                                        const std::vector<ConceptKV>& concepts, double scale_dim) {
  auto check = [&](const Eigen::MatrixXd& k, const Eigen::MatrixXd& v, const char* what) {
    if (k.cols() != queries.cols() || k.rows() != v.rows()) {
      throw Error(ErrorKind::kShape, std::string(what) + " keys/values do not match the queries");
    }
  };
  check(main_keys, main_values, "main");
  Eigen::MatrixXd out = cross_attention(queries, main_keys, main_values, scale_dim);
  const double m = static_cast<double>(concepts.size());
  for (const auto& c : concepts) {
    check(c.keys, c.values, "concept");
    if (c.values.cols() != main_values.cols()) {
      throw Error(ErrorKind::kShape, "concept values width differs from the main values");
    }
    if (c.alpha_s == 0.0) continue;
    out += (c.alpha_s / m) * cross_attention(queries, c.keys, c.values, scale_dim);
  }
  return out;
}

CompositionHook::CompositionHook(const Backend& backend, const CompositionConfig& config) {
  config.validate();
  for (const auto& c : config.concepts) {
    concepts_.push_back({backend.encode_text(c.text), c.alpha_s});
  }
}

Eigen::MatrixXd CompositionHook::attend(const AttentionCall& call) const {
  Eigen::MatrixXd out = default_attention(call);
  if (concepts_.empty()) return out;
  const double m = static_cast<double>(concepts_.size());
  for (const auto& c : concepts_) {
    if (c.alpha_s == 0.0) continue;
    if (c.conditioning.width() != call.key_projection.rows()) {
      throw Error(ErrorKind::kShape, "concept context width does not match the layer");
    }
    const Eigen::MatrixXd k = c.conditioning.context * call.key_projection;
    const Eigen::MatrixXd v = c.conditioning.context * call.value_projection;
    out += (c.alpha_s / m) * cross_attention(call.queries, k, v, call.scale_dim);
  }
  return out;
}

Latent interp_guided_estimate(const Latent& z0_hat, const Latent& z0_prime, double lambda) {
  require_same_shape(z0_hat, z0_prime, "interp_guided_estimate");
  if (lambda == 0.0) return z0_hat;
  if (lambda == 1.0) return z0_prime;
  return lincomb(1.0 - lambda, z0_hat, lambda, z0_prime);
}

Latent guided_reverse_step(const Backend& backend, const NoiseSchedule& schedule, const Latent& z_t,
                           int t_from, int t_to, const Conditioning& conditioning,
                           const GuidanceTarget& target, const GuidanceConfig& guidance,
                           int step_index, const AttentionHook* hook) {
  guidance.validate();
  Latent eps = backend.predict_eps(z_t, t_from, conditioning, hook);
  require_same_shape(z_t, eps, "denoiser output");
  if (step_index >= guidance.apply_steps || guidance.lambda == 0.0) {
    return ddim_step(schedule, z_t, t_from, t_to, eps);
  }
  schedule.require_timestep(t_to);
  if (t_to >= t_from) throw Error(ErrorKind::kParameter, "guided_reverse_step needs t_to < t_from");

  const Latent z0_hat = tweedie_denoise(schedule, z_t, t_from, eps);
  Latent z0;
  if (guidance.domain == GuidanceDomain::kLatent) {
    z0 = interp_guided_estimate(z0_hat, target.z0_prime, guidance.lambda);
  } else {
    if (!target.transformed_image) {
      throw Error(ErrorKind::kParameter, "pixel-domain guidance needs the transformed image");
    }
    const RasterImage decoded = backend.decode(z0_hat);
    const RasterImage& tx = *target.transformed_image;
    if (decoded.height() != tx.height() || decoded.width() != tx.width()) {
      throw Error(ErrorKind::kShape, "transformed image size differs from the decoded estimate");
    }
    RasterImage mixed(tx.height(), tx.width());
    for (std::size_t i = 0; i < mixed.data().size(); ++i) {
      mixed.data()[i] = (1.0 - guidance.lambda) * decoded.data()[i] + guidance.lambda * tx.data()[i];
    }
    mixed.clamp();
    z0 = backend.encode(mixed);
    require_same_shape(z0_hat, z0, "pixel-domain estimate");
  }
  const double ab_to = schedule.alpha_bar(t_to);
  return lincomb(std::sqrt(ab_to), z0, std::sqrt(1.0 - ab_to), eps);
}

Latent guided_sample(const Backend& backend, const NoiseSchedule& schedule, const Latent& z_start,
                     int t_start, int num_steps, const Conditioning& conditioning,
                     const GuidanceTarget& target, const GuidanceConfig& guidance,
                     const AttentionHook* hook, const std::function<void(int, int)>& on_step) {
  const std::vector<int> grid = uniform_grid(t_start, num_steps);
  const int n = static_cast<int>(grid.size()) - 1;
  Latent z = z_start;
  for (int i = n, step = 0; i > 0; --i, ++step) {
    try {
      z = guided_reverse_step(backend, schedule, z, grid[i], grid[i - 1], conditioning, target,
                              guidance, step, hook);
    } catch (const Error& e) {
      throw e.annotated("sampling step " + std::to_string(step) + " (t=" + std::to_string(grid[i]) + ")");
    }
    if (on_step) on_step(step, n);
  }
  return z;
}

}  // namespace makeup
