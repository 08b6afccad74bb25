#include "makeup/analytic_backend.hpp"

#include <cmath>

#include "makeup/error.hpp"
#include "makeup/text_encoder.hpp"

namespace makeup {
namespace {

void check_sigma(double sigma0) {
  if (!(sigma0 >= 0.0)) throw Error(ErrorKind::kParameter, "sigma0 must be >= 0");
}

}  // namespace

Latent analytic_eps(const Latent& mu0, double sigma0, const NoiseSchedule& schedule,
                    const Latent& z_t, int t) {
  check_sigma(sigma0);
  require_same_shape(mu0, z_t, "analytic_eps mean");
  const double ab = schedule.alpha_bar(t);
  const double sqrt_ab = std::sqrt(ab);
  const double scale = std::sqrt(1.0 - ab) / (ab * sigma0 * sigma0 + (1.0 - ab));
  Latent eps(z_t.shape());
  for (std::size_t i = 0; i < z_t.size(); ++i) eps[i] = scale * (z_t[i] - sqrt_ab * mu0[i]);
  return eps;
}

Latent analytic_eps(double mu0, double sigma0, const NoiseSchedule& schedule, const Latent& z_t,
                    int t) {
  return analytic_eps(Latent(z_t.shape(), mu0), sigma0, schedule, z_t, t);
}

AnalyticGaussianBackend::AnalyticGaussianBackend(NoiseSchedule schedule,
                                                 AnalyticGaussianConfig config)
    : schedule_(std::move(schedule)), config_(std::move(config)) {
  check_sigma(config_.sigma);
}

Latent AnalyticGaussianBackend::predict_eps(const Latent& z_t, int t, const Conditioning&,
                                            const AttentionHook* hook) const {
  if (hook) throw Error(ErrorKind::kBackend, "analytic backend has no attention layers");
  if (config_.mean_latent) return analytic_eps(*config_.mean_latent, config_.sigma, schedule_, z_t, t);
  return analytic_eps(config_.mean, config_.sigma, schedule_, z_t, t);
}

Conditioning AnalyticGaussianBackend::encode_text(std::string_view prompt) const {
  return toy_text_encode(prompt, config_.context_tokens, config_.context_width);
}

}  // namespace makeup
