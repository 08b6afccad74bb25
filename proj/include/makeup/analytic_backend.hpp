#pragma once

#include <optional>

#include "makeup/backend.hpp"

namespace makeup {

// Ideal epsilon predictor for data ~ N(mu0, sigma0^2 I):
// sqrt(1 - abar) (z - sqrt(abar) mu0) / (abar sigma0^2 + 1 - abar).
Latent analytic_eps(const Latent& mu0, double sigma0, const NoiseSchedule& schedule,
                    const Latent& z_t, int t);
Latent analytic_eps(double mu0, double sigma0, const NoiseSchedule& schedule, const Latent& z_t,
                    int t);

struct AnalyticGaussianConfig {
  double mean = 0.5;                 // used when mean_latent is unset
  std::optional<Latent> mean_latent;  // full latent-shaped mean
  double sigma = 4.0;
  int context_tokens = 8;
  int context_width = 16;
};

// Closed-form test oracle: identity codec, exact Gaussian denoiser.
// Conditioning is accepted and ignored.
class AnalyticGaussianBackend final : public Backend {
 public:
  AnalyticGaussianBackend(NoiseSchedule schedule, AnalyticGaussianConfig config = {});

  std::string id() const override { return "analytic"; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  Shape latent_shape(int height, int width) const override { return {height, width, 3}; }
  Latent encode(const RasterImage& image) const override { return identity_encode(image); }
  RasterImage decode(const Latent& z) const override { return identity_decode(z); }
  Latent predict_eps(const Latent& z_t, int t, const Conditioning& conditioning,
                     const AttentionHook* hook = nullptr) const override;
  Conditioning encode_text(std::string_view prompt) const override;

  const AnalyticGaussianConfig& config() const { return config_; }

 private:
  NoiseSchedule schedule_;
  AnalyticGaussianConfig config_;
};

}  // namespace makeup
