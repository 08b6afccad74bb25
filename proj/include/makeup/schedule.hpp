#pragma once

#include <functional>
#include <span>
#include <vector>

#include "makeup/conditioning.hpp"
#include "makeup/latent.hpp"

namespace makeup {

class Backend;
class AttentionHook;

enum class ScheduleKind { kLinear, kScaledLinear };

// Variance schedule over timesteps t = 1..T. Timestep 0 is the clean
// sample, so alpha_bar(0) == 1 and alpha_bar(t) is the product of
// alpha(1..t). The raw tables are 0-indexed: alpha_bars()[i] == alpha_bar(i+1).
class NoiseSchedule {
 public:
  int steps() const { return static_cast<int>(betas_.size()); }
  ScheduleKind kind() const { return kind_; }
  double beta_start() const { return betas_.front(); }
  double beta_end() const { return betas_.back(); }

  double beta(int t) const;
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const;

  std::span<const double> betas() const { return betas_; }
  std::span<const double> alphas() const { return alphas_; }
  std::span<const double> alpha_bars() const { return alpha_bars_; }

  void require_timestep(int t) const;

 private:
  friend NoiseSchedule build_schedule(int, double, double, ScheduleKind);
  ScheduleKind kind_ = ScheduleKind::kLinear;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end, ScheduleKind kind);

// Stable Diffusion v1.x DDIM schedule: scaled_linear 0.00085 -> 0.012, T=1000.
NoiseSchedule default_schedule();

// Uniform integer grid 0 = g[0] < g[1] < ... < g[n] = t_end. Step counts
// larger than t_end collapse to unit steps.
std::vector<int> uniform_grid(int t_end, int num_steps);

// Denoised estimate (z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
Latent tweedie_denoise(const NoiseSchedule& schedule, const Latent& z_t, int t, const Latent& eps);

// Deterministic (eta = 0) or partially stochastic DDIM update from t_from
// down to t_to. `noise` is required when eta > 0.
Latent ddim_step(const NoiseSchedule& schedule, const Latent& z_t, int t_from, int t_to,
                 const Latent& eps, double eta = 0.0, const Latent* noise = nullptr);
inline Latent ddim_step(const NoiseSchedule& schedule, const Latent& z_t, int t,
                        const Latent& eps, double eta = 0.0, const Latent* noise = nullptr) {
  return ddim_step(schedule, z_t, t, t - 1, eps, eta, noise);
}

// DDIM inversion z_to = a * z_from - b * eps, with eps evaluated at
// (z_from, t_to). Exact algebraic inverse of ddim_step with eta = 0.
Latent ddim_invert_step(const NoiseSchedule& schedule, const Latent& z_from, int t_from, int t_to,
                        const Latent& eps);
inline Latent ddim_invert_step(const NoiseSchedule& schedule, const Latent& z_prev, int t,
                               const Latent& eps) {
  return ddim_invert_step(schedule, z_prev, t - 1, t, eps);
}

struct InversionTrace {
  Latent z_tstar;
  int t_star = 0;
  Latent eps_at_tstar;  // eps(z_tstar, t_star, c), reused when re-noising
  Conditioning conditioning;
  std::vector<int> grid;
  std::vector<Latent> per_step_latents;  // only when requested
};

struct InversionOptions {
  bool keep_latents = false;
  // Called after each inversion step with (step index, steps total).
  std::function<void(int, int)> on_step;
};

// Early-stopped DDIM inversion of z0 to t_star over a uniform sub-grid,
// re-evaluating the denoiser at every step.
InversionTrace invert_to(const Backend& backend, const NoiseSchedule& schedule, const Latent& z0,
                         int t_star, int num_steps, const Conditioning& conditioning,
                         const InversionOptions& options = {});

// Deterministic reverse sampling over the uniform grid from t_start to 0.
Latent sample_from(const Backend& backend, const NoiseSchedule& schedule, const Latent& z_start,
                   int t_start, int num_steps, const Conditioning& conditioning,
                   const AttentionHook* hook = nullptr);

// sqrt(abar_t*) z0_new + sqrt(1 - abar_t*) eps_at_tstar.
Latent renoise(const NoiseSchedule& schedule, const Latent& z0_new, const InversionTrace& trace);

}  // namespace makeup
