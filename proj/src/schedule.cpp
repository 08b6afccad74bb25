#include "makeup/schedule.hpp"

#include <cmath>
#include <string>

#include "makeup/backend.hpp"
#include "makeup/error.hpp"

namespace makeup {

void Conditioning::validate() const {
  if (context.rows() < 1 || context.cols() < 1) {
    throw Error(ErrorKind::kParameter, "conditioning needs at least one token vector");
  }
  if (!context.allFinite()) throw Error(ErrorKind::kParameter, "conditioning has non-finite entries");
  if (!(guidance_scale >= 0.0)) throw Error(ErrorKind::kParameter, "guidance_scale must be >= 0");
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > steps()) {
    throw Error(ErrorKind::kParameter, "beta index " + std::to_string(t) + " outside [1, " +
                                           std::to_string(steps()) + "]");
  }
  return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  require_timestep(t);
  return t == 0 ? 1.0 : alpha_bars_[t - 1];
}

void NoiseSchedule::require_timestep(int t) const {
  if (t < 0 || t > steps()) {
    throw Error(ErrorKind::kParameter, "timestep " + std::to_string(t) + " outside [0, " +
                                           std::to_string(steps()) + "]");
  }
}

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end, ScheduleKind kind) {
  if (steps < 2) throw Error(ErrorKind::kParameter, "schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw Error(ErrorKind::kParameter, "betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.kind_ = kind;
  s.betas_.resize(steps);
  s.alphas_.resize(steps);
  s.alpha_bars_.resize(steps);
  const double n = static_cast<double>(steps - 1);
  long double running = 1.0L;
  for (int i = 0; i < steps; ++i) {
    const double f = i / n;
    double b = 0.0;
    if (kind == ScheduleKind::kLinear) {
      b = beta_start + f * (beta_end - beta_start);
    } else {
      const double r = std::sqrt(beta_start) + f * (std::sqrt(beta_end) - std::sqrt(beta_start));
      b = r * r;
    }
    s.betas_[i] = b;
    s.alphas_[i] = 1.0 - b;
    running *= static_cast<long double>(s.alphas_[i]);
    s.alpha_bars_[i] = static_cast<double>(running);
  }
  return s;
}

NoiseSchedule default_schedule() {
  return build_schedule(1000, 0.00085, 0.012, ScheduleKind::kScaledLinear);
}

std::vector<int> uniform_grid(int t_end, int num_steps) {
  if (t_end < 1) throw Error(ErrorKind::kParameter, "grid end must be >= 1");
  if (num_steps < 1) throw Error(ErrorKind::kParameter, "num_steps must be >= 1");
  const long long n = std::min(num_steps, t_end);
  std::vector<int> grid(n + 1);
  for (long long i = 0; i <= n; ++i) {
    grid[i] = static_cast<int>((2 * i * t_end + n) / (2 * n));
  }
  return grid;
}

Latent tweedie_denoise(const NoiseSchedule& schedule, const Latent& z_t, int t, const Latent& eps) {
  require_same_shape(z_t, eps, "tweedie_denoise");
  const double ab = schedule.alpha_bar(t);
  const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
  const double noise_coef = std::sqrt(1.0 - ab);
  Latent out(z_t.shape());
  for (std::size_t i = 0; i < z_t.size(); ++i) out[i] = (z_t[i] - noise_coef * eps[i]) * inv_sqrt_ab;
  return out;
}

Latent ddim_step(const NoiseSchedule& schedule, const Latent& z_t, int t_from, int t_to,
                 const Latent& eps, double eta, const Latent* noise) {
  schedule.require_timestep(t_from);
  schedule.require_timestep(t_to);
  if (t_from < 1 || t_to >= t_from) {
    throw Error(ErrorKind::kParameter, "ddim_step needs t_from >= 1 and t_to < t_from");
  }
  if (eta < 0.0 || eta > 1.0) throw Error(ErrorKind::kParameter, "eta must lie in [0, 1]");
  if (eta > 0.0 && noise == nullptr) throw Error(ErrorKind::kParameter, "eta > 0 requires noise");
  if (noise) require_same_shape(z_t, *noise, "ddim_step noise");

  const double ab_from = schedule.alpha_bar(t_from);
  const double ab_to = schedule.alpha_bar(t_to);
  // For adjacent steps (1 - ab_from / ab_to) is beta_t.
  const double beta_tilde = (1.0 - ab_to) / (1.0 - ab_from) * (1.0 - ab_from / ab_to);
  const double radicand = 1.0 - ab_to - eta * eta * beta_tilde * beta_tilde;
  if (radicand < 0.0) {
    throw Error(ErrorKind::kNumeric, "negative radicand in ddim_step (eta too large for beta_tilde)");
  }
  const Latent z0_hat = tweedie_denoise(schedule, z_t, t_from, eps);
  const double c0 = std::sqrt(ab_to);
  const double ce = std::sqrt(radicand);
  Latent out(z_t.shape());
  for (std::size_t i = 0; i < z_t.size(); ++i) out[i] = c0 * z0_hat[i] + ce * eps[i];
  if (eta > 0.0) {
    const double cn = eta * beta_tilde;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += cn * (*noise)[i];
  }
  return out;
}

Latent ddim_invert_step(const NoiseSchedule& schedule, const Latent& z_from, int t_from, int t_to,
                        const Latent& eps) {
  schedule.require_timestep(t_from);
  schedule.require_timestep(t_to);
  if (t_to < 1 || t_to <= t_from) {
    throw Error(ErrorKind::kParameter, "ddim_invert_step needs t >= 1 with a predecessor below it");
  }
  require_same_shape(z_from, eps, "ddim_invert_step");
  const double ab_from = schedule.alpha_bar(t_from);
  const double ab_to = schedule.alpha_bar(t_to);
  const double a = std::sqrt(ab_to) / std::sqrt(ab_from);
  const double b = std::sqrt(ab_to) * (std::sqrt(1.0 / ab_from - 1.0) - std::sqrt(1.0 / ab_to - 1.0));
  Latent out(z_from.shape());
  for (std::size_t i = 0; i < z_from.size(); ++i) out[i] = a * z_from[i] - b * eps[i];
  return out;
}

namespace {

Latent checked_eps(const Backend& backend, const Latent& z, int t, const Conditioning& c,
                   const AttentionHook* hook, int step, const char* phase) {
  try {
    Latent eps = backend.predict_eps(z, t, c, hook);
    require_same_shape(z, eps, "denoiser output");
    return eps;
  } catch (const Error& e) {
    throw e.annotated(std::string(phase) + " step " + std::to_string(step) + " (t=" +
                      std::to_string(t) + ")");
  }
}

}  // namespace

InversionTrace invert_to(const Backend& backend, const NoiseSchedule& schedule, const Latent& z0,
                         int t_star, int num_steps, const Conditioning& conditioning,
                         const InversionOptions& options) {
  if (t_star < 1 || t_star > schedule.steps()) {
    throw Error(ErrorKind::kParameter, "t_star " + std::to_string(t_star) + " outside (0, " +
                                           std::to_string(schedule.steps()) + "]");
  }
  if (num_steps < 1) throw Error(ErrorKind::kParameter, "num_steps must be >= 1");

  InversionTrace trace;
  trace.t_star = t_star;
  trace.conditioning = conditioning;
  trace.grid = uniform_grid(t_star, num_steps);
  const int n = static_cast<int>(trace.grid.size()) - 1;

  Latent z = z0;
  if (options.keep_latents) trace.per_step_latents.push_back(z);
  for (int i = 0; i < n; ++i) {
    const int t_from = trace.grid[i];
    const int t_to = trace.grid[i + 1];
    const Latent eps = checked_eps(backend, z, t_to, conditioning, nullptr, i, "inversion");
    z = ddim_invert_step(schedule, z, t_from, t_to, eps);
    if (options.keep_latents) trace.per_step_latents.push_back(z);
    if (options.on_step) options.on_step(i, n);
  }
  trace.eps_at_tstar = checked_eps(backend, z, t_star, conditioning, nullptr, n, "inversion");
  trace.z_tstar = std::move(z);
  return trace;
}

Latent sample_from(const Backend& backend, const NoiseSchedule& schedule, const Latent& z_start,
                   int t_start, int num_steps, const Conditioning& conditioning,
                   const AttentionHook* hook) {
  const std::vector<int> grid = uniform_grid(t_start, num_steps);
  Latent z = z_start;
  const int n = static_cast<int>(grid.size()) - 1;
  for (int i = n; i > 0; --i) {
    const Latent eps = checked_eps(backend, z, grid[i], conditioning, hook, n - i, "sampling");
    z = ddim_step(schedule, z, grid[i], grid[i - 1], eps);
  }
  return z;
}

Latent renoise(const NoiseSchedule& schedule, const Latent& z0_new, const InversionTrace& trace) {
  require_same_shape(z0_new, trace.eps_at_tstar, "renoise");
  const double ab = schedule.alpha_bar(trace.t_star);
  return lincomb(std::sqrt(ab), z0_new, std::sqrt(1.0 - ab), trace.eps_at_tstar);
}

}  // namespace makeup
