#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "makeup/attention.hpp"
#include "makeup/backend.hpp"
#include "makeup/image.hpp"
#include "makeup/latent.hpp"
#include "makeup/schedule.hpp"

namespace makeup {

// Concept weight used when a prompt entry carries no ":weight" suffix.
inline constexpr double kDefaultConceptWeight = 0.1;

struct ConceptPrompt {
  std::string text;
  double alpha_s = kDefaultConceptWeight;

  friend bool operator==(const ConceptPrompt&, const ConceptPrompt&) = default;
};

// "text:weight"; the weight is taken from the last ':' when the suffix is a
// finite number. Otherwise the whole entry is text and the weight is the
// default scaled by any emphasis syntax, so "(glossy lips:1.6)" gets 0.16.
ConceptPrompt parse_concept(std::string_view entry);
std::string format_concept(const ConceptPrompt& concept_prompt);

struct CompositionConfig {
  std::string main_prompt = "a photo of a woman";
  std::vector<ConceptPrompt> concepts;

  void validate() const;
};

enum class GuidanceDomain { kLatent, kPixel };

struct GuidanceConfig {
  double lambda = 0.15;
  int apply_steps = 2;  // k: the earliest k reverse steps are regularised
  GuidanceDomain domain = GuidanceDomain::kLatent;

  void validate() const;
};

struct ConceptKV {
  Eigen::MatrixXd keys;
  Eigen::MatrixXd values;
  double alpha_s = 0.0;
};

// softmax(Q K_main^T / sqrt(d)) V_main + (1/M) sum_s alpha_s softmax(Q K_s^T / sqrt(d)) V_s.
// M counts every configured concept; terms with alpha_s == 0 are skipped so
// an all-zero configuration returns the main term bit for bit.
Eigen::MatrixXd compose_cross_attention(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& main_keys,
                                        const Eigen::MatrixXd& main_values,
                                        const std::vector<ConceptKV>& concepts, double scale_dim);

// Attention hook applying the composition at every cross-attention layer.
// The main term uses the conditioning the denoiser is called with; concept
// contexts are encoded once at construction.
class CompositionHook final : public AttentionHook {
 public:
  struct Concept {
    Conditioning conditioning;
    double alpha_s = 0.0;
  };

  CompositionHook(const Backend& backend, const CompositionConfig& config);
  explicit CompositionHook(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {}

  Eigen::MatrixXd attend(const AttentionCall& call) const override;
  const std::vector<Concept>& concepts() const { return concepts_; }

 private:
  std::vector<Concept> concepts_;
};

// (1 - lambda) z0_hat + lambda z0_prime.
Latent interp_guided_estimate(const Latent& z0_hat, const Latent& z0_prime, double lambda);

// Target of interpolation guidance: z0' = E(T(x0)); the pixel-domain variant
// also needs T(x0) itself.
struct GuidanceTarget {
  Latent z0_prime;
  std::optional<RasterImage> transformed_image;
};

// One deterministic reverse step t_from -> t_to. For step_index < k the
// denoised estimate is replaced by the interpolation with z0' before the
// update sqrt(abar_to) z0 + sqrt(1 - abar_to) eps; eps itself is never
// modified. Unguided steps are exactly ddim_step with eta = 0.
Latent guided_reverse_step(const Backend& backend, const NoiseSchedule& schedule, const Latent& z_t,
                           int t_from, int t_to, const Conditioning& conditioning,
                           const GuidanceTarget& target, const GuidanceConfig& guidance,
                           int step_index, const AttentionHook* hook = nullptr);

// Full reverse loop over the uniform grid from t_start to 0. `on_step` is
// called after each step with (step index, steps total).
Latent guided_sample(const Backend& backend, const NoiseSchedule& schedule, const Latent& z_start,
                     int t_start, int num_steps, const Conditioning& conditioning,
                     const GuidanceTarget& target, const GuidanceConfig& guidance,
                     const AttentionHook* hook = nullptr,
                     const std::function<void(int, int)>& on_step = {});

}  // namespace makeup
