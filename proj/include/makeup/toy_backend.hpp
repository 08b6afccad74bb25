#pragma once

#include <cstdint>
#include <vector>

#include "makeup/backend.hpp"

namespace makeup {

enum class ToyCodec { kIdentity, kPool2 };

struct ToyAttnConfig {
  ToyCodec codec = ToyCodec::kIdentity;
  int context_tokens = 8;   // N
  int context_width = 16;   // d_c
  int attn_dim = 8;         // d_l
  int layers = 2;
  double attn_gain = 0.05;
  double prior_mean = 0.5;
  double prior_sigma = 4.0;
  std::uint64_t seed = 7;
};

// Small denoiser: the Gaussian-prior epsilon plus a residual from a stack
// of cross-attention layers whose spatial queries come from the latent
// pixels and a timestep embedding.
class ToyAttnBackend final : public Backend {
 public:
  struct Layer {
    Eigen::MatrixXd query;   // 3 x d_l
    Eigen::MatrixXd time;    // 2 x d_l
    Eigen::MatrixXd key;     // d_c x d_l   (W_K)
    Eigen::MatrixXd value;   // d_c x d_l   (W_V)
    Eigen::MatrixXd output;  // d_l x 3
  };

  ToyAttnBackend(NoiseSchedule schedule, ToyAttnConfig config = {});

  std::string id() const override;
  const NoiseSchedule& schedule() const override { return schedule_; }
  Shape latent_shape(int height, int width) const override;
  Latent encode(const RasterImage& image) const override;
  RasterImage decode(const Latent& z) const override;
  Latent predict_eps(const Latent& z_t, int t, const Conditioning& conditioning,
                     const AttentionHook* hook = nullptr) const override;
  Conditioning encode_text(std::string_view prompt) const override;
  bool supports_attention_hooks() const override { return true; }

  // Spatial queries Q_{t,l} (P x d_l) the given layer sees for z_t.
  Eigen::MatrixXd layer_queries(const Latent& z_t, int t, int layer) const;
  // softmax(Q K^T / sqrt(d_l)) for the default (hook-free) pass.
  Eigen::MatrixXd layer_attention_weights(const Latent& z_t, int t, const Conditioning& c,
                                          int layer) const;

  const ToyAttnConfig& config() const { return config_; }
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  NoiseSchedule schedule_;
  ToyAttnConfig config_;
  std::vector<Layer> layers_;
};

}  // namespace makeup
