#include "makeup/toy_backend.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "makeup/analytic_backend.hpp"
#include "makeup/error.hpp"
#include "makeup/text_encoder.hpp"

namespace makeup {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

void require_pixel_latent(const Latent& z) {
  if (z.shape().size() != 3 || z.shape()[2] != 3) {
    throw Error(ErrorKind::kShape, "toy backend expects (h, w, 3) latents, got " +
                                       shape_to_string(z.shape()));
  }
}

}  // namespace

ToyAttnBackend::ToyAttnBackend(NoiseSchedule schedule, ToyAttnConfig config)
    : schedule_(std::move(schedule)), config_(config) {
  if (config_.layers < 1 || config_.attn_dim < 1 || config_.context_tokens < 1 ||
      config_.context_width < 1) {
    throw Error(ErrorKind::kParameter, "toy backend dimensions must be positive");
  }
  std::mt19937_64 rng(config_.seed);
  for (int l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.query = random_matrix(rng, 3, config_.attn_dim);
    layer.time = random_matrix(rng, 2, config_.attn_dim);
    layer.key = random_matrix(rng, config_.context_width, config_.attn_dim);
    layer.value = random_matrix(rng, config_.context_width, config_.attn_dim);
    layer.output = random_matrix(rng, config_.attn_dim, 3);
    layers_.push_back(std::move(layer));
  }
}

std::string ToyAttnBackend::id() const {
  return config_.codec == ToyCodec::kIdentity ? "toy" : "toy-pool";
}

Shape ToyAttnBackend::latent_shape(int height, int width) const {
  if (config_.codec == ToyCodec::kPool2) return {height / 2, width / 2, 3};
  return {height, width, 3};
}

Latent ToyAttnBackend::encode(const RasterImage& image) const {
  return config_.codec == ToyCodec::kIdentity ? identity_encode(image) : pool2_encode(image);
}

RasterImage ToyAttnBackend::decode(const Latent& z) const {
  return config_.codec == ToyCodec::kIdentity ? identity_decode(z) : pool2_decode(z);
}

Conditioning ToyAttnBackend::encode_text(std::string_view prompt) const {
  return toy_text_encode(prompt, config_.context_tokens, config_.context_width);
}

Eigen::MatrixXd ToyAttnBackend::layer_queries(const Latent& z_t, int t, int layer) const {
  require_pixel_latent(z_t);
  const Layer& w = layers_.at(layer);
  const double ab = schedule_.alpha_bar(t);
  const Eigen::Index pixels = static_cast<Eigen::Index>(z_t.size() / 3);
  const Eigen::Map<const RowMatrix> z(z_t.values().data(), pixels, 3);
  // Queries see the noise-normalized latent, centred on the prior mean.
  const Eigen::MatrixXd centred =
      (z.array() / std::sqrt(ab) - config_.prior_mean).matrix();
  const double phase = std::numbers::pi * t / schedule_.steps();
  Eigen::RowVector2d embed(std::sin(phase), std::cos(phase));
  Eigen::MatrixXd q = centred * w.query;
  q.rowwise() += embed * w.time;
  return q;
}

Eigen::MatrixXd ToyAttnBackend::layer_attention_weights(const Latent& z_t, int t,
                                                        const Conditioning& c, int layer) const {
  c.validate();
  const Layer& w = layers_.at(layer);
  return attention_weights(layer_queries(z_t, t, layer), c.context * w.key, config_.attn_dim);
}

Latent ToyAttnBackend::predict_eps(const Latent& z_t, int t, const Conditioning& conditioning,
                                   const AttentionHook* hook) const {
  require_pixel_latent(z_t);
  conditioning.validate();
  if (conditioning.width() != config_.context_width) {
    throw Error(ErrorKind::kShape, "context width " + std::to_string(conditioning.width()) +
                                       " != backend d_c " + std::to_string(config_.context_width));
  }
  Latent eps = analytic_eps(config_.prior_mean, config_.prior_sigma, schedule_, z_t, t);

  const Eigen::Index pixels = static_cast<Eigen::Index>(z_t.size() / 3);
  Eigen::MatrixXd residual = Eigen::MatrixXd::Zero(pixels, 3);
  for (int l = 0; l < config_.layers; ++l) {
    const Layer& w = layers_[l];
    const Eigen::MatrixXd q = layer_queries(z_t, t, l);
    const AttentionCall call{l, q, w.key, w.value, conditioning,
                             static_cast<double>(config_.attn_dim)};
    const Eigen::MatrixXd attended = hook ? hook->attend(call) : default_attention(call);
    if (attended.rows() != pixels || attended.cols() != config_.attn_dim) {
      throw Error(ErrorKind::kShape, "attention hook returned wrong shape");
    }
    residual += attended * w.output;
  }
  const double gain = config_.attn_gain * std::sqrt(1.0 - schedule_.alpha_bar(t));
  for (Eigen::Index p = 0; p < pixels; ++p) {
    for (int c = 0; c < 3; ++c) eps[static_cast<std::size_t>(p) * 3 + c] += gain * residual(p, c);
  }
  return eps;
}

}  // namespace makeup
