#pragma once

#include <Eigen/Dense>

#include "makeup/conditioning.hpp"

namespace makeup {

// Row-wise softmax with max subtraction.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// softmax(Q K^T / sqrt(d)).
Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                                  double scale_dim);

// softmax(Q K^T / sqrt(d)) V.
Eigen::MatrixXd cross_attention(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                                const Eigen::MatrixXd& values, double scale_dim);

// Everything a cross-attention layer exposes to a hook: spatial queries
// (P x d_l), the layer's key/value projections (d_c x d_l) and the
// conditioning the denoiser was called with.
struct AttentionCall {
  int layer = 0;
  const Eigen::MatrixXd& queries;
  const Eigen::MatrixXd& key_projection;
  const Eigen::MatrixXd& value_projection;
  const Conditioning& conditioning;
  double scale_dim = 1.0;
};

// Replaces the output of every cross-attention layer it is passed to.
// Hooks are handed to the denoiser per call, so a backend never holds
// job-specific state.
class AttentionHook {
 public:
  virtual ~AttentionHook() = default;
  virtual Eigen::MatrixXd attend(const AttentionCall& call) const = 0;
};

// The unmodified forward pass: C W_K, C W_V, then cross_attention.
Eigen::MatrixXd default_attention(const AttentionCall& call);

}  // namespace makeup
