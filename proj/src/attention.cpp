#include "makeup/attention.hpp"

#include <cmath>

#include "makeup/error.hpp"

namespace makeup {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                                  double scale_dim) {
  if (queries.cols() != keys.cols()) {
    throw Error(ErrorKind::kShape, "query width " + std::to_string(queries.cols()) +
                                       " != key width " + std::to_string(keys.cols()));
  }
  if (!(scale_dim > 0.0)) throw Error(ErrorKind::kParameter, "attention scale dim must be > 0");
  return softmax_rows((queries * keys.transpose()) / std::sqrt(scale_dim));
}

Eigen::MatrixXd cross_attention(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                                const Eigen::MatrixXd& values, double scale_dim) {
  if (keys.rows() != values.rows()) {
    throw Error(ErrorKind::kShape, "key/value token counts differ");
  }
  return attention_weights(queries, keys, scale_dim) * values;
}

Eigen::MatrixXd default_attention(const AttentionCall& call) {
  const Eigen::MatrixXd& c = call.conditioning.context;
  if (c.cols() != call.key_projection.rows()) {
    throw Error(ErrorKind::kShape, "context width does not match key projection");
  }
  return cross_attention(call.queries, c * call.key_projection, c * call.value_projection,
                         call.scale_dim);
}

}  // namespace makeup
