#pragma once

#include <Eigen/Dense>
#include <string>

namespace makeup {

// Text conditioning: N token vectors of width d_c.
struct Conditioning {
  Eigen::MatrixXd context;     // N x d_c
  double guidance_scale = 0.0;  // classifier-free guidance; 0 = off
  std::string raw_prompt;

  int tokens() const { return static_cast<int>(context.rows()); }
  int width() const { return static_cast<int>(context.cols()); }
  bool empty() const { return context.size() == 0; }

  // Throws kParameter unless N >= 1, entries are finite and the guidance
  // scale is non-negative.
  void validate() const;
};

}  // namespace makeup
