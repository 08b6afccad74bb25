#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace makeup {

using Shape = std::vector<int>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense real-valued array in row-major order. Diffusion arithmetic runs in
// double precision throughout.
class Latent {
 public:
  Latent() = default;
  explicit Latent(Shape shape, double fill = 0.0);
  Latent(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool all_finite() const;
  double norm() const;

  friend bool operator==(const Latent&, const Latent&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Throws ErrorKind::kShape naming `what` when shapes differ.
void require_same_shape(const Latent& a, const Latent& b, const char* what);

// a*x + b*y, elementwise.
Latent lincomb(double a, const Latent& x, double b, const Latent& y);
Latent scaled(double a, const Latent& x);

double l2_distance(const Latent& a, const Latent& b);
double relative_l2(const Latent& estimate, const Latent& reference);
double max_abs_difference(const Latent& a, const Latent& b);

}  // namespace makeup
