#include "makeup/latent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "makeup/error.hpp"

namespace makeup {

std::string shape_to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error(ErrorKind::kShape, "negative dimension in " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Latent::Latent(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Latent::Latent(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw Error(ErrorKind::kShape, "value count " + std::to_string(values_.size()) +
                                       " does not match shape " + shape_to_string(shape_));
  }
}

bool Latent::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Latent::norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

void require_same_shape(const Latent& a, const Latent& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kShape, std::string(what) + ": " + shape_to_string(a.shape()) +
                                       " vs " + shape_to_string(b.shape()));
  }
}

Latent lincomb(double a, const Latent& x, double b, const Latent& y) {
  require_same_shape(x, y, "lincomb");
  Latent out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

Latent scaled(double a, const Latent& x) {
  Latent out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i];
  return out;
}

double l2_distance(const Latent& a, const Latent& b) {
  require_same_shape(a, b, "l2_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double relative_l2(const Latent& estimate, const Latent& reference) {
  const double denom = reference.norm();
  const double num = l2_distance(estimate, reference);
  return denom > 0.0 ? num / denom : num;
}

double max_abs_difference(const Latent& a, const Latent& b) {
  require_same_shape(a, b, "max_abs_difference");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace makeup
