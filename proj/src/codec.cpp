#include <algorithm>

#include "makeup/backend.hpp"
#include "makeup/error.hpp"

namespace makeup {
namespace {

void require_image_latent(const Latent& z) {
  if (z.shape().size() != 3 || z.shape()[2] != 3) {
    throw Error(ErrorKind::kShape, "expected (H, W, 3) latent, got " + shape_to_string(z.shape()));
  }
}

}  // namespace

Latent identity_encode(const RasterImage& image) {
  return Latent({image.height(), image.width(), 3}, image.data());
}

RasterImage identity_decode(const Latent& z) {
  require_image_latent(z);
  RasterImage image(z.shape()[0], z.shape()[1]);
  std::copy(z.values().begin(), z.values().end(), image.data().begin());
  image.clamp();
  return image;
}

Latent pool2_encode(const RasterImage& image) {
  if (image.height() % 2 || image.width() % 2) {
    throw Error(ErrorKind::kShape, "pooling codec needs even image dimensions");
  }
  const int h = image.height() / 2;
  const int w = image.width() / 2;
  Latent z({h, w, 3});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double s = image.at(2 * y, 2 * x, c) + image.at(2 * y, 2 * x + 1, c) +
                         image.at(2 * y + 1, 2 * x, c) + image.at(2 * y + 1, 2 * x + 1, c);
        z[(static_cast<std::size_t>(y) * w + x) * 3 + c] = 0.25 * s;
      }
    }
  }
  return z;
}

RasterImage pool2_decode(const Latent& z) {
  require_image_latent(z);
  const int h = z.shape()[0];
  const int w = z.shape()[1];
  RasterImage image(2 * h, 2 * w);
  for (int y = 0; y < 2 * h; ++y) {
    for (int x = 0; x < 2 * w; ++x) {
      for (int c = 0; c < 3; ++c) {
        image.at(y, x, c) = z[(static_cast<std::size_t>(y / 2) * w + x / 2) * 3 + c];
      }
    }
  }
  image.clamp();
  return image;
}

}  // namespace makeup
