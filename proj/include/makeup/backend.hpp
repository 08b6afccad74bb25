#pragma once

#include <string>
#include <string_view>

#include "makeup/attention.hpp"
#include "makeup/conditioning.hpp"
#include "makeup/image.hpp"
#include "makeup/latent.hpp"
#include "makeup/schedule.hpp"

namespace makeup {

// Latent codec, epsilon denoiser and text encoder behind one interface.
// Implementations are immutable after construction and safe to share
// between concurrent jobs.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string id() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;

  // Declared shape of encode() for an image of the given size.
  virtual Shape latent_shape(int height, int width) const = 0;
  virtual Latent encode(const RasterImage& image) const = 0;
  virtual RasterImage decode(const Latent& z) const = 0;
  // Largest |D(E(x)) - x| the codec promises on fixture images.
  virtual double codec_tolerance() const { return 0.0; }

  virtual Latent predict_eps(const Latent& z_t, int t, const Conditioning& conditioning,
                             const AttentionHook* hook = nullptr) const = 0;
  virtual Conditioning encode_text(std::string_view prompt) const = 0;

  virtual bool supports_attention_hooks() const { return false; }
};

// Identity codec between an H x W x 3 image and an (H, W, 3) latent.
// decode clamps to [0, 1].
Latent identity_encode(const RasterImage& image);
RasterImage identity_decode(const Latent& z);

// Fixed 2x average pooling; decode is nearest-neighbour unpooling, so
// encode(decode(z)) == z exactly.
Latent pool2_encode(const RasterImage& image);
RasterImage pool2_decode(const Latent& z);

}  // namespace makeup
