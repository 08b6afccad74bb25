#pragma once

#include <memory>
#include <json.hpp>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include "makeup/backend.hpp"

namespace makeup {

namespace wire {

// {"shape": [...], "data": base64(row-major little-endian float32)}.
nlohmann::json encode_array(const Shape& shape, std::span<const double> values);
Latent decode_array(const nlohmann::json& j);

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(std::string_view text);

// Request envelope: {z, t, context, guidance_scale, lora_scale}.
nlohmann::json make_request(const Latent& z_t, int t, const Conditioning& c, double lora_scale);

}  // namespace wire

struct RemoteEndpoint {
  std::string host = "127.0.0.1";
  int port = 8500;
  std::string path = "/predict_eps";
  int timeout_ms = 30000;
  int max_in_flight = 4;
  double guidance_scale = 0.0;  // off unless configured
  double lora_scale = 0.2;
  int context_tokens = 8;
  int context_width = 16;
};

// Parses "http://host:port/path"; throws kConfiguration on anything else.
RemoteEndpoint parse_endpoint_url(const std::string& url);

// eps from a remote latent-diffusion service over the JSON wire schema.
// Stateless per call; in-flight requests are bounded by max_in_flight.
Latent remote_predict_eps(const RemoteEndpoint& endpoint, const Latent& z_t, int t,
                          const Conditioning& conditioning);

// Adapter backend. The codec is the identity on pixel latents; text is
// encoded locally with the toy encoder and shipped as the context matrix.
class RemoteBackend final : public Backend {
 public:
  RemoteBackend(NoiseSchedule schedule, RemoteEndpoint endpoint);

  std::string id() const override { return "remote"; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  Shape latent_shape(int height, int width) const override { return {height, width, 3}; }
  Latent encode(const RasterImage& image) const override { return identity_encode(image); }
  RasterImage decode(const Latent& z) const override { return identity_decode(z); }
  Latent predict_eps(const Latent& z_t, int t, const Conditioning& conditioning,
                     const AttentionHook* hook = nullptr) const override;
  Conditioning encode_text(std::string_view prompt) const override;

  const RemoteEndpoint& endpoint() const { return endpoint_; }

 private:
  NoiseSchedule schedule_;
  RemoteEndpoint endpoint_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
};

}  // namespace makeup
