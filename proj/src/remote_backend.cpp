#include "makeup/remote_backend.hpp"

#include <openssl/evp.h>

#include <bit>
#include <chrono>
#include <cstring>
#include <httplib.h>
#include <regex>

#include "makeup/error.hpp"
#include "makeup/text_encoder.hpp"

namespace makeup {
namespace wire {

static_assert(std::endian::native == std::endian::little, "wire format assumes little-endian host");

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<unsigned char> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorKind::kParameter, "base64 length not a multiple of 4");
  std::vector<unsigned char> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorKind::kParameter, "invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes that padding stands for.
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

nlohmann::json encode_array(const Shape& shape, std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * sizeof(float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
  }
  return {{"shape", shape}, {"data", base64_encode(bytes)}};
}

Latent decode_array(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data") || !j["shape"].is_array() ||
      !j["data"].is_string()) {
    throw Error(ErrorKind::kShape, "array envelope needs 'shape' and 'data'");
  }
  Shape shape;
  for (const auto& d : j["shape"]) {
    if (!d.is_number_integer() || d.get<long long>() < 0) {
      throw Error(ErrorKind::kShape, "shape entries must be non-negative integers");
    }
    shape.push_back(d.get<int>());
  }
  const std::vector<unsigned char> bytes = base64_decode(j["data"].get<std::string>());
  if (bytes.size() != shape_size(shape) * sizeof(float)) {
    throw Error(ErrorKind::kShape, "payload holds " + std::to_string(bytes.size() / sizeof(float)) +
                                       " floats, shape " + shape_to_string(shape) + " needs " +
                                       std::to_string(shape_size(shape)));
  }
  std::vector<double> values(shape_size(shape));
  for (std::size_t i = 0; i < values.size(); ++i) {
    float f = 0.0f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    values[i] = f;
  }
  return Latent(std::move(shape), std::move(values));
}

nlohmann::json make_request(const Latent& z_t, int t, const Conditioning& c, double lora_scale) {
  std::vector<double> context(static_cast<std::size_t>(c.context.size()));
  for (Eigen::Index r = 0; r < c.context.rows(); ++r) {
    for (Eigen::Index k = 0; k < c.context.cols(); ++k) {
      context[static_cast<std::size_t>(r * c.context.cols() + k)] = c.context(r, k);
    }
  }
  return {{"z", encode_array(z_t.shape(), z_t.values())},
          {"t", t},
          {"context", encode_array({c.tokens(), c.width()}, context)},
          {"guidance_scale", c.guidance_scale},
          {"lora_scale", lora_scale}};
}

}  // namespace wire

RemoteEndpoint parse_endpoint_url(const std::string& url) {
  static const std::regex pattern(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) {
    throw Error(ErrorKind::kConfiguration, "remote endpoint must look like http://host:port/path");
  }
  RemoteEndpoint e;
  e.host = m[1];
  e.port = m[2].matched ? std::stoi(m[2]) : 80;
  if (m[3].matched && m[3].length() > 1) e.path = m[3];
  return e;
}

Latent remote_predict_eps(const RemoteEndpoint& endpoint, const Latent& z_t, int t,
                          const Conditioning& conditioning) {
  Conditioning c = conditioning;
  if (endpoint.guidance_scale > 0.0 && c.guidance_scale == 0.0) c.guidance_scale = endpoint.guidance_scale;
  const std::string body = wire::make_request(z_t, t, c, endpoint.lora_scale).dump();

  httplib::Client client(endpoint.host, endpoint.port);
  const auto timeout = std::chrono::milliseconds(endpoint.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(endpoint.path, body, "application/json");
  if (!res) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    const httplib::Error err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && elapsed >= timeout);
    throw Error(timed_out ? ErrorKind::kTimeout : ErrorKind::kTransport,
                "remote denoiser " + endpoint.host + ":" + std::to_string(endpoint.port) + ": " +
                    httplib::to_string(err));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::kBackend, "remote denoiser returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kBackend, std::string("malformed remote reply: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("eps")) {
    throw Error(ErrorKind::kBackend, "remote reply lacks 'eps'");
  }
  Latent eps = wire::decode_array(reply["eps"]);
  if (eps.shape() != z_t.shape()) {
    throw Error(ErrorKind::kShape, "remote eps shape " + shape_to_string(eps.shape()) +
                                       " != latent shape " + shape_to_string(z_t.shape()));
  }
  return eps;
}

RemoteBackend::RemoteBackend(NoiseSchedule schedule, RemoteEndpoint endpoint)
    : schedule_(std::move(schedule)), endpoint_(std::move(endpoint)) {
  if (endpoint_.max_in_flight < 1 || endpoint_.max_in_flight > 1024) {
    throw Error(ErrorKind::kConfiguration, "max_in_flight must lie in [1, 1024]");
  }
  if (endpoint_.timeout_ms < 1) throw Error(ErrorKind::kConfiguration, "timeout_ms must be positive");
  in_flight_ = std::make_unique<std::counting_semaphore<1024>>(endpoint_.max_in_flight);
}

Latent RemoteBackend::predict_eps(const Latent& z_t, int t, const Conditioning& conditioning,
                                  const AttentionHook* hook) const {
  if (hook) throw Error(ErrorKind::kBackend, "remote backend does not expose attention hooks");
  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{*in_flight_};
  return remote_predict_eps(endpoint_, z_t, t, conditioning);
}

Conditioning RemoteBackend::encode_text(std::string_view prompt) const {
  return toy_text_encode(prompt, endpoint_.context_tokens, endpoint_.context_width);
}

}  // namespace makeup
