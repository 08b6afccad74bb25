#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "makeup/fixtures.hpp"
#include "makeup/image_io.hpp"
#include "makeup/service.hpp"
#include "support.hpp"
// After Eigen: resolv.h, pulled in by httplib, defines _res.
#include <httplib.h>

namespace testing {

using nlohmann::json;

// Checks a JSON value against the subset of JSON Schema the API document
// uses: type, enum, required, properties, additionalProperties, items,
// min/max(Items|Length), minimum/maximum/exclusiveMinimum, pattern, $ref.
class SchemaCheck {
 public:
  explicit SchemaCheck(json root) : root_(std::move(root)) {}

  // Problems found validating `value` against definitions/<name>.
  std::vector<std::string> errors(const json& value, const std::string& name) const {
    std::vector<std::string> out;
    check(value, root_.at("definitions").at(name), "$", out);
    return out;
  }
  bool valid(const json& value, const std::string& name) const { return errors(value, name).empty(); }

 private:
  static bool has_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "null") return v.is_null();
    return false;
  }

  void check(const json& v, const json& s, const std::string& path, std::vector<std::string>& out) const {
    if (s.contains("$ref")) {
      const std::string ref = s["$ref"];
      const std::string prefix = "#/definitions/";
      check(v, root_.at("definitions").at(ref.substr(prefix.size())), path, out);
      return;
    }
    if (s.contains("type") && !has_type(v, s["type"])) {
      out.push_back(path + ": expected " + s["type"].get<std::string>());
      return;
    }
    if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end()) {
      out.push_back(path + ": not in enum");
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s["minimum"].get<double>()) out.push_back(path + ": below minimum");
      if (s.contains("maximum") && x > s["maximum"].get<double>()) out.push_back(path + ": above maximum");
      if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>()) {
        out.push_back(path + ": not above exclusiveMinimum");
      }
    }
    if (v.is_string()) {
      const auto& str = v.get_ref<const std::string&>();
      if (s.contains("minLength") && str.size() < s["minLength"].get<std::size_t>()) out.push_back(path + ": too short");
      if (s.contains("pattern") && !std::regex_search(str, std::regex(s["pattern"].get<std::string>()))) {
        out.push_back(path + ": pattern mismatch");
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) out.push_back(path + ": too few items");
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) out.push_back(path + ": too many items");
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], path + "[" + std::to_string(i) + "]", out);
      }
    }
    if (v.is_object()) {
      for (const auto& key : s.value("required", json::array())) {
        if (!v.contains(key.get<std::string>())) out.push_back(path + ": missing " + key.get<std::string>());
      }
      const json props = s.value("properties", json::object());
      for (const auto& [key, value] : v.items()) {
        const std::string sub = path + "." + key;
        if (props.contains(key)) {
          check(value, props[key], sub, out);
        } else if (s.contains("additionalProperties")) {
          const json& extra = s["additionalProperties"];
          if (extra.is_boolean()) {
            if (!extra.get<bool>()) out.push_back(sub + ": unexpected property");
          } else {
            check(value, extra, sub, out);
          }
        }
      }
    }
  }

  json root_;
};

// A service bound to a free port on a private store, served from a thread.
class RunningService {
 public:
  explicit RunningService(const std::filesystem::path& store, makeup::ServiceConfig cfg = {}) {
    cfg.host = "127.0.0.1";
    cfg.port = 0;
    cfg.store_dir = store;
    service_ = std::make_unique<makeup::MakeupService>(cfg);
    port_ = service_->bind();
    thread_ = std::thread([this] { service_->serve(); });
    service_->http().wait_until_ready();
  }
  ~RunningService() {
    service_->stop();
    if (thread_.joinable()) thread_.join();
  }
  RunningService(const RunningService&) = delete;
  RunningService& operator=(const RunningService&) = delete;

  int port() const { return port_; }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

 private:
  std::unique_ptr<makeup::MakeupService> service_;
  std::thread thread_;
  int port_ = 0;
};

inline std::string as_string(const makeup::Bytes& b) { return std::string(b.begin(), b.end()); }

inline httplib::MultipartFormData file_part(const std::string& name, const std::string& content,
                                            const std::string& type = "image/png") {
  return {name, content, name + ".png", type};
}

inline httplib::MultipartFormData text_part(const std::string& name, const std::string& content) {
  return {name, content, "", "application/json"};
}

// Image, labels and a cheap lip-colour spec for face A at `size`.
inline httplib::MultipartFormDataItems lip_submission(int size, const json& spec) {
  const auto fx = makeup::synthetic_face(makeup::FixtureFace::kA, size, size);
  return {file_part("image", as_string(makeup::encode_png(fx.image))),
          file_part("labels", as_string(makeup::encode_label_png(fx.labels.grid))),
          text_part("spec", spec.dump())};
}

inline json cheap_lip_spec() {
  return {{"color_targets", {{{"region", "lips"}, {"color", "#B03A4A"}, {"alpha", 0.8}}}},
          {"backend", "toy"},
          {"t_star", 200},
          {"inversion_steps", 8},
          {"reverse_steps", 8}};
}

inline json body_json(const httplib::Result& r) {
  if (!r) return json();
  return json::parse(r->body, nullptr, false);
}

// Polls the status endpoint until the job leaves queued/running.
inline json wait_finished(httplib::Client& c, const std::string& id,
                          std::chrono::milliseconds limit = std::chrono::seconds(60)) {
  const auto deadline = std::chrono::steady_clock::now() + limit;
  json status;
  while (std::chrono::steady_clock::now() < deadline) {
    status = body_json(c.Get("/api/jobs/" + id));
    const std::string state = status.value("state", "");
    if (state != "queued" && state != "running") return status;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return status;
}

// Reads the event stream to its end and returns the data payloads.
inline std::vector<json> read_events(httplib::Client& c, const std::string& id) {
  std::string raw;
  c.Get("/api/jobs/" + id + "/events", [&](const char* data, std::size_t n) {
    raw.append(data, n);
    return true;
  });
  std::vector<json> events;
  std::size_t pos = 0;
  while ((pos = raw.find("data: ", pos)) != std::string::npos) {
    const std::size_t end = raw.find('\n', pos);
    events.push_back(json::parse(raw.substr(pos + 6, end - pos - 6), nullptr, false));
    pos = end;
  }
  return events;
}

// One malformed (or occasionally valid) submission derived from a valid one.
struct FuzzCase {
  std::string description;
  httplib::MultipartFormDataItems parts;
  std::string raw_body;  // sent as-is instead of `parts` when non-empty
  std::string raw_type;
};

inline FuzzCase fuzz_submission(Gen& g, int size) {
  const json base = cheap_lip_spec();
  auto parts = lip_submission(size, base);
  FuzzCase fc;
  auto set_spec = [&](const std::string& text) { parts[2].content = text; };
  const json junk_values[] = {nullptr, true, -1, 0, 1e300, -1e300, "", "x", json::array(), json::object(),
                              json::array({1, 2, 3}), 2.5, "#12345", 4294967296LL};
  const auto junk = [&] { return junk_values[g.integer(0, static_cast<int>(std::size(junk_values)) - 1)]; };
  const std::vector<std::string> keys = {"color_targets", "main_prompt", "concepts", "guidance", "t_star",
                                         "inversion_steps", "reverse_steps", "seed", "backend", "debug",
                                         "regions", "histogram_bins", "reference", "bogus"};
  switch (g.integer(0, 13)) {
    case 0:
      fc.description = "drop a part";
      parts.erase(parts.begin() + g.integer(0, 2));
      break;
    case 1: {
      fc.description = "truncate the image";
      auto& img = parts[0].content;
      img.resize(static_cast<std::size_t>(g.integer(0, static_cast<int>(img.size()) - 1)));
      break;
    }
    case 2: {
      fc.description = "flip image bytes";
      auto& img = parts[0].content;
      for (int i = 0; i < 8; ++i) img[static_cast<std::size_t>(g.integer(0, static_cast<int>(img.size()) - 1))] ^= 0x5A;
      break;
    }
    case 3:
      fc.description = "spec is not JSON";
      set_spec(base.dump().substr(0, static_cast<std::size_t>(g.integer(0, 20))) + "}{");
      break;
    case 4: {
      fc.description = "junk value for a top-level key";
      json s = base;
      s[keys[static_cast<std::size_t>(g.integer(0, static_cast<int>(keys.size()) - 1))]] = junk();
      set_spec(s.dump());
      break;
    }
    case 5: {
      fc.description = "junk inside a colour target";
      json s = base;
      const char* fields[] = {"region", "color", "alpha", "sigma_policy", "sigma_tgt", "extra"};
      s["color_targets"][0][fields[g.integer(0, 5)]] = junk();
      set_spec(s.dump());
      break;
    }
    case 6: {
      fc.description = "junk guidance";
      json s = base;
      const char* fields[] = {"lambda", "steps", "domain", "extra"};
      s["guidance"] = {{fields[g.integer(0, 3)], junk()}};
      set_spec(s.dump());
      break;
    }
    case 7:
      fc.description = "labels are not an image";
      parts[1].content = "P5 not a png";
      break;
    case 8: {
      fc.description = "labels of another size";
      const auto other = makeup::synthetic_face(makeup::FixtureFace::kA, size + 2 * g.integer(1, 4), size);
      parts[1].content = as_string(makeup::encode_label_png(other.labels.grid));
      break;
    }
    case 9:
      fc.description = "mapping garbage";
      parts.push_back(text_part("mapping", g.coin() ? "12=lipz" : "nonsense\n=\n"));
      break;
    case 10:
      fc.description = "url-encoded body";
      fc.raw_body = "image=abc&spec=%7B%7D";
      fc.raw_type = "application/x-www-form-urlencoded";
      break;
    case 11:
      fc.description = "json body";
      fc.raw_body = base.dump();
      fc.raw_type = "application/json";
      break;
    case 12:
      fc.description = "reference without labels for an unknown image";
      parts.push_back(file_part("reference", as_string(makeup::encode_png(g.image(size, size)))));
      break;
    default: {
      fc.description = "random spec document";
      json s = json::object();
      for (int i = g.integer(0, 4); i > 0; --i) s[keys[static_cast<std::size_t>(g.integer(0, 13))]] = junk();
      set_spec(s.dump());
      break;
    }
  }
  fc.parts = std::move(parts);
  return fc;
}

inline httplib::Result send(httplib::Client& c, const FuzzCase& fc) {
  if (!fc.raw_body.empty()) return c.Post("/api/jobs", fc.raw_body, fc.raw_type);
  return c.Post("/api/jobs", fc.parts);
}

}  // namespace testing
