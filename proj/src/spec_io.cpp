#include "makeup/spec_io.hpp"

#include <cmath>
#include <algorithm>
#include <set>

namespace makeup {

using nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw FieldError(where.empty() ? key : where + "." + key, "unknown field");
  }
}

const json& require_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw FieldError(field, "expected an object");
  return j;
}

double get_number(const json& j, const std::string& field) {
  if (!j.is_number()) throw FieldError(field, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw FieldError(field, "must be finite");
  return v;
}

int get_int(const json& j, const std::string& field, int lo, int hi) {
  if (!j.is_number_integer()) throw FieldError(field, "expected an integer");
  const auto v = j.get<long long>();
  if (v < lo || v > hi) {
    throw FieldError(field, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

double get_unit(const json& j, const std::string& field) {
  const double v = get_number(j, field);
  if (v < 0.0 || v > 1.0) throw FieldError(field, "must lie in [0, 1]");
  return v;
}

std::string get_string(const json& j, const std::string& field) {
  if (!j.is_string()) throw FieldError(field, "expected a string");
  return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& field) {
  if (!j.is_boolean()) throw FieldError(field, "expected a boolean");
  return j.get<bool>();
}

Rgb get_color(const json& j, const std::string& field) {
  try {
    return parse_hex_color(get_string(j, field));
  } catch (const FieldError&) {
    throw;
  } catch (const Error&) {
    throw FieldError(field, "expected a #RRGGBB color");
  }
}

RegionColorTarget parse_target(const json& j, const std::string& where) {
  require_object(j, where);
  only_keys(j, where, {"region", "color", "alpha", "sigma_policy", "sigma_tgt"});
  RegionColorTarget t;
  if (!j.contains("region")) throw FieldError(where + ".region", "required");
  t.region = get_string(j["region"], where + ".region");
  if (!is_known_region(t.region) || t.region == "background" || t.region == "other") {
    throw FieldError(where + ".region", "unknown region '" + t.region + "'");
  }
  if (!j.contains("color")) throw FieldError(where + ".color", "required");
  t.mu_tgt = get_color(j["color"], where + ".color");
  if (j.contains("alpha")) t.alpha = get_unit(j["alpha"], where + ".alpha");
  if (j.contains("sigma_policy")) {
    const std::string p = get_string(j["sigma_policy"], where + ".sigma_policy");
    if (p == "equalize") {
      t.sigma_policy = SigmaPolicy::kEqualize;
    } else if (p == "explicit") {
      t.sigma_policy = SigmaPolicy::kExplicit;
    } else {
      throw FieldError(where + ".sigma_policy", "expected \"equalize\" or \"explicit\"");
    }
  }
  if (j.contains("sigma_tgt")) {
    const json& s = j["sigma_tgt"];
    const std::string f = where + ".sigma_tgt";
    if (!s.is_array() || s.size() != 3) throw FieldError(f, "expected three numbers");
    for (int c = 0; c < 3; ++c) {
      t.sigma_tgt[c] = get_number(s[c], f + "[" + std::to_string(c) + "]");
      if (t.sigma_tgt[c] <= 0.0) throw FieldError(f, "entries must be positive");
    }
  } else if (t.sigma_policy == SigmaPolicy::kExplicit) {
    throw FieldError(where + ".sigma_tgt", "required by the explicit sigma_policy");
  }
  return t;
}


RegionConfig parse_regions(const json& j, const std::string& where) {
  require_object(j, where);
  only_keys(j, where,
            {"eyeshadow_kernel", "eyeshadow_iterations", "eyeshadow_shift", "eyeshadow_decay", "lip_decay",
             "eyeshadow_on_skin_only"});
  RegionConfig r;
  if (j.contains("eyeshadow_kernel")) {
    const std::string f = where + ".eyeshadow_kernel";
    const json& k = require_object(j["eyeshadow_kernel"], f);
    only_keys(k, f, {"shape", "height", "width"});
    if (k.contains("shape")) {
      const std::string shape = get_string(k["shape"], f + ".shape");
      if (shape == "cross") {
        r.eyeshadow_kernel.shape = KernelShape::kCross;
      } else if (shape == "box") {
        r.eyeshadow_kernel.shape = KernelShape::kBox;
      } else {
        throw FieldError(f + ".shape", "expected \"cross\" or \"box\"");
      }
    }
    if (k.contains("height")) r.eyeshadow_kernel.height = get_int(k["height"], f + ".height", 1, 101);
    if (k.contains("width")) r.eyeshadow_kernel.width = get_int(k["width"], f + ".width", 1, 101);
  }
  if (j.contains("eyeshadow_iterations")) {
    r.eyeshadow_iterations = get_int(j["eyeshadow_iterations"], where + ".eyeshadow_iterations", 0, 20);
  }
  if (j.contains("eyeshadow_shift")) {
    const std::string f = where + ".eyeshadow_shift";
    const json& s = j["eyeshadow_shift"];
    if (!s.is_array() || s.size() != 2) throw FieldError(f, "expected [dy, dx]");
    r.eyeshadow_shift = Offset{get_int(s[0], f + "[0]", -4096, 4096), get_int(s[1], f + "[1]", -4096, 4096)};
  }
  for (const char* key : {"eyeshadow_decay", "lip_decay"}) {
    if (!j.contains(key)) continue;
    const std::string f = where + "." + key;
    const double v = get_number(j[key], f);
    if (v <= 0.0) throw FieldError(f, "must be positive");
    (std::string(key) == "lip_decay" ? r.lip_decay : r.eyeshadow_decay) = v;
  }
  if (j.contains("eyeshadow_on_skin_only")) {
    r.eyeshadow_on_skin_only = get_bool(j["eyeshadow_on_skin_only"], where + ".eyeshadow_on_skin_only");
  }
  return r;
}

}  // namespace

ParsedSpec spec_from_json(const json& doc) {
  if (!doc.is_object()) throw FieldError("spec", "expected a JSON object");
  only_keys(doc, "",
            {"color_targets", "main_prompt", "concepts", "guidance", "t_star", "inversion_steps", "reverse_steps",
             "seed", "backend", "debug", "regions", "histogram_bins", "reference"});
  ParsedSpec out;
  MakeupSpec& spec = out.spec;
  if (doc.contains("color_targets")) {
    const json& arr = doc["color_targets"];
    if (!arr.is_array()) throw FieldError("color_targets", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      spec.color_targets.push_back(parse_target(arr[i], "color_targets[" + std::to_string(i) + "]"));
    }
  }
  if (doc.contains("main_prompt")) {
    spec.composition.main_prompt = get_string(doc["main_prompt"], "main_prompt");
    if (spec.composition.main_prompt.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw FieldError("main_prompt", "must not be blank");
    }
  }
  if (doc.contains("concepts")) {
    const json& arr = doc["concepts"];
    if (!arr.is_array()) throw FieldError("concepts", "expected an array of \"text:weight\" strings");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string f = "concepts[" + std::to_string(i) + "]";
      try {
        spec.composition.concepts.push_back(parse_concept(get_string(arr[i], f)));
      } catch (const FieldError&) {
        throw;
      } catch (const Error& e) {
        throw FieldError(f, e.detail());
      }
    }
  }
  if (doc.contains("guidance")) {
    const json& g = require_object(doc["guidance"], "guidance");
    only_keys(g, "guidance", {"lambda", "steps", "domain"});
    if (g.contains("lambda")) spec.guidance.lambda = get_unit(g["lambda"], "guidance.lambda");
    if (g.contains("steps")) spec.guidance.apply_steps = get_int(g["steps"], "guidance.steps", 0, 10000);
    if (g.contains("domain")) {
      const std::string d = get_string(g["domain"], "guidance.domain");
      if (d == "latent") {
        spec.guidance.domain = GuidanceDomain::kLatent;
      } else if (d == "pixel") {
        spec.guidance.domain = GuidanceDomain::kPixel;
      } else {
        throw FieldError("guidance.domain", "expected \"latent\" or \"pixel\"");
      }
    }
  }
  if (doc.contains("t_star")) spec.t_star = get_int(doc["t_star"], "t_star", 1, 1000000);
  if (doc.contains("inversion_steps")) spec.inversion_steps = get_int(doc["inversion_steps"], "inversion_steps", 1, 10000);
  if (doc.contains("reverse_steps")) spec.reverse_steps = get_int(doc["reverse_steps"], "reverse_steps", 1, 10000);
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer() || doc["seed"].get<long long>() < 0) {
      throw FieldError("seed", "expected a non-negative integer");
    }
    spec.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("backend")) {
    out.backend = get_string(doc["backend"], "backend");
    const auto names = available_backends();
    const bool known = std::find(names.begin(), names.end(), out.backend) != names.end() ||
                       out.backend.rfind("remote:", 0) == 0;
    if (!known) throw FieldError("backend", "unknown backend '" + out.backend + "'");
  }
  if (doc.contains("debug")) spec.debug = get_bool(doc["debug"], "debug");
  if (doc.contains("regions")) spec.regions = parse_regions(doc["regions"], "regions");
  if (doc.contains("histogram_bins")) spec.histogram_bins = get_int(doc["histogram_bins"], "histogram_bins", 2, 65536);
  if (doc.contains("reference") && !doc["reference"].is_null() && !doc["reference"].is_boolean()) {
    throw FieldError("reference", "the reference image is uploaded separately; use true/false or omit");
  }
  return out;
}

ParsedSpec spec_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FieldError("spec", std::string("invalid JSON: ") + e.what());
  }
  return spec_from_json(doc);
}

json spec_to_json(const MakeupSpec& spec, const std::string& backend) {
  json doc;
  json targets = json::array();
  for (const auto& t : spec.color_targets) {
    json jt = {{"region", t.region},
               {"color", to_hex_color(t.mu_tgt)},
               {"alpha", t.alpha},
               {"sigma_policy", t.sigma_policy == SigmaPolicy::kEqualize ? "equalize" : "explicit"}};
    if (t.sigma_policy == SigmaPolicy::kExplicit) jt["sigma_tgt"] = {t.sigma_tgt[0], t.sigma_tgt[1], t.sigma_tgt[2]};
    targets.push_back(jt);
  }
  doc["color_targets"] = targets;
  doc["main_prompt"] = spec.composition.main_prompt;
  json concepts = json::array();
  for (const auto& c : spec.composition.concepts) concepts.push_back(format_concept(c));
  doc["concepts"] = concepts;
  doc["guidance"] = {{"lambda", spec.guidance.lambda},
                     {"steps", spec.guidance.apply_steps},
                     {"domain", spec.guidance.domain == GuidanceDomain::kLatent ? "latent" : "pixel"}};
  doc["t_star"] = spec.t_star;
  doc["inversion_steps"] = spec.inversion_steps;
  doc["reverse_steps"] = spec.reverse_steps;
  doc["seed"] = spec.seed;
  doc["debug"] = spec.debug;
  doc["histogram_bins"] = spec.histogram_bins;
  doc["reference"] = spec.reference.has_value();
  const RegionConfig& r = spec.regions;
  json regions = {{"eyeshadow_kernel",
                   {{"shape", r.eyeshadow_kernel.shape == KernelShape::kCross ? "cross" : "box"},
                    {"height", r.eyeshadow_kernel.height},
                    {"width", r.eyeshadow_kernel.width}}},
                  {"eyeshadow_iterations", r.eyeshadow_iterations},
                  {"eyeshadow_decay", r.eyeshadow_decay},
                  {"lip_decay", r.lip_decay},
                  {"eyeshadow_on_skin_only", r.eyeshadow_on_skin_only}};
  if (r.eyeshadow_shift) regions["eyeshadow_shift"] = {r.eyeshadow_shift->dy, r.eyeshadow_shift->dx};
  doc["regions"] = regions;
  if (!backend.empty()) doc["backend"] = backend;
  return doc;
}

}  // namespace makeup
