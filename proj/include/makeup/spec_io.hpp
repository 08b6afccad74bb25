#pragma once

#include <json.hpp>
#include <string>

#include "makeup/error.hpp"
#include "makeup/pipeline.hpp"

namespace makeup {

// Validation failure tied to a spec field path such as
// "color_targets[0].alpha".
class FieldError : public Error {
 public:
  FieldError(std::string field, const std::string& message)
      : Error(ErrorKind::kParameter, "field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ParsedSpec {
  MakeupSpec spec;
  std::string backend;  // empty when the document does not choose one
};

// Strict parse: unknown keys, wrong types and out-of-range values throw
// FieldError naming the offending field. The reference image itself is not
// part of the document.
ParsedSpec spec_from_json(const nlohmann::json& doc);
ParsedSpec spec_from_string(const std::string& text);

nlohmann::json spec_to_json(const MakeupSpec& spec, const std::string& backend = {});

}  // namespace makeup
