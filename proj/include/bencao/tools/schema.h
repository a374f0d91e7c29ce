#pragma once

#include <string>
#include <vector>

#include "bencao/common/io.h"

namespace bencao::tools {

// Validates `value` against the JSON-Schema subset used by the tool schema
// files: type, required, properties, additionalProperties (false only),
// enum, minLength, minimum, maximum and items. Returns one message per
// problem, each prefixed with a JSON-pointer-like path.
std::vector<std::string> validate_schema(const json& value, const json& schema, const std::string& path = "$");

}  // namespace bencao::tools
