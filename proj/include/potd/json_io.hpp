#pragma once

// JSON mapping of configuration types. Unknown keys are rejected so that a
// typo in a config file surfaces as a ConfigError instead of a silent default.

#include <json.hpp>

#include "potd/transcript.hpp"

namespace potd {

using Json = nlohmann::json;

Json to_json(const tinylm::ArchConfig& a);
Json to_json(const tinylm::OptimizerConfig& o);
Json to_json(const HyperParams& h);

// Missing keys keep their defaults.
tinylm::ArchConfig arch_from_json(const Json& j);
tinylm::OptimizerConfig optimizer_from_json(const Json& j);
HyperParams hyper_from_json(const Json& j);

// Throws ConfigError naming the first key of `j` not in `allowed`.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace potd
