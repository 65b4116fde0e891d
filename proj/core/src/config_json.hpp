// Internal JSON (de)serialization for config structs. Kept out of public
// headers so the vendored json stays a private dependency.
#pragma once

#include "json.hpp"

#include "irfs/fusion_net.hpp"
#include "irfs/sod_net.hpp"
#include "irfs/types.hpp"

namespace irfs::cfgjson {

using nlohmann::json;

json to_json(const FusionNetConfig& c);
FusionNetConfig fusion_from_json(const json& j);

json to_json(const SodNetConfig& c);
SodNetConfig sod_from_json(const json& j);

json to_json(const LoopSchedule& s);
LoopSchedule schedule_from_json(const json& j);

Backbone backbone_from_string(const std::string& s);
Guidance guidance_from_string(const std::string& s);
FinalAggregation aggregation_from_string(const std::string& s);

/// Throws ConfigError when `j` holds keys outside `allowed`.
void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where);

} // namespace irfs::cfgjson
