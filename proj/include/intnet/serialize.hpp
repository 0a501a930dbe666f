#pragma once

#include "intnet/encoders.hpp"
#include "intnet/model.hpp"
#include "json.hpp"

namespace intnet {

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

}  // namespace intnet
