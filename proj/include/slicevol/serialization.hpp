#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slicevol/error.hpp"
#include "slicevol/nn/tensor.hpp"
#include "slicevol/vae.hpp"

namespace slicevol {

/// Writes tensors back to back as little-endian float32 and returns the
/// manifest [{name, shape, dtype, byte_offset}].
nlohmann::json write_tensor_file(const std::filesystem::path& bin,
                                 const std::vector<std::pair<std::string, const nn::Tensor*>>& tensors);

/// Fills every named tensor from `bin` using the manifest; shapes must match.
void read_tensor_file(const std::filesystem::path& bin, const nlohmann::json& manifest,
                      const std::vector<std::pair<std::string, nn::Tensor*>>& tensors);

/// Copies j[key] into dst when present; a wrong type raises ConfigError.
template <class T>
void json_take(const nlohmann::json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("bad type for config key '") + key + "'");
    }
}

/// ConfigError unless `j` is an object whose keys all appear in `keys`.
void json_reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* where);

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);

/// Overlays the keys present in `j` onto `base`. Unknown keys and wrong
/// types raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

} // namespace slicevol
