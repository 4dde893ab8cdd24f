#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "psr/data_model.hpp"
#include "psr/labeling.hpp"
#include "psr/neural.hpp"
#include "psr/regressors.hpp"

namespace psr {

/// A trained model plus what is needed to score new data with it.
struct ModelCheckpoint {
    RegressorModel model;
    std::optional<NormStats> normalization;
    std::optional<LabelingPolicy> labeling;
};

nlohmann::json network_to_json(const nn::Network& net);
nn::Network network_from_json(const nlohmann::json& j);

nlohmann::json policy_to_json(const LabelingPolicy& policy);
LabelingPolicy policy_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const ModelCheckpoint& ckpt);
ModelCheckpoint checkpoint_from_json(const nlohmann::json& j);

/// JSON text; every parameter round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace psr
