#pragma once

#include <json.hpp>

#include <optional>

#include "simlab/model.hpp"

namespace simlab {

/// Model spec object: {"type": "two_layer"|"mlp"|"linear", "activation": ...,
/// "m": ..., "d": ..., "widths": [...], "basis": {...}, "theta": [...]}.
/// theta, when present, uses the model's flat layout and round-trips
/// bit-exactly for finite doubles.
nlohmann::json model_to_json(const Model& model, const Vec* theta = nullptr);

struct ModelWithTheta {
  Model model;
  std::optional<Vec> theta;
};

ModelWithTheta model_from_json(const nlohmann::json& j);

}  // namespace simlab
