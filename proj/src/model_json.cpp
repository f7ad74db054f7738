#include "simlab/model_json.hpp"

namespace simlab {

using nlohmann::json;

json model_to_json(const Model& model, const Vec* theta) {
  json j;
  switch (model.kind()) {
    case ModelKind::two_layer:
      j["type"] = "two_layer";
      j["activation"] = model.act().name;
      j["m"] = model.width();
      j["d"] = model.input_dim();
      break;
    case ModelKind::mlp:
      j["type"] = "mlp";
      j["activation"] = model.act().name;
      j["widths"] = model.widths();
      if (model.linear_readout()) j["linear_readout"] = true;
      break;
    case ModelKind::linear: {
      j["type"] = "linear";
      j["d"] = model.input_dim();
      json basis;
      basis["kind"] = model.basis().kind;
      if (model.basis().kind == "monomial") basis["degree"] = model.basis().degree;
      j["basis"] = basis;
      break;
    }
  }
  if (theta != nullptr) {
    j["theta"] = std::vector<double>(theta->data(), theta->data() + theta->size());
  }
  return j;
}

ModelWithTheta model_from_json(const json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ConfigError("model spec must be an object with a \"type\" string");
  }
  const std::string type = j["type"].get<std::string>();
  ModelWithTheta out{Model::linear(LinearBasis::fourier1d()), std::nullopt};
  if (type == "two_layer") {
    if (!j.contains("activation") || !j.contains("m") || !j.contains("d")) {
      throw ConfigError("two_layer model spec needs activation, m, d");
    }
    out.model = Model::two_layer(activation(j["activation"].get<std::string>()),
                                 j["m"].get<int>(), j["d"].get<int>());
  } else if (type == "mlp") {
    if (!j.contains("activation") || !j.contains("widths")) {
      throw ConfigError("mlp model spec needs activation and widths");
    }
    const bool lin = j.value("linear_readout", false);
    out.model = Model::mlp(activation(j["activation"].get<std::string>()),
                           j["widths"].get<std::vector<int>>(), lin);
  } else if (type == "linear") {
    if (!j.contains("d") || !j.contains("basis")) {
      throw ConfigError("linear model spec needs d and basis");
    }
    const json& basis = j["basis"];
    const std::string kind = basis.value("kind", "monomial");
    if (kind == "monomial") {
      out.model = Model::linear(
          LinearBasis::monomial(j["d"].get<int>(), basis.value("degree", 3)));
    } else if (kind == "fourier") {
      if (j["d"].get<int>() != 1) throw ConfigError("fourier basis requires d = 1");
      out.model = Model::linear(LinearBasis::fourier1d());
    } else {
      throw ConfigError("unknown linear basis kind: " + kind);
    }
  } else {
    throw ConfigError("unknown model type: " + type);
  }
  if (j.contains("theta")) {
    const auto flat = j["theta"].get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != out.model.param_count()) {
      throw ConfigError("theta length does not match the model spec");
    }
    out.theta = Eigen::Map<const Vec>(flat.data(), flat.size());
  }
  return out;
}

}  // namespace simlab
