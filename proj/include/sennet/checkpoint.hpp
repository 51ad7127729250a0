#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "sennet/errors.hpp"
#include "sennet/nn.hpp"
#include "sennet/version.hpp"

namespace sennet {

struct Checkpoint {
  ProjectionNetwork projection;
  std::map<std::string, SoftmaxHead> heads;
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  // Row-major flat list; nlohmann emits shortest round-trip decimals, so the
  // checkpoint reloads bit-identically.
  return nlohmann::json(m.data);
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  const auto flat = j.get<std::vector<double>>();
  if (flat.size() != rows * cols) throw SchemaMismatchError("checkpoint: weight matrix size mismatch");
  m.data = flat;
  return m;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  nlohmann::json dims = nlohmann::json::array();
  if (!ckpt.projection.layers.empty()) {
    dims.push_back(ckpt.projection.layers.front().in_dim());
    for (const auto& layer : ckpt.projection.layers) dims.push_back(layer.out_dim());
  }
  j["dims"] = dims;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : ckpt.projection.layers) {
    nlohmann::json lj;
    lj["w"] = detail::matrix_to_json(layer.weights);
    lj["b"] = layer.bias;
    layers.push_back(lj);
  }
  j["layers"] = layers;
  nlohmann::json heads = nlohmann::json::object();
  for (const auto& [name, head] : ckpt.heads) {
    nlohmann::json hj;
    hj["w"] = detail::matrix_to_json(head.weights);
    hj["b"] = head.bias;
    hj["classes"] = head.class_count;
    heads[name] = hj;
  }
  j["heads"] = heads;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != kFormatVersion)
    throw SchemaMismatchError("checkpoint: unsupported format_version");
  Checkpoint ckpt;
  const auto dims = j.at("dims").get<std::vector<std::size_t>>();
  const auto& layers = j.at("layers");
  if (!layers.empty() && dims.size() != layers.size() + 1)
    throw SchemaMismatchError("checkpoint: dims/layers inconsistent");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    DenseLayer layer;
    layer.weights = detail::matrix_from_json(layers[i].at("w"), dims[i + 1], dims[i]);
    layer.bias = layers[i].at("b").get<Vec>();
    if (layer.bias.size() != dims[i + 1]) throw SchemaMismatchError("checkpoint: bias size mismatch");
    ckpt.projection.layers.push_back(std::move(layer));
  }
  ckpt.projection.trained_depth = ckpt.projection.layers.size();
  for (auto it = j.at("heads").begin(); it != j.at("heads").end(); ++it) {
    SoftmaxHead head;
    head.class_count = it.value().at("classes").get<int>();
    head.bias = it.value().at("b").get<Vec>();
    head.weights = detail::matrix_from_json(it.value().at("w"), head.bias.size(),
                                            it.value().at("w").size() / head.bias.size());
    ckpt.heads[it.key()] = std::move(head);
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_to_json(ckpt).dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatchError(path + ": bad JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace sennet
