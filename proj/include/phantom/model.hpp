#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "phantom/rng.hpp"
#include "phantom/tape.hpp"
#include "phantom/tensor.hpp"

#include <json.hpp>

namespace phantom {

enum class LayerKind { dense, conv2d, maxpool2x2, relu, flatten, dropout };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;     // dense: output width
  std::size_t channels = 0;  // conv2d: output channels
  std::size_t kernel = 0;    // conv2d: square kernel size
  std::size_t padding = 0;   // conv2d
  double rate = 0.0;         // dropout

  static LayerSpec dense(std::size_t units) { return {LayerKind::dense, units}; }
  static LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t padding) {
    return {LayerKind::conv2d, 0, channels, kernel, padding};
  }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec maxpool() { return {LayerKind::maxpool2x2}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec dropout(double rate) { return {LayerKind::dropout, 0, 0, 0, 0, rate}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Layer stack split at the embedding boundary: layers [0, boundary) map an
/// input sample to a D-vector, the rest map that vector to L class scores.
struct ModelSpec {
  Shape input_shape;  // per sample, e.g. {1, 28, 28} or {2}
  std::vector<LayerSpec> layers;
  std::size_t embedding_boundary = 0;
  std::size_t embedding_dim = 0;
  std::size_t num_classes = 0;

  /// Per-sample output shape after each layer; throws ShapeError on the first
  /// incompatible layer.
  std::vector<Shape> layer_shapes() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Named reference architectures: "mlp2" and "smallcnn".
ModelSpec make_preset(const std::string& name, const Shape& input_shape, std::size_t num_classes);

using ParameterMap = std::map<std::string, Tensor>;

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required only by dropout layers in training mode
};

/// Parameters registered on one tape.
struct BoundParameters {
  std::map<std::string, Var> vars;
};

class Model {
 public:
  Model() = default;
  Model(ModelSpec spec, ParameterMap params);

  /// He-normal weights, zero biases.
  static Model initialize(ModelSpec spec, Rng& rng);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParameterMap& parameters() const noexcept { return params_; }
  ParameterMap& parameters() noexcept { return params_; }

  BoundParameters bind(Tape& tape) const;

  /// [batch, input_shape...] -> [batch, D]
  Var embed(Tape& tape, const BoundParameters& bound, Var input, const ForwardContext& ctx) const;
  /// [batch, D] -> [batch, L]
  Var predict(Tape& tape, const BoundParameters& bound, Var embedding, const ForwardContext& ctx) const;

  static std::string weight_name(std::size_t layer);
  static std::string bias_name(std::size_t layer);

 private:
  Var run_layers(Tape& tape, const BoundParameters& bound, Var x, std::size_t begin, std::size_t end,
                 const ForwardContext& ctx) const;

  ModelSpec spec_;
  ParameterMap params_;
};

}  // namespace phantom
