#include "phantom/model.hpp"

#include <cmath>
#include <cstdio>

#include "phantom/error.hpp"

namespace phantom {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dropout: return "dropout";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::dense, LayerKind::conv2d, LayerKind::maxpool2x2, LayerKind::relu, LayerKind::flatten,
                 LayerKind::dropout}) {
    if (to_string(k) == name) return k;
  }
  throw FormatError(FormatError::Kind::bad_value, "unknown layer kind '" + name + "'");
}

std::vector<Shape> ModelSpec::layer_shapes() const {
  if (input_shape.empty()) throw ShapeError("model input shape is empty");
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::dense:
        if (cur.size() != 1) throw ShapeError(where + " needs a flat input, got " + shape_to_string(cur));
        if (l.units == 0) throw ShapeError(where + " has zero units");
        cur = {l.units};
        break;
      case LayerKind::conv2d:
        if (cur.size() != 3) throw ShapeError(where + " needs [ch, h, w] input, got " + shape_to_string(cur));
        if (l.channels == 0 || l.kernel == 0) throw ShapeError(where + " has zero channels or kernel");
        if (l.kernel > cur[1] + 2 * l.padding || l.kernel > cur[2] + 2 * l.padding) {
          throw ShapeError(where + " kernel larger than padded input " + shape_to_string(cur));
        }
        cur = {l.channels, cur[1] + 2 * l.padding - l.kernel + 1, cur[2] + 2 * l.padding - l.kernel + 1};
        break;
      case LayerKind::maxpool2x2:
        if (cur.size() != 3 || cur[1] % 2 || cur[2] % 2) {
          throw ShapeError(where + " needs even spatial dims, got " + shape_to_string(cur));
        }
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ShapeError(where + " rate must be in [0, 1)");
        break;
      case LayerKind::relu:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void ModelSpec::validate() const {
  const auto shapes = layer_shapes();
  if (embedding_boundary == 0 || embedding_boundary >= layers.size()) {
    throw ShapeError("embedding boundary " + std::to_string(embedding_boundary) + " must split the " +
                     std::to_string(layers.size()) + "-layer stack");
  }
  const Shape& emb = shapes[embedding_boundary - 1];
  if (emb != Shape{embedding_dim}) {
    throw ShapeError("embedding output " + shape_to_string(emb) + " does not match embedding_dim " +
                     std::to_string(embedding_dim));
  }
  if (layers.back().kind != LayerKind::dense || shapes.back() != Shape{num_classes}) {
    throw ShapeError("final layer must be dense with " + std::to_string(num_classes) + " outputs");
  }
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json layers_json = nlohmann::json::array();
  for (const auto& l : layers) {
    nlohmann::json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::dense: j["units"] = l.units; break;
      case LayerKind::conv2d:
        j["channels"] = l.channels;
        j["kernel"] = l.kernel;
        j["padding"] = l.padding;
        break;
      case LayerKind::dropout: j["rate"] = l.rate; break;
      default: break;
    }
    layers_json.push_back(std::move(j));
  }
  return {{"input_shape", input_shape},
          {"layers", layers_json},
          {"embedding_boundary", embedding_boundary},
          {"embedding_dim", embedding_dim},
          {"num_classes", num_classes}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    s.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      l.units = lj.value("units", std::size_t{0});
      l.channels = lj.value("channels", std::size_t{0});
      l.kernel = lj.value("kernel", std::size_t{0});
      l.padding = lj.value("padding", std::size_t{0});
      l.rate = lj.value("rate", 0.0);
      s.layers.push_back(l);
    }
    s.embedding_boundary = j.at("embedding_boundary").get<std::size_t>();
    s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::bad_value, std::string("model spec: ") + e.what());
  }
}

ModelSpec make_preset(const std::string& name, const Shape& input_shape, std::size_t num_classes) {
  ModelSpec s;
  s.input_shape = input_shape;
  s.num_classes = num_classes;
  if (name == "mlp2") {
    s.layers = {LayerSpec::flatten(), LayerSpec::dense(64), LayerSpec::relu(), LayerSpec::dense(64),
                LayerSpec::relu(),    LayerSpec::dense(num_classes)};
    s.embedding_boundary = 5;
    s.embedding_dim = 64;
  } else if (name == "smallcnn") {
    s.layers = {LayerSpec::conv(8, 3, 1),  LayerSpec::relu(),    LayerSpec::maxpool(),
                LayerSpec::conv(16, 3, 1), LayerSpec::relu(),    LayerSpec::maxpool(),
                LayerSpec::flatten(),      LayerSpec::dense(128), LayerSpec::relu(),
                LayerSpec::dense(num_classes)};
    s.embedding_boundary = 9;
    s.embedding_dim = 128;
  } else {
    throw ConfigError("model.preset", "unknown preset '" + name + "' (expected mlp2 or smallcnn)");
  }
  s.validate();
  return s;
}

std::string Model::weight_name(std::size_t layer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "layer%02zu.weight", layer);
  return buf;
}

std::string Model::bias_name(std::size_t layer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "layer%02zu.bias", layer);
  return buf;
}

Model::Model(ModelSpec spec, ParameterMap params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  const auto shapes = spec_.layer_shapes();
  std::size_t expected = 0;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const Shape& in = i == 0 ? spec_.input_shape : shapes[i - 1];
    Shape w, b;
    if (l.kind == LayerKind::dense) {
      w = {in[0], l.units};
      b = {l.units};
    } else if (l.kind == LayerKind::conv2d) {
      w = {l.channels, in[0], l.kernel, l.kernel};
      b = {l.channels};
    } else {
      continue;
    }
    expected += 2;
    for (const auto& [name, shape] : {std::pair{weight_name(i), w}, std::pair{bias_name(i), b}}) {
      auto it = params_.find(name);
      if (it == params_.end()) throw ShapeError("missing parameter '" + name + "'");
      if (it->second.shape() != shape) {
        throw ShapeError("parameter '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                         ", expected " + shape_to_string(shape));
      }
    }
  }
  if (params_.size() != expected) throw ShapeError("model has unexpected extra parameters");
}

Model Model::initialize(ModelSpec spec, Rng& rng) {
  spec.validate();
  const auto shapes = spec.layer_shapes();
  ParameterMap params;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const Shape& in = i == 0 ? spec.input_shape : shapes[i - 1];
    Shape w, b;
    std::size_t fan_in = 0;
    if (l.kind == LayerKind::dense) {
      w = {in[0], l.units};
      b = {l.units};
      fan_in = in[0];
    } else if (l.kind == LayerKind::conv2d) {
      w = {l.channels, in[0], l.kernel, l.kernel};
      b = {l.channels};
      fan_in = in[0] * l.kernel * l.kernel;
    } else {
      continue;
    }
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor weights(w);
    for (auto& v : weights.data()) v = normal(rng);
    params.emplace(weight_name(i), std::move(weights));
    params.emplace(bias_name(i), Tensor(b, 0.0));
  }
  return Model(std::move(spec), std::move(params));
}

BoundParameters Model::bind(Tape& tape) const {
  BoundParameters bound;
  for (const auto& [name, value] : params_) bound.vars.emplace(name, tape.parameter(name, value));
  return bound;
}

Var Model::run_layers(Tape& tape, const BoundParameters& bound, Var x, std::size_t begin, std::size_t end,
                      const ForwardContext& ctx) const {
  for (std::size_t i = begin; i < end; ++i) {
    const auto& l = spec_.layers[i];
    switch (l.kind) {
      case LayerKind::dense:
        x = ops::dense(tape, x, bound.vars.at(weight_name(i)), bound.vars.at(bias_name(i)));
        break;
      case LayerKind::conv2d:
        x = ops::conv2d(tape, x, bound.vars.at(weight_name(i)), bound.vars.at(bias_name(i)), l.padding);
        break;
      case LayerKind::maxpool2x2:
        x = ops::maxpool2x2(tape, x);
        break;
      case LayerKind::relu:
        x = ops::relu(tape, x);
        break;
      case LayerKind::flatten: {
        const std::size_t batch = tape.value(x).dim(0);
        x = ops::reshape(tape, x, {batch, tape.value(x).size() / batch});
        break;
      }
      case LayerKind::dropout:
        if (ctx.training && l.rate > 0.0) {
          if (!ctx.rng) throw Error("dropout layer in training mode needs an rng");
          x = ops::dropout(tape, x, l.rate, true, *ctx.rng);
        }
        break;
    }
  }
  return x;
}

Var Model::embed(Tape& tape, const BoundParameters& bound, Var input, const ForwardContext& ctx) const {
  const Tensor& x = tape.value(input);
  Shape expected{x.rank() ? x.dim(0) : 0};
  expected.insert(expected.end(), spec_.input_shape.begin(), spec_.input_shape.end());
  if (x.shape() != expected) {
    throw ShapeError("model input " + shape_to_string(x.shape()) + " does not match expected [batch, " +
                     shape_to_string(spec_.input_shape) + "]");
  }
  return run_layers(tape, bound, input, 0, spec_.embedding_boundary, ctx);
}

Var Model::predict(Tape& tape, const BoundParameters& bound, Var embedding, const ForwardContext& ctx) const {
  return run_layers(tape, bound, embedding, spec_.embedding_boundary, spec_.layers.size(), ctx);
}

}  // namespace phantom
