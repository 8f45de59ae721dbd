#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <zlib.h>

#include "ftclip/numeric_format.hpp"
#include "ftclip/ops.hpp"
#include "ftclip/tensor.hpp"

namespace ftclip {

// Layer hyperparameters. Conv and FC layers own parameter words; the rest own none.
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Pair kernel{1, 1};
  Pair stride{1, 1};
  Pair padding{0, 0};
};

struct FullyConnected {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

struct MaxPool2d {
  Pair pool{2, 2};
  Pair stride{2, 2};
};

struct Relu {};

struct ClippedRelu {
  float threshold = std::numeric_limits<float>::infinity();
};

struct Flatten {};

/// Terminal classification layer. Forward is the identity on logits; `classify` takes the argmax.
struct SoftmaxArgmax {};

using LayerOp = std::variant<Conv2d, FullyConnected, MaxPool2d, Relu, ClippedRelu, Flatten, SoftmaxArgmax>;

enum class LayerKind { conv2d, fully_connected, maxpool2d, relu, clipped_relu, flatten, softmax_argmax };

inline LayerKind kind_of(const LayerOp& op) { return static_cast<LayerKind>(op.index()); }

inline const char* kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::relu: return "relu";
    case LayerKind::clipped_relu: return "clipped_relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::softmax_argmax: return "softmax_argmax";
  }
  return "?";
}

/// Stored parameter tensor: shape plus raw 32-bit words in row-major order.
struct ParamTensor {
  Shape shape;
  std::vector<std::uint32_t> words;

  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

struct Layer {
  std::string name;
  LayerOp op;
  ParamTensor weights;  // conv2d / fully_connected only
  ParamTensor bias;

  LayerKind kind() const { return kind_of(op); }
  bool has_params() const {
    return kind() == LayerKind::conv2d || kind() == LayerKind::fully_connected;
  }
  bool is_activation() const {
    return kind() == LayerKind::relu || kind() == LayerKind::clipped_relu;
  }
  /// Weights words first, then bias words.
  std::size_t word_count() const { return weights.words.size() + bias.words.size(); }
  std::uint32_t word(std::size_t i) const {
    return i < weights.words.size() ? weights.words[i] : bias.words[i - weights.words.size()];
  }
  std::uint32_t& word(std::size_t i) {
    return i < weights.words.size() ? weights.words[i] : bias.words[i - weights.words.size()];
  }
};

/// Per-channel input normalization applied after pixel scaling: (x - mean[c]) / std[c].
struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct Model {
  std::string name;
  Shape input_shape;  // C,H,W
  std::size_t classes = 0;
  NumericFormat format;
  std::optional<Normalization> normalization;
  std::vector<Layer> layers;
  std::map<std::string, std::string> metadata;  // free-form provenance, stored in the manifest

  /// Graph indices of relu / clipped_relu layers, in order.
  std::vector<std::size_t> activation_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].is_activation()) out.push_back(i);
    return out;
  }

  /// Graph indices of conv2d / fully_connected layers, in order.
  std::vector<std::size_t> param_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].has_params()) out.push_back(i);
    return out;
  }

  /// Clip threshold per activation layer; nullopt for a plain relu.
  std::vector<std::optional<float>> thresholds() const {
    std::vector<std::optional<float>> out;
    for (const auto& layer : layers) {
      if (const auto* c = std::get_if<ClippedRelu>(&layer.op)) out.emplace_back(c->threshold);
      else if (layer.kind() == LayerKind::relu) out.emplace_back(std::nullopt);
    }
    return out;
  }

  std::size_t total_words() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.word_count();
    return n;
  }
};

/// CRC32 over every parameter word (little-endian bytes), in layer order.
inline std::uint32_t param_checksum(const Model& model) {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& layer : model.layers) {
    for (const auto* block : {&layer.weights, &layer.bias}) {
      for (std::uint32_t w : block->words) {
        const unsigned char b[4] = {static_cast<unsigned char>(w), static_cast<unsigned char>(w >> 8),
                                    static_cast<unsigned char>(w >> 16),
                                    static_cast<unsigned char>(w >> 24)};
        crc = crc32(crc, b, 4);
      }
    }
  }
  return static_cast<std::uint32_t>(crc);
}

/// Propagates the input shape through the layer graph and returns each layer's output shape.
/// Throws DimensionError on any inconsistency between hyperparameters, stored tensors and shapes.
inline std::vector<Shape> infer_shapes(const Model& model) {
  if (model.input_shape.size() != 3) {
    throw DimensionError("model input shape must be C,H,W, got " + shape_to_string(model.input_shape));
  }
  if (model.normalization) {
    const auto c = model.input_shape[0];
    if (model.normalization->mean.size() != c || model.normalization->stddev.size() != c) {
      throw DimensionError("normalization needs one mean/std per input channel (" +
                           std::to_string(c) + ")");
    }
  }
  std::vector<Shape> shapes;
  Shape cur = model.input_shape;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& layer = model.layers[li];
    const std::string where = "layer " + std::to_string(li) + " (" + layer.name + ")";
    std::visit(
        [&](const auto& op) {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, Conv2d>) {
            if (cur.size() != 3) throw DimensionError(where + ": conv2d needs C,H,W input, got " + shape_to_string(cur));
            if (cur[0] != op.in_channels)
              throw DimensionError(where + ": input channel axis " + std::to_string(cur[0]) +
                                   " != in_channels " + std::to_string(op.in_channels));
            const Shape ws{op.out_channels, op.in_channels, op.kernel[0], op.kernel[1]};
            if (layer.weights.shape != ws)
              throw DimensionError(where + ": weights shape " + shape_to_string(layer.weights.shape) +
                                   " != expected " + shape_to_string(ws));
            if (layer.bias.shape != Shape{op.out_channels})
              throw DimensionError(where + ": bias shape " + shape_to_string(layer.bias.shape) +
                                   " != [" + std::to_string(op.out_channels) + "]");
            if (op.stride[0] == 0 || op.stride[1] == 0) throw DimensionError(where + ": stride must be >= 1");
            for (int a = 0; a < 2; ++a) {
              if (op.kernel[a] == 0 || op.kernel[a] > cur[1 + a] + 2 * op.padding[a])
                throw DimensionError(where + ": kernel does not fit " + (a ? "width" : "height") + " axis");
            }
            cur = {op.out_channels, conv_output_extent(cur[1], op.kernel[0], op.stride[0], op.padding[0]),
                   conv_output_extent(cur[2], op.kernel[1], op.stride[1], op.padding[1])};
          } else if constexpr (std::is_same_v<T, FullyConnected>) {
            if (shape_product(cur) != op.in_features)
              throw DimensionError(where + ": input length " + std::to_string(shape_product(cur)) +
                                   " != in_features " + std::to_string(op.in_features));
            const Shape ws{op.out_features, op.in_features};
            if (layer.weights.shape != ws)
              throw DimensionError(where + ": weights shape " + shape_to_string(layer.weights.shape) +
                                   " != expected " + shape_to_string(ws));
            if (layer.bias.shape != Shape{op.out_features})
              throw DimensionError(where + ": bias shape " + shape_to_string(layer.bias.shape) +
                                   " != [" + std::to_string(op.out_features) + "]");
            cur = {op.out_features};
          } else if constexpr (std::is_same_v<T, MaxPool2d>) {
            if (cur.size() != 3) throw DimensionError(where + ": maxpool2d needs C,H,W input");
            if (op.stride[0] == 0 || op.stride[1] == 0) throw DimensionError(where + ": stride must be >= 1");
            for (int a = 0; a < 2; ++a) {
              if (op.pool[a] == 0 || op.pool[a] > cur[1 + a])
                throw DimensionError(where + ": pool window larger than " + (a ? "width" : "height") + " axis");
            }
            cur = {cur[0], conv_output_extent(cur[1], op.pool[0], op.stride[0], 0),
                   conv_output_extent(cur[2], op.pool[1], op.stride[1], 0)};
          } else if constexpr (std::is_same_v<T, Flatten>) {
            cur = {shape_product(cur)};
          } else if constexpr (std::is_same_v<T, ClippedRelu>) {
            check_threshold(op.threshold);
          } else if constexpr (std::is_same_v<T, SoftmaxArgmax>) {
            if (li + 1 != model.layers.size())
              throw DimensionError(where + ": softmax_argmax must be the last layer");
          }
          if constexpr (!std::is_same_v<T, Conv2d> && !std::is_same_v<T, FullyConnected>) {
            if (!layer.weights.words.empty() || !layer.bias.words.empty())
              throw DimensionError(where + ": " + kind_name(layer.kind()) + " carries no parameters");
          }
        },
        layer.op);
    for (const auto* block : {&layer.weights, &layer.bias}) {
      if (layer.has_params() && shape_product(block->shape) != block->words.size())
        throw DimensionError(where + ": word count " + std::to_string(block->words.size()) +
                             " != shape product of " + shape_to_string(block->shape));
    }
    shapes.push_back(cur);
  }
  if (shape_product(cur) != model.classes) {
    throw DimensionError("network output length " + std::to_string(shape_product(cur)) +
                         " != class count " + std::to_string(model.classes));
  }
  return shapes;
}

/// Returns a copy whose activation layers are clipped with the given thresholds, one per
/// activation layer. Parameter words are never touched.
inline Model set_thresholds(const Model& model, std::span<const float> thresholds) {
  const auto acts = model.activation_layers();
  if (thresholds.size() != acts.size()) {
    throw ConfigError("expected " + std::to_string(acts.size()) + " thresholds (one per activation layer), got " +
                      std::to_string(thresholds.size()));
  }
  for (float t : thresholds) check_threshold(t);
  Model out = model;
  for (std::size_t k = 0; k < acts.size(); ++k) out.layers[acts[k]].op = ClippedRelu{thresholds[k]};
  return out;
}

/// Sets the threshold of one activation layer (by activation ordinal).
inline Model with_threshold(const Model& model, std::size_t activation, float threshold) {
  check_threshold(threshold);
  const auto acts = model.activation_layers();
  if (activation >= acts.size()) {
    throw ConfigError("activation layer " + std::to_string(activation) + " out of range (model has " +
                      std::to_string(acts.size()) + ")");
  }
  Model out = model;
  out.layers[acts[activation]].op = ClippedRelu{threshold};
  return out;
}

/// Reverts every clipped activation to a plain relu.
inline Model strip_thresholds(const Model& model) {
  Model out = model;
  for (auto& layer : out.layers)
    if (layer.kind() == LayerKind::clipped_relu) layer.op = Relu{};
  return out;
}

/// A model with parameter words decoded to float32 tensors, ready for repeated inference.
/// Decoding happens once, at construction.
class InferenceModel {
 public:
  using Tap = std::function<void(std::size_t layer_index, const Tensor& output)>;

  explicit InferenceModel(const Model& model) : model_(&model) {
    infer_shapes(model);
    weights_.resize(model.layers.size());
    bias_.resize(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      const Layer& layer = model.layers[i];
      if (!layer.has_params()) continue;
      weights_[i] = decode(layer.weights, model.format);
      bias_[i] = decode(layer.bias, model.format);
    }
  }

  const Model& model() const { return *model_; }

  /// Runs the network on one C,H,W image with values in [0,1]. `tap` sees every layer's output.
  Tensor forward(const Tensor& image, const Tap& tap = {}) const { return forward_from(0, preprocess(image), tap); }

  /// Runs layers [start, end) on `x`, the input of layer `start` (already preprocessed when
  /// start == 0).
  Tensor forward_from(std::size_t start, Tensor x, const Tap& tap = {}) const {
    const auto& layers = model_->layers;
    for (std::size_t i = start; i < layers.size(); ++i) {
      x = std::visit(
          [&](const auto& op) -> Tensor {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Conv2d>) return conv2d_forward(x, weights_[i], bias_[i], op.stride, op.padding);
            else if constexpr (std::is_same_v<T, FullyConnected>) return fc_forward(x, weights_[i], bias_[i]);
            else if constexpr (std::is_same_v<T, MaxPool2d>) return maxpool2d_forward(x, op.pool, op.stride);
            else if constexpr (std::is_same_v<T, Relu>) return relu(x);
            else if constexpr (std::is_same_v<T, ClippedRelu>) return clipped_relu(x, op.threshold);
            else if constexpr (std::is_same_v<T, Flatten>) return x.reshaped({x.size()});
            else return x.reshaped({x.size()});
          },
          layers[i].op);
      if (tap) tap(i, x);
    }
    return x;
  }

  Classification predict(const Tensor& image) const { return classify(forward(image)); }

  /// Validates the input shape and applies the manifest normalization, if any.
  Tensor preprocess(const Tensor& image) const {
    if (image.shape() != model_->input_shape) {
      throw DimensionError("input shape " + shape_to_string(image.shape()) + " != model input " +
                           shape_to_string(model_->input_shape));
    }
    if (!model_->normalization) return image;
    Tensor out = image;
    const auto& norm = *model_->normalization;
    const std::size_t plane = image.size() / model_->input_shape[0];
    for (std::size_t c = 0; c < model_->input_shape[0]; ++c) {
      for (std::size_t k = 0; k < plane; ++k) {
        float& v = out[c * plane + k];
        v = (v - norm.mean[c]) / norm.stddev[c];
      }
    }
    return out;
  }

 private:
  static Tensor decode(const ParamTensor& p, const NumericFormat& fmt) {
    std::vector<float> values(p.words.size());
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = static_cast<float>(decode_word(p.words[k], fmt));
    return Tensor(p.shape, std::move(values));
  }

  const Model* model_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> bias_;
};

}  // namespace ftclip
