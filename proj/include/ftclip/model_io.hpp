#pragma once

// .ftc model container:
//   bytes 0..7   magic "FTCLIP01"
//   u32 LE       manifest length in bytes
//   UTF-8 JSON   manifest (topology, shapes, numeric format, thresholds, normalization)
//   payload      per parametric layer in manifest order: weights words then bias words, u32 LE
//   u32 LE       CRC32 over the payload bytes

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "ftclip/model.hpp"

namespace ftclip {

inline constexpr char kFtcMagic[8] = {'F', 'T', 'C', 'L', 'I', 'P', '0', '1'};
inline constexpr int kManifestVersion = 1;

class ModelFormatError : public std::runtime_error {
 public:
  enum class Code {
    io,
    truncated_header,
    bad_magic,
    version_mismatch,
    bad_manifest,
    truncated_payload,
    trailing_bytes,
    inconsistent_tensor_size,
    inconsistent_shapes,
    checksum_mismatch,
  };

  ModelFormatError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

namespace detail {

using json = nlohmann::json;

inline json pair_json(const Pair& p) { return json::array({p[0], p[1]}); }

inline Pair json_pair(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected a 2-element array");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

inline json threshold_json(float t) {
  if (std::isinf(t) && t > 0) return "inf";
  return static_cast<double>(t);
}

inline float json_threshold(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<float>::infinity();
  return static_cast<float>(j.get<double>());
}

inline json layer_json(const Layer& layer) {
  json j;
  j["name"] = layer.name;
  j["kind"] = kind_name(layer.kind());
  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, Conv2d>) {
          j["in_channels"] = op.in_channels;
          j["out_channels"] = op.out_channels;
          j["kernel"] = pair_json(op.kernel);
          j["stride"] = pair_json(op.stride);
          j["padding"] = pair_json(op.padding);
        } else if constexpr (std::is_same_v<T, FullyConnected>) {
          j["in_features"] = op.in_features;
          j["out_features"] = op.out_features;
        } else if constexpr (std::is_same_v<T, MaxPool2d>) {
          j["pool"] = pair_json(op.pool);
          j["stride"] = pair_json(op.stride);
        } else if constexpr (std::is_same_v<T, ClippedRelu>) {
          j["threshold"] = threshold_json(op.threshold);
        }
      },
      layer.op);
  if (layer.has_params()) {
    j["weights"] = {{"shape", layer.weights.shape}, {"words", layer.weights.words.size()}};
    j["bias"] = {{"shape", layer.bias.shape}, {"words", layer.bias.words.size()}};
  }
  return j;
}

inline LayerOp layer_op(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "conv2d") {
    return Conv2d{j.at("in_channels").get<std::size_t>(), j.at("out_channels").get<std::size_t>(),
                  json_pair(j.at("kernel")), json_pair(j.at("stride")), json_pair(j.at("padding"))};
  }
  if (kind == "fully_connected") {
    return FullyConnected{j.at("in_features").get<std::size_t>(), j.at("out_features").get<std::size_t>()};
  }
  if (kind == "maxpool2d") return MaxPool2d{json_pair(j.at("pool")), json_pair(j.at("stride"))};
  if (kind == "relu") return Relu{};
  if (kind == "clipped_relu") return ClippedRelu{json_threshold(j.at("threshold"))};
  if (kind == "flatten") return Flatten{};
  if (kind == "softmax_argmax") return SoftmaxArgmax{};
  throw std::invalid_argument("unknown layer kind '" + kind + "'");
}

inline json format_json(const NumericFormat& f) {
  if (f.kind == NumericFormat::Kind::float32) return {{"kind", "float32"}, {"word_bits", 32}};
  return {{"kind", "fixed32"}, {"word_bits", 32}, {"int_bits", f.int_bits}, {"frac_bits", f.frac_bits}};
}

inline NumericFormat json_format(const json& j) {
  if (j.value("word_bits", 32) != 32) throw std::invalid_argument("only 32-bit words are supported");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "float32") return NumericFormat::float32();
  if (kind == "fixed32") return NumericFormat::fixed32(j.at("int_bits").get<int>(), j.at("frac_bits").get<int>());
  throw std::invalid_argument("unknown numeric format '" + kind + "'");
}

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

inline void append_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>(v >> s));
}

}  // namespace detail

/// The JSON manifest describing `model` (no payload).
inline nlohmann::json model_manifest(const Model& model) {
  using detail::json;
  json m;
  m["format_version"] = kManifestVersion;
  m["name"] = model.name;
  m["input_shape"] = model.input_shape;
  m["classes"] = model.classes;
  m["numeric_format"] = detail::format_json(model.format);
  if (model.normalization) {
    m["normalization"] = {{"mean", model.normalization->mean}, {"std", model.normalization->stddev}};
  }
  json layers = json::array();
  for (const auto& layer : model.layers) layers.push_back(detail::layer_json(layer));
  m["layers"] = std::move(layers);
  if (!model.metadata.empty()) m["metadata"] = model.metadata;
  return m;
}

/// Serializes to the canonical .ftc byte layout.
inline std::vector<unsigned char> encode_model(const Model& model) {
  infer_shapes(model);
  const std::string manifest = model_manifest(model).dump(1);
  std::vector<unsigned char> out(std::begin(kFtcMagic), std::end(kFtcMagic));
  detail::append_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out.insert(out.end(), manifest.begin(), manifest.end());
  const std::size_t payload_begin = out.size();
  for (const auto& layer : model.layers) {
    for (const auto* block : {&layer.weights, &layer.bias})
      for (std::uint32_t w : block->words) detail::append_u32(out, w);
  }
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + payload_begin,
                          static_cast<uInt>(out.size() - payload_begin));
  detail::append_u32(out, static_cast<std::uint32_t>(crc));
  return out;
}

/// Parses .ftc bytes. Stored words are preserved verbatim.
inline Model decode_model(std::span<const unsigned char> bytes) {
  using Code = ModelFormatError::Code;
  using detail::json;
  if (bytes.size() < 12) throw ModelFormatError(Code::truncated_header, "truncated header");
  if (std::memcmp(bytes.data(), kFtcMagic, 6) != 0) throw ModelFormatError(Code::bad_magic, "bad magic");
  if (std::memcmp(bytes.data(), kFtcMagic, 8) != 0) {
    throw ModelFormatError(Code::version_mismatch,
                           "container version '" + std::string(bytes.begin() + 6, bytes.begin() + 8) +
                               "' not supported (expected '01')");
  }
  const std::size_t manifest_len = detail::read_u32(bytes.data() + 8);
  if (bytes.size() - 12 < manifest_len) throw ModelFormatError(Code::truncated_header, "truncated header: manifest");

  Model model;
  std::vector<std::size_t> word_counts;
  try {
    const json m = json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(manifest_len));
    if (m.at("format_version").get<int>() != kManifestVersion) {
      throw ModelFormatError(Code::version_mismatch,
                             "manifest version " + m.at("format_version").dump() + " not supported");
    }
    model.name = m.value("name", "");
    model.input_shape = m.at("input_shape").get<Shape>();
    model.classes = m.at("classes").get<std::size_t>();
    model.format = detail::json_format(m.at("numeric_format"));
    if (m.contains("normalization")) {
      model.normalization = Normalization{m["normalization"].at("mean").get<std::vector<float>>(),
                                          m["normalization"].at("std").get<std::vector<float>>()};
    }
    if (m.contains("metadata")) model.metadata = m["metadata"].get<std::map<std::string, std::string>>();
    for (const auto& lj : m.at("layers")) {
      Layer layer;
      layer.name = lj.value("name", "");
      layer.op = detail::layer_op(lj);
      if (layer.has_params()) {
        for (auto [key, block] : {std::pair{"weights", &layer.weights}, std::pair{"bias", &layer.bias}}) {
          block->shape = lj.at(key).at("shape").get<Shape>();
          const auto words = lj.at(key).at("words").get<std::size_t>();
          if (words != shape_product(block->shape)) {
            throw ModelFormatError(Code::inconsistent_tensor_size,
                                   "inconsistent tensor size: layer '" + layer.name + "' " + key + " declares " +
                                       std::to_string(words) + " words for shape " + shape_to_string(block->shape));
          }
          word_counts.push_back(words);
        }
      }
      model.layers.push_back(std::move(layer));
    }
  } catch (const ModelFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelFormatError(Code::bad_manifest, std::string("bad manifest: ") + e.what());
  }

  std::size_t total = 0;
  for (auto n : word_counts) total += n;
  const std::size_t payload_begin = 12 + manifest_len;
  const std::size_t available = bytes.size() - payload_begin;
  if (available < total * 4 + 4) {
    throw ModelFormatError(Code::truncated_payload, "truncated tensor data: need " + std::to_string(total * 4 + 4) +
                                                        " bytes after manifest, have " + std::to_string(available));
  }
  if (available > total * 4 + 4) {
    throw ModelFormatError(Code::trailing_bytes, "unexpected " + std::to_string(available - total * 4 - 4) +
                                                     " trailing bytes");
  }
  const unsigned char* p = bytes.data() + payload_begin;
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), p, static_cast<uInt>(total * 4));
  if (static_cast<std::uint32_t>(crc) != detail::read_u32(p + total * 4)) {
    throw ModelFormatError(Code::checksum_mismatch, "payload CRC32 mismatch");
  }
  for (auto& layer : model.layers) {
    if (!layer.has_params()) continue;
    for (auto* block : {&layer.weights, &layer.bias}) {
      block->words.resize(shape_product(block->shape));
      for (auto& w : block->words) {
        w = detail::read_u32(p);
        p += 4;
      }
    }
  }
  try {
    infer_shapes(model);
  } catch (const std::exception& e) {
    throw ModelFormatError(Code::inconsistent_shapes, std::string("inconsistent shapes: ") + e.what());
  }
  return model;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError(ModelFormatError::Code::io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Model load_model(const std::string& path) { return decode_model(read_file_bytes(path)); }

inline void save_model(const Model& model, const std::string& path) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelFormatError(ModelFormatError::Code::io, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelFormatError(ModelFormatError::Code::io, "write failed for '" + path + "'");
}

}  // namespace ftclip
