#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hidp/errors.hpp"

namespace hidp {

enum class LayerKind { Conv, Pool, Dense, Flatten };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "Conv";
    case LayerKind::Pool: return "Pool";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Flatten: return "Flatten";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "Conv") return LayerKind::Conv;
  if (s == "Pool") return LayerKind::Pool;
  if (s == "Dense") return LayerKind::Dense;
  if (s == "Flatten") return LayerKind::Flatten;
  throw ValidationError("unknown layer kind '" + s + "'");
}

/// One layer of a (linearized) DNN chain. Dense/Flatten layers carry
/// kernel=stride=1, padding=0.
struct Layer {
  int id = 0;
  LayerKind kind = LayerKind::Conv;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int in_channels = 1;
  int out_channels = 1;

  bool spatial() const { return kind == LayerKind::Conv || kind == LayerKind::Pool; }
};

struct TensorShape {
  int height = 1;
  int width = 1;
  int channels = 1;
  int elem_bytes = 4;

  std::uint64_t elements() const {
    return std::uint64_t(height) * std::uint64_t(width) * std::uint64_t(channels);
  }
  bool operator==(const TensorShape&) const = default;
};

/// Total byte size of a tensor.
inline std::uint64_t tensor_bytes(const TensorShape& s) {
  return s.elements() * std::uint64_t(s.elem_bytes);
}

/// Output shape of `layer` applied to input `in`.
/// Conv/Pool use the usual floor((H + 2p - k)/s) + 1 geometry; Dense and
/// Flatten collapse to 1x1xC.
inline TensorShape layer_out_shape(const Layer& layer, const TensorShape& in) {
  TensorShape out;
  out.elem_bytes = in.elem_bytes;
  switch (layer.kind) {
    case LayerKind::Conv:
    case LayerKind::Pool: {
      if (layer.kernel < 1 || layer.stride < 1)
        throw GeometryError("kernel/stride must be >= 1 for layer " + std::to_string(layer.id));
      const int h = (in.height + 2 * layer.padding - layer.kernel) / layer.stride + 1;
      const int w = (in.width + 2 * layer.padding - layer.kernel) / layer.stride + 1;
      if (in.height + 2 * layer.padding < layer.kernel ||
          in.width + 2 * layer.padding < layer.kernel || h < 1 || w < 1)
        throw GeometryError("layer " + std::to_string(layer.id) +
                            " produces empty output from " + std::to_string(in.height) + "x" +
                            std::to_string(in.width));
      out.height = h;
      out.width = w;
      out.channels = layer.out_channels;
      return out;
    }
    case LayerKind::Dense:
    case LayerKind::Flatten:
      out.height = 1;
      out.width = 1;
      out.channels = layer.out_channels;
      return out;
  }
  throw GeometryError("unreachable layer kind");
}

/// Analytic flop count of one layer (2*MAC for Conv/Dense, window size for
/// Pool, zero for Flatten).
inline std::uint64_t layer_flops(const Layer& layer, const TensorShape& in) {
  const TensorShape out = layer_out_shape(layer, in);
  const std::uint64_t hw = std::uint64_t(out.height) * std::uint64_t(out.width);
  switch (layer.kind) {
    case LayerKind::Conv:
      return 2ull * std::uint64_t(layer.kernel) * std::uint64_t(layer.kernel) *
             std::uint64_t(layer.in_channels) * std::uint64_t(layer.out_channels) * hw;
    case LayerKind::Pool:
      return std::uint64_t(layer.kernel) * std::uint64_t(layer.kernel) *
             std::uint64_t(layer.out_channels) * hw;
    case LayerKind::Dense:
      return 2ull * std::uint64_t(layer.in_channels) * std::uint64_t(layer.out_channels);
    case LayerKind::Flatten:
      return 0;
  }
  return 0;
}

/// A validated DNN workload: a linear layer chain with precomputed shapes,
/// per-layer flop counts and boundary tensor sizes.
class DnnModel {
public:
  DnnModel(std::string name, std::vector<Layer> layers, TensorShape input, double compute_intensity)
      : name_(std::move(name)),
        layers_(std::move(layers)),
        input_(input),
        delta_(compute_intensity) {
    validate();
  }

  const std::string& name() const { return name_; }
  const std::vector<Layer>& layers() const { return layers_; }
  int layer_count() const { return int(layers_.size()); }
  const TensorShape& input_shape() const { return input_; }
  double compute_intensity() const { return delta_; }

  const TensorShape& in_shape(int i) const { return shapes_.at(std::size_t(i)); }
  const TensorShape& out_shape(int i) const { return shapes_.at(std::size_t(i) + 1); }

  std::uint64_t flops(int i) const { return flops_.at(std::size_t(i)); }
  std::uint64_t total_flops() const { return prefix_flops_.back(); }

  /// Bytes of the tensor flowing out of layer i (the block boundary after i).
  std::uint64_t boundary_bytes(int i) const { return tensor_bytes(out_shape(i)); }
  std::uint64_t input_bytes() const { return tensor_bytes(input_); }
  std::uint64_t output_bytes() const { return tensor_bytes(shapes_.back()); }

  /// Sum of layer flops over the half-open range [lo, hi).
  std::uint64_t block_flops(int lo, int hi) const {
    check_range(lo, hi);
    return prefix_flops_[std::size_t(hi)] - prefix_flops_[std::size_t(lo)];
  }

  /// Halo bytes exchanged across one interior split boundary for the range
  /// [lo, hi): sum over spatial layers with kernel > 1 of
  /// (kernel-1) * input_width * in_channels * elem_bytes.
  std::uint64_t halo_bytes_per_boundary(int lo, int hi) const {
    check_range(lo, hi);
    return prefix_halo_[std::size_t(hi)] - prefix_halo_[std::size_t(lo)];
  }

private:
  void check_range(int lo, int hi) const {
    if (lo < 0 || hi > layer_count() || lo >= hi)
      throw RangeError("bad layer range [" + std::to_string(lo) + "," + std::to_string(hi) +
                       ") for model with " + std::to_string(layer_count()) + " layers");
  }

  void validate() {
    if (layers_.empty()) throw ValidationError("model '" + name_ + "' has no layers");
    if (delta_ <= 0) throw ValidationError("compute_intensity must be > 0");
    if (input_.height < 1 || input_.width < 1 || input_.channels < 1 || input_.elem_bytes < 1)
      throw ValidationError("input shape fields must be >= 1");

    shapes_.clear();
    shapes_.push_back(input_);
    flops_.clear();
    prefix_flops_.assign(1, 0);
    prefix_halo_.assign(1, 0);

    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Layer& l = layers_[i];
      l.id = int(i);
      const TensorShape& in = shapes_.back();
      if (l.in_channels < 1 || l.out_channels < 1)
        throw ValidationError("layer " + std::to_string(i) + ": channel counts must be >= 1");
      switch (l.kind) {
        case LayerKind::Conv:
        case LayerKind::Pool:
          if (l.kernel < 1 || l.stride < 1)
            throw ValidationError("layer " + std::to_string(i) + ": kernel/stride must be >= 1");
          if (l.padding < 0)
            throw ValidationError("layer " + std::to_string(i) + ": padding must be >= 0");
          if (in.channels != l.in_channels)
            throw ValidationError("layer " + std::to_string(i) + ": in_channels " +
                                  std::to_string(l.in_channels) + " != incoming tensor channels " +
                                  std::to_string(in.channels));
          if (l.kind == LayerKind::Pool && l.in_channels != l.out_channels)
            throw ValidationError("layer " + std::to_string(i) + ": Pool cannot change channels");
          break;
        case LayerKind::Dense:
        case LayerKind::Flatten: {
          if (l.kernel != 1 || l.stride != 1 || l.padding != 0)
            throw ValidationError("layer " + std::to_string(i) +
                                  ": Dense/Flatten must have kernel=stride=1, padding=0");
          const std::uint64_t features = in.elements();
          if (l.kind == LayerKind::Dense && features != std::uint64_t(l.in_channels))
            throw ValidationError("layer " + std::to_string(i) + ": Dense in_channels " +
                                  std::to_string(l.in_channels) + " != incoming features " +
                                  std::to_string(features));
          if (l.kind == LayerKind::Flatten) {
            if (in.channels != l.in_channels)
              throw ValidationError("layer " + std::to_string(i) +
                                    ": Flatten in_channels != incoming tensor channels");
            if (features != std::uint64_t(l.out_channels))
              throw ValidationError("layer " + std::to_string(i) + ": Flatten out_channels " +
                                    std::to_string(l.out_channels) + " != incoming features " +
                                    std::to_string(features));
          }
          break;
        }
      }
      TensorShape out;
      std::uint64_t f = 0;
      try {
        out = layer_out_shape(l, in);
        f = layer_flops(l, in);
      } catch (const GeometryError& e) {
        throw ValidationError(std::string("shape propagation failed: ") + e.what());
      }
      shapes_.push_back(out);
      flops_.push_back(f);
      prefix_flops_.push_back(prefix_flops_.back() + f);
      std::uint64_t halo = 0;
      if (l.spatial() && l.kernel > 1)
        halo = std::uint64_t(l.kernel - 1) * std::uint64_t(in.width) *
               std::uint64_t(l.in_channels) * std::uint64_t(in.elem_bytes);
      prefix_halo_.push_back(prefix_halo_.back() + halo);
    }
  }

  std::string name_;
  std::vector<Layer> layers_;
  TensorShape input_;
  double delta_;
  std::vector<TensorShape> shapes_;      // n+1 entries, shapes_[0] == input
  std::vector<std::uint64_t> flops_;     // per layer
  std::vector<std::uint64_t> prefix_flops_;
  std::vector<std::uint64_t> prefix_halo_;
};

/// Free-function form matching the rest of the API.
inline std::uint64_t block_flops(const DnnModel& m, int lo, int hi) {
  return m.block_flops(lo, hi);
}

namespace detail {

inline int get_int(const nlohmann::json& j, const char* key, int fallback, bool required) {
  if (!j.contains(key)) {
    if (required) throw ParseError(std::string("missing field '") + key + "'");
    return fallback;
  }
  if (!j[key].is_number_integer() && !j[key].is_number_unsigned())
    throw ParseError(std::string("field '") + key + "' must be an integer");
  return j[key].get<int>();
}

}  // namespace detail

/// Parses a model-spec document:
/// {name, input: {h,w,c,elem_bytes}, compute_intensity,
///  layers: [{kind, kernel, stride, padding, in_channels, out_channels}]}
inline DnnModel load_model_spec(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("name") || !j.contains("input") || !j.contains("layers"))
    throw ParseError("model spec must be an object with name/input/layers");

  TensorShape input;
  const auto& ji = j["input"];
  input.height = detail::get_int(ji, "h", 0, true);
  input.width = detail::get_int(ji, "w", 0, true);
  input.channels = detail::get_int(ji, "c", 0, true);
  input.elem_bytes = detail::get_int(ji, "elem_bytes", 4, false);

  double delta = 1.0;
  if (j.contains("compute_intensity")) {
    if (!j["compute_intensity"].is_number()) throw ParseError("compute_intensity must be a number");
    delta = j["compute_intensity"].get<double>();
  }

  std::vector<Layer> layers;
  if (!j["layers"].is_array() || j["layers"].empty())
    throw ParseError("layers must be a non-empty array");
  for (const auto& jl : j["layers"]) {
    Layer l;
    if (!jl.contains("kind") || !jl["kind"].is_string())
      throw ParseError("every layer needs a string 'kind'");
    l.kind = layer_kind_from_string(jl["kind"].get<std::string>());
    l.kernel = detail::get_int(jl, "kernel", 1, l.spatial());
    l.stride = detail::get_int(jl, "stride", 1, false);
    l.padding = detail::get_int(jl, "padding", 0, false);
    l.in_channels = detail::get_int(jl, "in_channels", 0, true);
    l.out_channels = detail::get_int(jl, "out_channels", 0, true);
    layers.push_back(l);
  }

  try {
    return DnnModel(j["name"].get<std::string>(), std::move(layers), input, delta);
  } catch (const ValidationError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad field type: ") + e.what());
  }
}

inline DnnModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model spec '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_model_spec(ss.str());
}

}  // namespace hidp
