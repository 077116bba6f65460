#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "advmap/core/error.hpp"

namespace advmap::nn {

enum class ArchKind { kMlp = 1, kLenet = 2, kCustom = 3 };

inline std::string_view arch_kind_name(ArchKind kind) {
  switch (kind) {
    case ArchKind::kMlp: return "MLP";
    case ArchKind::kLenet: return "LENET";
    case ArchKind::kCustom: return "CUSTOM";
  }
  return "?";
}

inline ArchKind parse_arch_kind(std::string_view name) {
  if (name == "MLP" || name == "mlp") return ArchKind::kMlp;
  if (name == "LENET" || name == "lenet") return ArchKind::kLenet;
  if (name == "CUSTOM" || name == "custom") return ArchKind::kCustom;
  throw Error(ErrorCode::kInvalidArgument, "unknown architecture kind '" + std::string(name) + "'");
}

enum class LayerType { kDense = 1, kConv = 2, kMaxPool = 3, kRelu = 4 };

// Activations are laid out as height x width x channels, flattened row-major.
// A flat input vector is therefore H=1, W=1, C=features.
struct FeatureShape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

struct LayerSpec {
  LayerType type = LayerType::kRelu;
  std::size_t units = 0;   // dense output features or conv output channels
  std::size_t kernel = 0;  // square conv kernel (valid padding, stride 1)
  FeatureShape in;
  FeatureShape out;

  bool has_params() const { return type == LayerType::kDense || type == LayerType::kConv; }
  std::size_t fan_in() const {
    return type == LayerType::kConv ? kernel * kernel * in.channels : in.size();
  }
  std::size_t weight_rows() const { return fan_in(); }
  std::size_t weight_cols() const { return units; }
};

class Architecture {
 public:
  Architecture() = default;

  /// 784 -> 512 -> 512 -> 512 -> 10, ReLU between dense layers.
  static Architecture mlp() {
    Architecture a(ArchKind::kMlp, {28, 28, 1});
    for (int i = 0; i < 3; ++i) a.dense(512).relu();
    a.dense(10);
    return a;
  }

  /// conv(1->10,5x5) pool relu conv(10->20,5x5) pool relu dense(320->50) relu dense(50->10).
  static Architecture lenet() {
    Architecture a(ArchKind::kLenet, {28, 28, 1});
    a.conv(10, 5).max_pool().relu().conv(20, 5).max_pool().relu().dense(50).relu().dense(10);
    return a;
  }

  static Architecture custom(FeatureShape input) { return Architecture(ArchKind::kCustom, input); }

  Architecture& dense(std::size_t units) {
    LayerSpec l{LayerType::kDense, units, 0, current(), {1, 1, units}};
    layers_.push_back(l);
    return *this;
  }
  Architecture& conv(std::size_t out_channels, std::size_t kernel) {
    const auto in = current();
    require(in.height >= kernel && in.width >= kernel, ErrorCode::kInvalidArgument,
            "conv kernel larger than input");
    layers_.push_back({LayerType::kConv, out_channels, kernel, in,
                       {in.height - kernel + 1, in.width - kernel + 1, out_channels}});
    return *this;
  }
  Architecture& max_pool() {
    const auto in = current();
    require(in.height % 2 == 0 && in.width % 2 == 0, ErrorCode::kInvalidArgument,
            "2x2 max pool needs even spatial dims");
    layers_.push_back({LayerType::kMaxPool, 0, 2, in, {in.height / 2, in.width / 2, in.channels}});
    return *this;
  }
  Architecture& relu() {
    layers_.push_back({LayerType::kRelu, 0, 0, current(), current()});
    return *this;
  }

  ArchKind kind() const { return kind_; }
  const FeatureShape& input_shape() const { return input_; }
  std::size_t input_size() const { return input_.size(); }
  std::size_t num_classes() const { return current().size(); }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  std::size_t param_tensor_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.has_params() ? 2 : 0;
    return n;
  }

  friend bool operator==(const Architecture& a, const Architecture& b) {
    if (a.kind_ != b.kind_ || !(a.input_ == b.input_) || a.layers_.size() != b.layers_.size())
      return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      const auto &x = a.layers_[i], &y = b.layers_[i];
      if (x.type != y.type || x.units != y.units || x.kernel != y.kernel) return false;
    }
    return true;
  }

 private:
  Architecture(ArchKind kind, FeatureShape input) : kind_(kind), input_(input) {}
  FeatureShape current() const { return layers_.empty() ? input_ : layers_.back().out; }

  ArchKind kind_ = ArchKind::kCustom;
  FeatureShape input_;
  std::vector<LayerSpec> layers_;
};

}  // namespace advmap::nn
