#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "advmap/core/binary_io.hpp"
#include "advmap/nn/train.hpp"

namespace advmap::nn {

// Layout (all little-endian):
//   "ADVMODEL" u32 version
//   u32 arch kind, u32 input h, w, c, u32 layer count, {u32 type, units, kernel}*
//   u64 seed, u32 epochs, u32 batch, f64 lr, u32 optimizer(1 = adam), u32 precision bits
//   u32 tensor count, {u32 rank, u32 dims..., f32 values...}*
inline constexpr std::string_view kModelMagic = "ADVMODEL";
inline constexpr std::uint32_t kModelFormatVersion = 1;

inline std::vector<char> encode_model(const Model& model) {
  io::LeWriter w;
  w.bytes(kModelMagic);
  w.u32(kModelFormatVersion);
  const auto& arch = model.architecture();
  w.u32(static_cast<std::uint32_t>(arch.kind()));
  w.u32(static_cast<std::uint32_t>(arch.input_shape().height));
  w.u32(static_cast<std::uint32_t>(arch.input_shape().width));
  w.u32(static_cast<std::uint32_t>(arch.input_shape().channels));
  w.u32(static_cast<std::uint32_t>(arch.layers().size()));
  for (const auto& l : arch.layers()) {
    w.u32(static_cast<std::uint32_t>(l.type));
    w.u32(static_cast<std::uint32_t>(l.units));
    w.u32(static_cast<std::uint32_t>(l.kernel));
  }
  w.u64(model.seed);
  w.u32(model.config.epochs);
  w.u32(model.config.batch_size);
  w.f64(model.config.learning_rate);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(model.config.precision));
  w.u32(static_cast<std::uint32_t>(model.net.params().size()));
  for (const auto& t : model.net.params()) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(t.span());
  }
  return w.buffer();
}

inline Model decode_model(std::span<const char> bytes) {
  io::LeReader r(bytes);
  require(r.bytes(kModelMagic.size()) == kModelMagic, ErrorCode::kBadMagic, "not a model file");
  const auto version = r.u32();
  require(version == kModelFormatVersion, ErrorCode::kFormat,
          "unsupported model format version " + std::to_string(version));
  const auto kind = static_cast<ArchKind>(r.u32());
  FeatureShape input;
  input.height = r.u32();
  input.width = r.u32();
  input.channels = r.u32();
  Architecture arch = Architecture::custom(input);
  const auto n_layers = r.u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto type = static_cast<LayerType>(r.u32());
    const auto units = r.u32();
    const auto kernel = r.u32();
    switch (type) {
      case LayerType::kDense: arch.dense(units); break;
      case LayerType::kConv: arch.conv(units, kernel); break;
      case LayerType::kMaxPool: arch.max_pool(); break;
      case LayerType::kRelu: arch.relu(); break;
      default: throw Error(ErrorCode::kFormat, "unknown layer type in model file");
    }
  }
  Architecture canonical = kind == ArchKind::kMlp     ? Architecture::mlp()
                           : kind == ArchKind::kLenet ? Architecture::lenet()
                                                      : arch;
  require(kind == ArchKind::kCustom ||
              (canonical.layers().size() == arch.layers().size() &&
               canonical.input_shape() == input &&
               [&] {
                 for (std::size_t i = 0; i < arch.layers().size(); ++i) {
                   const auto &a = arch.layers()[i], &b = canonical.layers()[i];
                   if (a.type != b.type || a.units != b.units || a.kernel != b.kernel) return false;
                 }
                 return true;
               }()),
          ErrorCode::kFormat, "layer list does not match declared architecture kind");
  Model model;
  model.seed = r.u64();
  model.config.seed = model.seed;
  model.config.epochs = r.u32();
  model.config.batch_size = r.u32();
  model.config.learning_rate = r.f64();
  require(r.u32() == 1, ErrorCode::kFormat, "unknown optimizer id");
  model.config.precision = static_cast<Precision>(r.u32());
  std::vector<Tensor<float>> params(r.u32());
  for (auto& t : params) {
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    Tensor<float> tensor(shape);
    r.f32s(tensor.span());
    t = std::move(tensor);
  }
  require(r.at_end(), ErrorCode::kFormat, "trailing bytes in model file");
  model.net = Network<float>(std::move(canonical), std::move(params));
  return model;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& model_path) {
  auto p = model_path;
  return p.replace_extension(".json");
}

inline nlohmann::json model_sidecar(const Model& model) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["architecture"] = std::string(arch_kind_name(model.architecture().kind()));
  j["seed"] = model.seed;
  j["epochs"] = model.record.epochs_run;
  j["final_loss"] = model.record.final_loss;
  j["train_error"] = model.record.train_error;
  j["test_error"] = model.record.test_error;
  return j;
}

inline void save_model(const std::filesystem::path& path, const Model& model) {
  io::write_file(path, encode_model(model));
  io::write_text(sidecar_path(path), model_sidecar(model).dump(2) + "\n");
}

inline Model load_model(const std::filesystem::path& path) {
  Model model = decode_model(io::read_file(path));
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const auto j = nlohmann::json::parse(io::read_text(side));
    model.record.epochs_run = j.value("epochs", 0u);
    auto num = [&](const char* key) {
      return j.contains(key) && j[key].is_number() ? j[key].get<double>()
                                                   : std::numeric_limits<double>::quiet_NaN();
    };
    model.record.final_loss = num("final_loss");
    model.record.train_error = num("train_error");
    model.record.test_error = num("test_error");
  }
  return model;
}

}  // namespace advmap::nn
