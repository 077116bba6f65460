#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advmap/core/error.hpp"
#include "advmap/nn/network.hpp"

namespace advmap::data {

enum class Split { kTrain, kTest };

inline std::string_view split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "'");
}

struct SourceId {
  Split split = Split::kTest;
  std::size_t index = 0;

  std::string str() const { return std::string(split_name(split)) + ":" + std::to_string(index); }
  friend bool operator==(const SourceId&, const SourceId&) = default;
};

/// Vectorized image with every pixel in [0, 1].
struct ImageVec {
  std::vector<float> pixels;
  std::optional<int> label;
  std::optional<SourceId> source;

  std::size_t size() const { return pixels.size(); }
  std::span<const float> span() const { return pixels; }

  bool in_unit_box() const {
    for (float v : pixels)
      if (!(v >= 0.0f && v <= 1.0f)) return false;
    return true;
  }
};

struct Dataset {
  Split split = Split::kTest;
  std::size_t dim = 0;
  std::vector<ImageVec> images;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  const ImageVec& operator[](std::size_t i) const { return images[i]; }

  std::vector<std::size_t> label_counts() const {
    std::vector<std::size_t> counts(10, 0);
    for (const auto& im : images)
      if (im.label && *im.label >= 0 && *im.label < 10) ++counts[static_cast<std::size_t>(*im.label)];
    return counts;
  }
};

/// Order-preserving filter; source ids are carried through untouched.
template <class Predicate>
Dataset select(const Dataset& data, Predicate&& keep) {
  Dataset out{data.split, data.dim, {}};
  for (const auto& im : data.images)
    if (keep(im)) out.images.push_back(im);
  return out;
}

inline Dataset head(const Dataset& data, std::size_t n) {
  Dataset out{data.split, data.dim, {}};
  out.images.assign(data.images.begin(),
                    data.images.begin() + static_cast<std::ptrdiff_t>(std::min(n, data.size())));
  return out;
}

template <class T = float>
nn::Matrix<T> to_matrix(std::span<const ImageVec> images) {
  const auto dim = images.empty() ? 0 : images.front().size();
  nn::Matrix<T> x(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < images.size(); ++r) {
    require(images[r].size() == dim, ErrorCode::kShapeMismatch, "ragged image batch");
    for (std::size_t j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = static_cast<T>(images[r].pixels[j]);
  }
  return x;
}

template <class T = float>
nn::Matrix<T> to_matrix(const ImageVec& image) {
  return to_matrix<T>(std::span<const ImageVec>(&image, 1));
}

inline ImageVec from_row(const nn::Matrix<float>& x, Eigen::Index r) {
  ImageVec im;
  im.pixels.assign(x.row(r).data(), x.row(r).data() + x.cols());
  return im;
}

}  // namespace advmap::data
