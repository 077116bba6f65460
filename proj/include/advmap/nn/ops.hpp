#pragma once

#include <span>

#include "advmap/data/dataset.hpp"
#include "advmap/nn/network.hpp"
#include "advmap/nn/train.hpp"

namespace advmap::nn {

/// Class probabilities for a batch tensor of shape {n, h} (or {h}).
inline Tensor<float> forward(const Model& model, const Tensor<float>& batch) {
  const std::size_t h = model.net.input_size();
  require(batch.rank() >= 1 && batch.shape().back() == h && batch.size() % h == 0,
          ErrorCode::kShapeMismatch,
          "batch shape " + shape_string(batch.shape()) + " does not match input size " +
              std::to_string(h));
  const auto n = static_cast<Eigen::Index>(batch.size() / h);
  const Matrix<float> x = Eigen::Map<const Matrix<float>>(batch.data(), n, static_cast<Eigen::Index>(h));
  const Matrix<float> p = model.net.probabilities(x);
  return Tensor<float>({static_cast<std::size_t>(n), model.net.num_classes()},
                       std::vector<float>(p.data(), p.data() + p.size()));
}

inline int predict(const Model& model, const data::ImageVec& image) {
  return model.net.predict(image.span());
}

/// Gradient of the cross-entropy loss of `label` with respect to the pixels.
inline Tensor<float> input_gradient(const Model& model, const data::ImageVec& image, int label) {
  const Matrix<float> x = data::to_matrix<float>(image);
  const int labels[] = {label};
  const Matrix<float> g = model.net.cross_entropy_input_gradient(x, labels);
  return Tensor<float>({image.size()}, std::vector<float>(g.data(), g.data() + g.size()));
}

}  // namespace advmap::nn
