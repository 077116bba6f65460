#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "advmap/core/error.hpp"
#include "advmap/core/rng.hpp"
#include "advmap/core/tensor.hpp"
#include "advmap/nn/architecture.hpp"

namespace advmap::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// He-normal weights (std = sqrt(2 / fan_in)) and zero biases, drawn from
/// CounterRng(seed) in declared parameter order.
template <class T = float>
std::vector<Tensor<T>> init_params(const Architecture& arch, std::uint64_t seed) {
  CounterRng rng = CounterRng(seed).fork(/*init stream*/ 1);
  std::vector<Tensor<T>> params;
  for (const auto& layer : arch.layers()) {
    if (!layer.has_params()) continue;
    Tensor<T> w({layer.weight_rows(), layer.weight_cols()});
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.fan_in()));
    for (auto& v : w.values()) v = static_cast<T>(scale * rng.normal());
    params.push_back(std::move(w));
    params.emplace_back(Shape{layer.units}, T{0});
  }
  return params;
}

template <class T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T m = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

/// Index of the largest entry; ties go to the lowest index.
template <class Derived>
int argmax_row(const Eigen::MatrixBase<Derived>& row) {
  int best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = static_cast<int>(j);
  return best;
}

/// Feed-forward network over flattened HWC inputs, one sample per row.
template <class T>
class Network {
 public:
  using Mat = Matrix<T>;
  using ConstMap = Eigen::Map<const Mat>;

  struct Cache {
    std::vector<Mat> inputs;                      // input to each layer, plus final logits
    std::vector<Mat> cols;                        // im2col buffers for conv layers
    std::vector<std::vector<std::int32_t>> argmax;  // max-pool winners
  };

  Network() = default;

  Network(Architecture arch, std::vector<Tensor<T>> params)
      : arch_(std::move(arch)), params_(std::move(params)) {
    require(params_.size() == arch_.param_tensor_count(), ErrorCode::kShapeMismatch,
            "parameter tensor count does not match architecture");
    std::size_t p = 0;
    for (const auto& layer : arch_.layers()) {
      if (!layer.has_params()) continue;
      require(params_[p].shape() == Shape{layer.weight_rows(), layer.weight_cols()},
              ErrorCode::kShapeMismatch, "weight shape mismatch at tensor " + std::to_string(p));
      require(params_[p + 1].shape() == Shape{layer.units}, ErrorCode::kShapeMismatch,
              "bias shape mismatch at tensor " + std::to_string(p + 1));
      p += 2;
    }
  }

  static Network initialized(const Architecture& arch, std::uint64_t seed) {
    return Network(arch, init_params<T>(arch, seed));
  }

  const Architecture& architecture() const { return arch_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  std::vector<Tensor<T>>& mutable_params() { return params_; }
  std::size_t input_size() const { return arch_.input_size(); }
  std::size_t num_classes() const { return arch_.num_classes(); }

  template <class U>
  Network<U> cast() const {
    std::vector<Tensor<U>> p;
    for (const auto& t : params_) p.push_back(t.template cast<U>());
    return Network<U>(arch_, std::move(p));
  }

  Mat logits(const Mat& x) const { return run(x, nullptr); }

  Mat forward(const Mat& x, Cache& cache) const { return run(x, &cache); }

  Mat probabilities(const Mat& x) const { return softmax_rows<T>(logits(x)); }

  /// Labels for every row, evaluated in chunks to bound conv buffer size.
  std::vector<int> predict(const Mat& x, Eigen::Index chunk = 256) const {
    std::vector<int> labels(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
      const Eigen::Index n = std::min(chunk, x.rows() - start);
      const Mat z = logits(x.middleRows(start, n));
      for (Eigen::Index r = 0; r < n; ++r) labels[static_cast<std::size_t>(start + r)] = argmax_row(z.row(r));
    }
    return labels;
  }

  int predict(std::span<const T> image) const {
    require(image.size() == input_size(), ErrorCode::kShapeMismatch, "image size mismatch");
    Mat x = Eigen::Map<const Mat>(image.data(), 1, static_cast<Eigen::Index>(image.size()));
    return predict(x).front();
  }

  /// Reverse pass from d(objective)/d(logits). Writes parameter gradients
  /// into `param_grads` when non-null and returns d(objective)/d(input) when
  /// `need_input_grad` (otherwise an empty matrix).
  Mat backward(const Cache& cache, const Mat& dlogits, std::vector<Tensor<T>>* param_grads,
               bool need_input_grad) const {
    const auto& layers = arch_.layers();
    if (param_grads) {
      param_grads->resize(params_.size());
      for (std::size_t i = 0; i < params_.size(); ++i)
        if ((*param_grads)[i].shape() != params_[i].shape())
          (*param_grads)[i] = Tensor<T>(params_[i].shape());
    }
    Mat grad = dlogits;
    std::size_t p = params_.size();
    for (std::size_t li = layers.size(); li-- > 0;) {
      const auto& layer = layers[li];
      const Mat& input = cache.inputs[li];
      const bool need_dx = li > 0 || need_input_grad;
      const Eigen::Index n = input.rows();
      switch (layer.type) {
        case LayerType::kDense: {
          p -= 2;
          const ConstMap w = weight(p);
          if (param_grads) {
            Eigen::Map<Mat>((*param_grads)[p].data(), w.rows(), w.cols()).noalias() =
                input.transpose() * grad;
            Eigen::Map<RowVector<T>>((*param_grads)[p + 1].data(), w.cols()) =
                grad.colwise().sum();
          }
          if (need_dx) {
            Mat dx = grad * w.transpose();
            grad.swap(dx);
          }
          break;
        }
        case LayerType::kConv: {
          p -= 2;
          const ConstMap w = weight(p);
          const Eigen::Index positions = static_cast<Eigen::Index>(layer.out.height * layer.out.width);
          Eigen::Map<const Mat> dy(grad.data(), n * positions, w.cols());
          const Mat& cols = cache.cols[li];
          if (param_grads) {
            Eigen::Map<Mat>((*param_grads)[p].data(), w.rows(), w.cols()).noalias() =
                cols.transpose() * dy;
            Eigen::Map<RowVector<T>>((*param_grads)[p + 1].data(), w.cols()) = dy.colwise().sum();
          }
          if (need_dx) {
            const Mat dcols = dy * w.transpose();
            Mat dx = col2im(dcols, layer, n);
            grad.swap(dx);
          }
          break;
        }
        case LayerType::kMaxPool: {
          if (!need_dx) break;
          Mat dx = Mat::Zero(n, static_cast<Eigen::Index>(layer.in.size()));
          const auto& winners = cache.argmax[li];
          const Eigen::Index outs = static_cast<Eigen::Index>(layer.out.size());
          for (Eigen::Index r = 0; r < n; ++r)
            for (Eigen::Index j = 0; j < outs; ++j) dx(r, winners[r * outs + j]) += grad(r, j);
          grad.swap(dx);
          break;
        }
        case LayerType::kRelu: {
          if (!need_dx) break;
          grad = (input.array() > T{0}).select(grad, T{0});
          break;
        }
      }
    }
    return need_input_grad ? grad : Mat();
  }

  /// Gradient with respect to the inputs of an objective whose logit
  /// gradient is `dlogits_of(logits)`; rows are independent samples.
  template <class Fn>
  Mat input_vjp(const Mat& x, Fn&& dlogits_of) const {
    Cache cache;
    const Mat z = forward(x, cache);
    const Mat dz = dlogits_of(z);
    return backward(cache, dz, nullptr, true);
  }

  /// Per-row gradient of cross-entropy -log softmax(z)[label] w.r.t. inputs.
  Mat cross_entropy_input_gradient(const Mat& x, std::span<const int> labels) const {
    require(labels.size() == static_cast<std::size_t>(x.rows()), ErrorCode::kShapeMismatch,
            "one label per row required");
    return input_vjp(x, [&](const Mat& z) {
      Mat d = softmax_rows<T>(z);
      for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, labels[r]) -= T{1};
      return d;
    });
  }

 private:
  ConstMap weight(std::size_t p) const {
    return ConstMap(params_[p].data(), static_cast<Eigen::Index>(params_[p].shape()[0]),
                    static_cast<Eigen::Index>(params_[p].shape()[1]));
  }
  Eigen::Map<const RowVector<T>> bias(std::size_t p) const {
    return Eigen::Map<const RowVector<T>>(params_[p].data(),
                                          static_cast<Eigen::Index>(params_[p].size()));
  }

  Mat run(const Mat& x, Cache* cache) const {
    require(static_cast<std::size_t>(x.cols()) == input_size(), ErrorCode::kShapeMismatch,
            "batch has " + std::to_string(x.cols()) + " features, architecture expects " +
                std::to_string(input_size()));
    const auto& layers = arch_.layers();
    if (cache) {
      // resize, not assign: buffers from the previous batch are reused
      cache->inputs.resize(layers.size() + 1);
      cache->cols.resize(layers.size());
      cache->argmax.resize(layers.size());
    }
    Mat a = x;
    std::size_t p = 0;
    const Eigen::Index n = x.rows();
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto& layer = layers[li];
      if (cache) cache->inputs[li] = a;
      switch (layer.type) {
        case LayerType::kDense: {
          Mat y = a * weight(p);
          y.rowwise() += bias(p + 1);
          a.swap(y);
          p += 2;
          break;
        }
        case LayerType::kConv: {
          Mat local;
          Mat& cols = cache ? cache->cols[li] : local;
          im2col(a, layer, cols);
          Mat y = cols * weight(p);
          y.rowwise() += bias(p + 1);
          // (n * positions) x channels is exactly n x (positions * channels) row-major.
          a = Eigen::Map<Mat>(y.data(), n, static_cast<Eigen::Index>(layer.out.size()));
          p += 2;
          break;
        }
        case LayerType::kMaxPool: {
          Mat y(n, static_cast<Eigen::Index>(layer.out.size()));
          std::vector<std::int32_t> scratch;
          std::vector<std::int32_t>& winners = cache ? cache->argmax[li] : scratch;
          if (cache) winners.resize(static_cast<std::size_t>(y.size()));
          const auto C = layer.in.channels, W = layer.in.width;
          for (Eigen::Index r = 0; r < n; ++r) {
            for (std::size_t oy = 0; oy < layer.out.height; ++oy)
              for (std::size_t ox = 0; ox < layer.out.width; ++ox)
                for (std::size_t c = 0; c < C; ++c) {
                  std::size_t best = ((2 * oy) * W + 2 * ox) * C + c;
                  for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                      const std::size_t idx = ((2 * oy + dy) * W + 2 * ox + dx) * C + c;
                      if (a(r, idx) > a(r, best)) best = idx;
                    }
                  const std::size_t o = (oy * layer.out.width + ox) * C + c;
                  y(r, o) = a(r, best);
                  if (cache) winners[r * y.cols() + o] = static_cast<std::int32_t>(best);
                }
          }
          a.swap(y);
          break;
        }
        case LayerType::kRelu:
          a = a.cwiseMax(T{0});
          break;
      }
    }
    if (cache) cache->inputs[layers.size()] = a;
    return a;
  }

  static void im2col(const Mat& a, const LayerSpec& l, Mat& cols) {
    const Eigen::Index n = a.rows();
    const std::size_t k = l.kernel, C = l.in.channels, W = l.in.width;
    const std::size_t OH = l.out.height, OW = l.out.width;
    cols.resize(n * static_cast<Eigen::Index>(OH * OW), static_cast<Eigen::Index>(k * k * C));
    for (Eigen::Index r = 0; r < n; ++r) {
      const T* src = a.row(r).data();
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          T* dst = cols.row(r * static_cast<Eigen::Index>(OH * OW) + oy * OW + ox).data();
          for (std::size_t ky = 0; ky < k; ++ky) {
            const T* s = src + ((oy + ky) * W + ox) * C;
            std::copy(s, s + k * C, dst + ky * k * C);
          }
        }
    }
  }

  static Mat col2im(const Mat& dcols, const LayerSpec& l, Eigen::Index n) {
    const std::size_t k = l.kernel, C = l.in.channels, W = l.in.width;
    const std::size_t OH = l.out.height, OW = l.out.width;
    Mat dx = Mat::Zero(n, static_cast<Eigen::Index>(l.in.size()));
    for (Eigen::Index r = 0; r < n; ++r) {
      T* dst = dx.row(r).data();
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          const T* src = dcols.row(r * static_cast<Eigen::Index>(OH * OW) + oy * OW + ox).data();
          for (std::size_t ky = 0; ky < k; ++ky) {
            T* d = dst + ((oy + ky) * W + ox) * C;
            const T* s = src + ky * k * C;
            for (std::size_t j = 0; j < k * C; ++j) d[j] += s[j];
          }
        }
    }
    return dx;
  }

  Architecture arch_;
  std::vector<Tensor<T>> params_;
};

}  // namespace advmap::nn
