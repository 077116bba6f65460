#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "advmap/core/error.hpp"
#include "advmap/core/rng.hpp"
#include "advmap/data/dataset.hpp"
#include "advmap/nn/network.hpp"

namespace advmap::nn {

enum class Precision { kFloat32 = 32, kFloat64 = 64 };

struct TrainConfig {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 10;
  std::uint32_t batch_size = 64;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";
  Precision precision = Precision::kFloat32;

  void validate() const {
    require(epochs >= 1, ErrorCode::kInvalidArgument, "epochs must be >= 1");
    require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be >= 1");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::kInvalidArgument,
            "learning rate must be > 0");
    require(optimizer == "adam", ErrorCode::kInvalidArgument,
            "unsupported optimizer '" + optimizer + "'");
  }
};

struct TrainRecord {
  std::uint32_t epochs_run = 0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double train_error = std::numeric_limits<double>::quiet_NaN();
  double test_error = std::numeric_limits<double>::quiet_NaN();
};

/// A trained network plus everything needed to reproduce it.
struct Model {
  Network<float> net;
  std::uint64_t seed = 0;
  TrainConfig config;
  TrainRecord record;

  const Architecture& architecture() const { return net.architecture(); }
};

template <class T>
double error_rate(const Network<T>& net, const data::Dataset& data, std::size_t chunk = 256) {
  if (data.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    const auto x = data::to_matrix<T>(std::span(data.images).subspan(start, n));
    const auto labels = net.predict(x);
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] != data.images[start + i].label.value_or(-1)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

namespace detail {

template <class T>
struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<std::vector<T>> m, v;
  std::uint64_t step = 0;

  explicit Adam(double learning_rate, const std::vector<Tensor<T>>& params) : lr(learning_rate) {
    for (const auto& p : params) {
      m.emplace_back(p.size(), T{0});
      v.emplace_back(p.size(), T{0});
    }
  }

  void apply(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    const T a = static_cast<T>(lr * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T e = static_cast<T>(eps * std::sqrt(c2));
    for (std::size_t i = 0; i < params.size(); ++i) {
      T* p = params[i].data();
      const T* g = grads[i].data();
      T* mi = m[i].data();
      T* vi = v[i].data();
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        mi[j] = b1 * mi[j] + (T{1} - b1) * g[j];
        vi[j] = b2 * vi[j] + (T{1} - b2) * g[j] * g[j];
        p[j] -= a * mi[j] / (std::sqrt(vi[j]) + e);
      }
    }
  }
};

template <class T>
Model train_impl(const Architecture& arch, const data::Dataset& train_data, const TrainConfig& cfg,
                 const data::Dataset* test_data,
                 const std::function<void(std::uint32_t, double)>& on_epoch) {
  Network<T> net = Network<T>::initialized(arch, cfg.seed);
  Adam<T> adam(cfg.learning_rate, net.params());
  CounterRng order_rng = CounterRng(cfg.seed).fork(/*shuffle stream*/ 2);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor<T>> grads;
  typename Network<T>::Cache cache;
  const auto dim = static_cast<Eigen::Index>(arch.input_size());

  TrainRecord record;
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      Matrix<T> x(static_cast<Eigen::Index>(n), dim);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& im = train_data.images[order[start + i]];
        for (Eigen::Index j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), j) = static_cast<T>(im.pixels[j]);
        y[i] = im.label.value();
      }
      const Matrix<T> z = net.forward(x, cache);
      Matrix<T> d = softmax_rows<T>(z);
      for (std::size_t i = 0; i < n; ++i) {
        loss_sum -= std::log(std::max<double>(d(static_cast<Eigen::Index>(i), y[i]), 1e-30));
        d(static_cast<Eigen::Index>(i), y[i]) -= T{1};
      }
      d /= static_cast<T>(n);
      net.backward(cache, d, &grads, false);
      adam.apply(net.mutable_params(), grads);
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(mean_loss))
      throw Error(ErrorCode::kDivergence,
                  "training diverged (loss " + std::to_string(mean_loss) + ") at epoch " +
                      std::to_string(epoch + 1));
    record.epochs_run = epoch + 1;
    record.final_loss = mean_loss;
    if (on_epoch) on_epoch(epoch + 1, mean_loss);
  }
  Model model{net.template cast<float>(), cfg.seed, cfg, record};
  model.record.train_error = error_rate(model.net, train_data);
  if (test_data) model.record.test_error = error_rate(model.net, *test_data);
  return model;
}

}  // namespace detail

/// Trains from He-normal initialization with Adam. Initialization and
/// data order both derive from `cfg.seed`, so (arch, data, cfg) fully
/// determines the result.
inline Model train(const Architecture& arch, const data::Dataset& train_data, const TrainConfig& cfg,
                   const data::Dataset* test_data = nullptr,
                   const std::function<void(std::uint32_t, double)>& on_epoch = {}) {
  cfg.validate();
  require(!train_data.empty(), ErrorCode::kInvalidArgument, "training data is empty");
  require(train_data.dim == arch.input_size(), ErrorCode::kShapeMismatch,
          "training data dimension does not match architecture input");
  if (cfg.precision == Precision::kFloat64)
    return detail::train_impl<double>(arch, train_data, cfg, test_data, on_epoch);
  return detail::train_impl<float>(arch, train_data, cfg, test_data, on_epoch);
}

}  // namespace advmap::nn
