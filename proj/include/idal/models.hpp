#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "idal/errors.hpp"
#include "idal/losses.hpp"
#include "idal/tensor.hpp"

namespace idal {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

// Uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)], seeded by the caller's rng.
inline Tensor init_param(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor({rows, cols}, std::move(v), /*requires_grad=*/true);
}

}  // namespace detail

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  static DenseLayer init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    DenseLayer layer;
    layer.weight = detail::init_param(in, out, rng);
    layer.bias = Tensor::zeros({1, out}, /*requires_grad=*/true);
    return layer;
  }

  Tensor forward(const Tensor& x) const { return add_rowwise(matmul(x, weight), bias); }
};

// Desk-scale stand-in for a ResNet+FPN backbone: a stack of dense relu stages
// whose per-stage activations are projected to a common width and summed.
// Output dimension is feature_dim regardless of stage count.
struct PyramidExtractor {
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::vector<DenseLayer> stages;
  std::vector<DenseLayer> laterals;  // one per stage, stage width -> feature_dim

  static PyramidExtractor init(std::size_t input_dim,
                               const std::vector<std::size_t>& stage_widths,
                               std::size_t feature_dim, std::mt19937_64& rng) {
    if (stage_widths.empty()) throw ConfigError("pyramid: need at least one stage");
    PyramidExtractor model;
    model.input_dim = input_dim;
    model.feature_dim = feature_dim;
    std::size_t in = input_dim;
    for (std::size_t width : stage_widths) {
      model.stages.push_back(DenseLayer::init(in, width, rng));
      model.laterals.push_back(DenseLayer::init(width, feature_dim, rng));
      in = width;
    }
    return model;
  }

  Tensor forward(const Tensor& x) const {
    if (x.shape().size() != 2 || x.shape()[1] != input_dim) {
      throw ShapeError("pyramid: input " + shape_str(x.shape()) + " expects dim " +
                       std::to_string(input_dim));
    }
    Tensor activation = x;
    Tensor merged;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      activation = relu(stages[i].forward(activation));
      Tensor lateral = laterals[i].forward(activation);
      merged = merged.defined() ? add(merged, lateral) : lateral;
    }
    return merged;
  }

  NamedParams parameters(const std::string& prefix = "pyramid") const {
    NamedParams params;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const std::string s = prefix + ".stage" + std::to_string(i);
      params.emplace_back(s + ".weight", stages[i].weight);
      params.emplace_back(s + ".bias", stages[i].bias);
      params.emplace_back(s + ".lateral.weight", laterals[i].weight);
      params.emplace_back(s + ".lateral.bias", laterals[i].bias);
    }
    return params;
  }
};

struct ClassifierHead {
  Tensor weight;  // feature_dim x K
  Tensor bias;    // 1 x K

  static ClassifierHead init(std::size_t feature_dim, std::size_t num_classes,
                             std::mt19937_64& rng) {
    if (num_classes < 2) throw ConfigError("classifier: need K >= 2");
    ClassifierHead head;
    head.weight = detail::init_param(feature_dim, num_classes, rng);
    head.bias = Tensor::zeros({1, num_classes}, /*requires_grad=*/true);
    return head;
  }

  Tensor forward(const Tensor& features) const {
    return add_rowwise(matmul(features, weight), bias);
  }

  NamedParams parameters(const std::string& prefix = "classifier") const {
    return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
  }
};

// Two dense layers with relu between and a clamped sigmoid output.
struct DomainDiscriminator {
  DenseLayer layer1;
  DenseLayer layer2;

  static DomainDiscriminator init(std::size_t input_dim, std::size_t hidden,
                                  std::mt19937_64& rng) {
    DomainDiscriminator disc;
    disc.layer1 = DenseLayer::init(input_dim, hidden, rng);
    disc.layer2 = DenseLayer::init(hidden, 1, rng);
    return disc;
  }

  // Returns b x 1 probabilities in [1e-12, 1 - 1e-12].
  Tensor forward(const Tensor& conditioned) const {
    return sigmoid(layer2.forward(relu(layer1.forward(conditioned))));
  }

  NamedParams parameters(const std::string& prefix = "discriminator") const {
    return {{prefix + ".l1.weight", layer1.weight},
            {prefix + ".l1.bias", layer1.bias},
            {prefix + ".l2.weight", layer2.weight},
            {prefix + ".l2.bias", layer2.bias}};
  }
};

}  // namespace idal
