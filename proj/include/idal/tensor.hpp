#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "idal/errors.hpp"

namespace idal {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

// One tape record. Parents are held by shared_ptr so a loss tensor keeps its
// whole graph alive; dropping the loss frees the tape, leaves survive as
// parameters.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on demand
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

constexpr double kLogClamp = 1e-12;
constexpr double kProbClamp = 1e-12;

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->ensure_grad();
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->values.size(); }
  std::size_t rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
  std::size_t cols() const {
    return node_->shape.size() < 2 ? (node_->shape.empty() ? 1 : 1) : node_->shape[1];
  }
  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }
  const std::vector<double>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::vector<double>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    if (size() != 1) {
      throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
    }
    return node_->values[0];
  }

  double at(std::size_t i) const { return node_->values[i]; }
  double at(std::size_t i, std::size_t j) const {
    return node_->values[i * node_->shape[1] + j];
  }

  // Reverse pass from a scalar. Grads accumulate additively into every
  // requires_grad leaf reachable from this node.
  void backward() const {
    if (size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_str(shape()));
    }
    // Iterative post-order DFS for a deterministic topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        detail::Node* parent = node->parents[idx++].get();
        if (visited.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* node = *it;
      if (!node->requires_grad || !node->backward_fn) continue;
      for (auto& p : node->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      node->backward_fn(*node);
    }
  }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor input");
}

inline void check_finite(const char* op, const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite input value");
    }
  }
}

inline Tensor make_op(const char* op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  for (const auto& in : inputs) {
    check_defined(op, in);
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(node));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_defined("matmul", a);
  detail::check_defined("matmul", b);
  detail::check_finite("matmul", a);
  detail::check_finite("matmul", b);
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  }
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return detail::make_op(
      "matmul", {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::Node& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j)
                acc += g[i * n + j] * bn->values[p * n + j];
              an->grad[i * k + p] += acc;
            }
        }
        if (bn->requires_grad) {
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) {
              double acc = 0.0;
              for (std::size_t i = 0; i < m; ++i)
                acc += an->values[i * k + p] * g[i * n + j];
              bn->grad[p * n + j] += acc;
            }
        }
      });
}

namespace detail {

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_defined("add", a);
  detail::check_defined("add", b);
  detail::check_finite("add", a);
  detail::check_finite("add", b);
  detail::check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return detail::make_op("add", a.shape(), std::move(out), {a, b},
                         [an, bn](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             if (an->requires_grad) an->grad[i] += self.grad[i];
                             if (bn->requires_grad) bn->grad[i] += self.grad[i];
                           }
                         });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_defined("sub", a);
  detail::check_defined("sub", b);
  detail::check_finite("sub", a);
  detail::check_finite("sub", b);
  detail::check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return detail::make_op("sub", a.shape(), std::move(out), {a, b},
                         [an, bn](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             if (an->requires_grad) an->grad[i] += self.grad[i];
                             if (bn->requires_grad) bn->grad[i] -= self.grad[i];
                           }
                         });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_defined("mul", a);
  detail::check_defined("mul", b);
  detail::check_finite("mul", a);
  detail::check_finite("mul", b);
  detail::check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return detail::make_op("mul", a.shape(), std::move(out), {a, b},
                         [an, bn](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             if (an->requires_grad)
                               an->grad[i] += self.grad[i] * bn->values[i];
                             if (bn->requires_grad)
                               bn->grad[i] += self.grad[i] * an->values[i];
                           }
                         });
}

inline Tensor scalar_mul(const Tensor& a, double c) {
  detail::check_defined("scalar_mul", a);
  detail::check_finite("scalar_mul", a);
  if (!std::isfinite(c)) throw NumericError("scalar_mul: non-finite scalar");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  detail::Node* an = a.node();
  return detail::make_op("scalar_mul", a.shape(), std::move(out), {a},
                         [an, c](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i] * c;
                         });
}

// X (b x n) + bias (n or 1 x n), bias broadcast over rows.
inline Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  detail::check_defined("add_rowwise", x);
  detail::check_defined("add_rowwise", bias);
  detail::check_finite("add_rowwise", x);
  detail::check_finite("add_rowwise", bias);
  if (x.shape().size() != 2 || bias.size() != x.shape()[1]) {
    throw ShapeError("add_rowwise: shapes " + shape_str(x.shape()) + " and " +
                     shape_str(bias.shape()));
  }
  const std::size_t b = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.at(j);
  detail::Node* xn = x.node();
  detail::Node* bn = bias.node();
  return detail::make_op("add_rowwise", x.shape(), std::move(out), {x, bias},
                         [xn, bn, b, n](detail::Node& self) {
                           for (std::size_t i = 0; i < b; ++i)
                             for (std::size_t j = 0; j < n; ++j) {
                               const double g = self.grad[i * n + j];
                               if (xn->requires_grad) xn->grad[i * n + j] += g;
                               if (bn->requires_grad) bn->grad[j] += g;
                             }
                         });
}

// Row i of X scaled by w[i]; w has length rows(X).
inline Tensor scale_rows(const Tensor& x, const Tensor& w) {
  detail::check_defined("scale_rows", x);
  detail::check_defined("scale_rows", w);
  detail::check_finite("scale_rows", x);
  detail::check_finite("scale_rows", w);
  if (x.shape().size() != 2 || w.size() != x.shape()[0]) {
    throw ShapeError("scale_rows: shapes " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const std::size_t b = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i, j) * w.at(i);
  detail::Node* xn = x.node();
  detail::Node* wn = w.node();
  return detail::make_op("scale_rows", x.shape(), std::move(out), {x, w},
                         [xn, wn, b, n](detail::Node& self) {
                           for (std::size_t i = 0; i < b; ++i) {
                             double wacc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                               const double g = self.grad[i * n + j];
                               if (xn->requires_grad)
                                 xn->grad[i * n + j] += g * wn->values[i];
                               wacc += g * xn->values[i * n + j];
                             }
                             if (wn->requires_grad) wn->grad[i] += wacc;
                           }
                         });
}

// Row i of X divided by w[i]; denominators clamped at kLogClamp to keep
// row-normalization finite when a class column is empty.
inline Tensor div_rows(const Tensor& x, const Tensor& w) {
  detail::check_defined("div_rows", x);
  detail::check_defined("div_rows", w);
  detail::check_finite("div_rows", x);
  detail::check_finite("div_rows", w);
  if (x.shape().size() != 2 || w.size() != x.shape()[0]) {
    throw ShapeError("div_rows: shapes " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const std::size_t b = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < b; ++i) {
    const double d = std::max(w.at(i), kLogClamp);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i, j) / d;
  }
  detail::Node* xn = x.node();
  detail::Node* wn = w.node();
  return detail::make_op(
      "div_rows", x.shape(), std::move(out), {x, w}, [xn, wn, b, n](detail::Node& self) {
        for (std::size_t i = 0; i < b; ++i) {
          const bool clamped = wn->values[i] <= kLogClamp;
          const double d = std::max(wn->values[i], kLogClamp);
          double wacc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double g = self.grad[i * n + j];
            if (xn->requires_grad) xn->grad[i * n + j] += g / d;
            wacc -= g * xn->values[i * n + j] / (d * d);
          }
          if (wn->requires_grad && !clamped) wn->grad[i] += wacc;
        }
      });
}

inline Tensor relu(const Tensor& x) {
  detail::check_defined("relu", x);
  detail::check_finite("relu", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
  detail::Node* xn = x.node();
  return detail::make_op("relu", x.shape(), std::move(out), {x},
                         [xn](detail::Node& self) {
                           // subgradient at 0 is 0
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             if (xn->values[i] > 0.0) xn->grad[i] += self.grad[i];
                         });
}

inline Tensor exp(const Tensor& x) {
  detail::check_defined("exp", x);
  detail::check_finite("exp", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.at(i));
  detail::Node* xn = x.node();
  return detail::make_op("exp", x.shape(), std::move(out), {x},
                         [xn](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             xn->grad[i] += self.grad[i] * self.values[i];
                         });
}

// log(max(x, 1e-12)); below the clamp the gradient is 0, which also gives
// p*log(p) -> 0 the right limit behaviour in entropy terms.
inline Tensor log(const Tensor& x) {
  detail::check_defined("log", x);
  detail::check_finite("log", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::log(std::max(x.at(i), kLogClamp));
  detail::Node* xn = x.node();
  return detail::make_op("log", x.shape(), std::move(out), {x},
                         [xn](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             if (xn->values[i] > kLogClamp)
                               xn->grad[i] += self.grad[i] / xn->values[i];
                         });
}

inline Tensor abs(const Tensor& x) {
  detail::check_defined("abs", x);
  detail::check_finite("abs", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x.at(i));
  detail::Node* xn = x.node();
  return detail::make_op("abs", x.shape(), std::move(out), {x},
                         [xn](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             const double v = xn->values[i];
                             if (v > 0.0)
                               xn->grad[i] += self.grad[i];
                             else if (v < 0.0)
                               xn->grad[i] -= self.grad[i];
                           }
                         });
}

inline Tensor sigmoid(const Tensor& x) {
  detail::check_defined("sigmoid", x);
  detail::check_finite("sigmoid", x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x.at(i)));
    out[i] = std::clamp(s, kProbClamp, 1.0 - kProbClamp);
  }
  detail::Node* xn = x.node();
  return detail::make_op("sigmoid", x.shape(), std::move(out), {x},
                         [](detail::Node& self) {
                           auto* xn = self.parents[0].get();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             const double s = self.values[i];
                             xn->grad[i] += self.grad[i] * s * (1.0 - s);
                           }
                         });
}

inline Tensor softmax_rows(const Tensor& x) {
  detail::check_defined("softmax_rows", x);
  detail::check_finite("softmax_rows", x);
  if (x.shape().size() != 2) {
    throw ShapeError("softmax_rows: expected 2-D tensor, got " + shape_str(x.shape()));
  }
  const std::size_t b = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < b; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(x.at(i, j) - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  detail::Node* xn = x.node();
  return detail::make_op("softmax_rows", x.shape(), std::move(out), {x},
                         [xn, b, n](detail::Node& self) {
                           for (std::size_t i = 0; i < b; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j)
                               dot += self.grad[i * n + j] * self.values[i * n + j];
                             for (std::size_t j = 0; j < n; ++j)
                               xn->grad[i * n + j] += self.values[i * n + j] *
                                                      (self.grad[i * n + j] - dot);
                           }
                         });
}

inline Tensor sum(const Tensor& x) {
  detail::check_defined("sum", x);
  detail::check_finite("sum", x);
  double total = 0.0;
  for (double v : x.values()) total += v;
  detail::Node* xn = x.node();
  return detail::make_op("sum", {1}, {total}, {x}, [xn](detail::Node& self) {
    for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  detail::check_defined("mean", x);
  detail::check_finite("mean", x);
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  detail::Node* xn = x.node();
  return detail::make_op("mean", {1}, {total * inv}, {x},
                         [xn, inv](detail::Node& self) {
                           for (std::size_t i = 0; i < xn->grad.size(); ++i)
                             xn->grad[i] += self.grad[0] * inv;
                         });
}

inline Tensor transpose(const Tensor& x) {
  detail::check_defined("transpose", x);
  detail::check_finite("transpose", x);
  if (x.shape().size() != 2) {
    throw ShapeError("transpose: expected 2-D tensor, got " + shape_str(x.shape()));
  }
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.at(i, j);
  detail::Node* xn = x.node();
  return detail::make_op("transpose", {n, m}, std::move(out), {x},
                         [xn, m, n](detail::Node& self) {
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j)
                               xn->grad[i * n + j] += self.grad[j * m + i];
                         });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  detail::check_defined("reshape", x);
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  detail::Node* xn = x.node();
  return detail::make_op("reshape", std::move(shape), x.values(), {x},
                         [xn](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             xn->grad[i] += self.grad[i];
                         });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::check_defined("concat_cols", a);
  detail::check_defined("concat_cols", b);
  detail::check_finite("concat_cols", a);
  detail::check_finite("concat_cols", b);
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[0] != b.shape()[0]) {
    throw ShapeError("concat_cols: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], n1 = a.shape()[1], n2 = b.shape()[1];
  std::vector<double> out(m * (n1 + n2));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n1; ++j) out[i * (n1 + n2) + j] = a.at(i, j);
    for (std::size_t j = 0; j < n2; ++j) out[i * (n1 + n2) + n1 + j] = b.at(i, j);
  }
  detail::Node* an = a.node();
  detail::Node* bn = b.node();
  return detail::make_op("concat_cols", {m, n1 + n2}, std::move(out), {a, b},
                         [an, bn, m, n1, n2](detail::Node& self) {
                           for (std::size_t i = 0; i < m; ++i) {
                             if (an->requires_grad)
                               for (std::size_t j = 0; j < n1; ++j)
                                 an->grad[i * n1 + j] += self.grad[i * (n1 + n2) + j];
                             if (bn->requires_grad)
                               for (std::size_t j = 0; j < n2; ++j)
                                 bn->grad[i * n2 + j] +=
                                     self.grad[i * (n1 + n2) + n1 + j];
                           }
                         });
}

// Row-wise flattened outer product: out[i, a*q + c] = f[i,a] * g[i,c].
inline Tensor row_outer(const Tensor& f, const Tensor& g) {
  detail::check_defined("row_outer", f);
  detail::check_defined("row_outer", g);
  detail::check_finite("row_outer", f);
  detail::check_finite("row_outer", g);
  if (f.shape().size() != 2 || g.shape().size() != 2 || f.shape()[0] != g.shape()[0]) {
    throw ShapeError("row_outer: shapes " + shape_str(f.shape()) + " and " +
                     shape_str(g.shape()));
  }
  const std::size_t b = f.shape()[0], p = f.shape()[1], q = g.shape()[1];
  std::vector<double> out(b * p * q);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t c = 0; c < q; ++c)
        out[i * p * q + a * q + c] = f.at(i, a) * g.at(i, c);
  detail::Node* fn = f.node();
  detail::Node* gn = g.node();
  return detail::make_op(
      "row_outer", {b, p * q}, std::move(out), {f, g},
      [fn, gn, b, p, q](detail::Node& self) {
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t a = 0; a < p; ++a)
            for (std::size_t c = 0; c < q; ++c) {
              const double gr = self.grad[i * p * q + a * q + c];
              if (fn->requires_grad) fn->grad[i * p + a] += gr * gn->values[i * q + c];
              if (gn->requires_grad) gn->grad[i * q + c] += gr * fn->values[i * p + a];
            }
      });
}

// Multi-kernel Gaussian: K[i,j] = sum_m exp(-||x_i - y_j||^2 / (2 sigma_m^2)).
// Bandwidths are constants of the op; no gradient flows into them.
inline Tensor gaussian_kernel(const Tensor& x, const Tensor& y,
                              const std::vector<double>& sigmas) {
  detail::check_defined("gaussian_kernel", x);
  detail::check_defined("gaussian_kernel", y);
  detail::check_finite("gaussian_kernel", x);
  detail::check_finite("gaussian_kernel", y);
  if (x.shape().size() != 2 || y.shape().size() != 2 || x.shape()[1] != y.shape()[1]) {
    throw ShapeError("gaussian_kernel: shapes " + shape_str(x.shape()) + " and " +
                     shape_str(y.shape()));
  }
  for (double s : sigmas)
    if (!(s > 0.0)) throw ConfigError("gaussian_kernel: bandwidths must be positive");
  const std::size_t a = x.shape()[0], b = y.shape()[0], d = x.shape()[1];
  std::vector<double> out(a * b, 0.0);
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double dist2 = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = x.at(i, t) - y.at(j, t);
        dist2 += diff * diff;
      }
      double k = 0.0;
      for (double s : sigmas) k += std::exp(-dist2 / (2.0 * s * s));
      out[i * b + j] = k;
    }
  detail::Node* xn = x.node();
  detail::Node* yn = y.node();
  return detail::make_op(
      "gaussian_kernel", {a, b}, std::move(out), {x, y},
      [xn, yn, a, b, d, sigmas](detail::Node& self) {
        for (std::size_t i = 0; i < a; ++i)
          for (std::size_t j = 0; j < b; ++j) {
            const double g = self.grad[i * b + j];
            if (g == 0.0) continue;
            double dist2 = 0.0;
            for (std::size_t t = 0; t < d; ++t) {
              const double diff = xn->values[i * d + t] - yn->values[j * d + t];
              dist2 += diff * diff;
            }
            // dK/d(dist2)
            double s_term = 0.0;
            for (double s : sigmas)
              s_term += -std::exp(-dist2 / (2.0 * s * s)) / (2.0 * s * s);
            const double coeff = g * s_term * 2.0;
            for (std::size_t t = 0; t < d; ++t) {
              const double diff = xn->values[i * d + t] - yn->values[j * d + t];
              if (xn->requires_grad) xn->grad[i * d + t] += coeff * diff;
              if (yn->requires_grad) yn->grad[j * d + t] -= coeff * diff;
            }
          }
      });
}

// Identity forward; backward multiplies the upstream gradient by -coefficient.
inline Tensor grad_reverse(const Tensor& x, double coefficient) {
  detail::check_defined("grad_reverse", x);
  if (!(coefficient >= 0.0)) {
    throw ConfigError("grad_reverse: coefficient must be >= 0");
  }
  detail::Node* xn = x.node();
  return detail::make_op("grad_reverse", x.shape(), x.values(), {x},
                         [xn, coefficient](detail::Node& self) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             xn->grad[i] -= coefficient * self.grad[i];
                         });
}

// ---------------------------------------------------------------------------
// Finite-difference check
// ---------------------------------------------------------------------------

// Compares the analytic gradient of a scalar-valued function against central
// differences; returns the max relative error over coordinates.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double step = 1e-6) {
  if (!(step > 0.0)) throw ConfigError("grad_check: step must be positive");
  Tensor probe(x.shape(), x.values(), /*requires_grad=*/true);
  Tensor loss = f(probe);
  if (loss.size() != 1) throw ShapeError("grad_check: f must return a scalar");
  loss.backward();
  const std::vector<double> analytic = probe.grad();

  double max_rel = 0.0;
  std::vector<double> values = x.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    const double hi = orig + step;  // use the actually representable points
    const double lo = orig - step;
    values[i] = hi;
    const double up = f(Tensor(x.shape(), values)).item();
    values[i] = lo;
    const double down = f(Tensor(x.shape(), values)).item();
    values[i] = orig;
    const double fd = (up - down) / (hi - lo);
    const double rel =
        std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace idal
