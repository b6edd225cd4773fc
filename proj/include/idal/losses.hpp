#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "idal/errors.hpp"
#include "idal/tensor.hpp"

namespace idal {

// Mixing coefficients of the combined objective. lambda_adv scales the
// reversed gradient of the adversarial branch; the others weight their loss
// terms directly.
struct LossWeights {
  double lambda_adv = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  double eta = 0.0;

  void validate() const {
    for (double w : {lambda_adv, beta, gamma, delta, eta}) {
      if (!std::isfinite(w) || w < 0.0) {
        throw ConfigError("loss weights must be finite and non-negative");
      }
    }
  }
};

enum class BandwidthMode { kFixed, kMedian };

// Sum-of-Gaussians kernel family. Bandwidths are base * multiplier_m with the
// base either fixed or the median of pooled pairwise distances.
struct KernelSpec {
  BandwidthMode mode = BandwidthMode::kMedian;
  double fixed_bandwidth = 1.0;
  std::vector<double> multipliers = {0.25, 0.5, 1.0, 2.0, 4.0};

  std::size_t count() const { return multipliers.size(); }

  void validate() const {
    if (multipliers.empty()) throw ConfigError("kernel spec: no multipliers");
    for (double m : multipliers) {
      if (!(m > 0.0)) throw ConfigError("kernel spec: multipliers must be > 0");
    }
    if (mode == BandwidthMode::kFixed && !(fixed_bandwidth > 0.0)) {
      throw ConfigError("kernel spec: fixed bandwidth must be > 0");
    }
  }
};

namespace detail {

inline Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

inline Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  std::vector<double> v(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    v[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor({labels.size(), num_classes}, std::move(v));
}

}  // namespace detail

// Mean over the batch of -log softmax(logits)[i, label_i].
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2 || logits.shape()[0] != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t num_classes = logits.shape()[1];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ConfigError("cross_entropy: label " + std::to_string(labels[i]) +
                        " out of range [0, " + std::to_string(num_classes) +
                        ") at row " + std::to_string(i));
    }
  }
  Tensor picked = mul(detail::one_hot(labels, num_classes), log(softmax_rows(logits)));
  return scalar_mul(sum(picked), -1.0 / static_cast<double>(labels.size()));
}

// -mean(log d_source) - mean(log(1 - d_target)); source labeled 1, target 0.
inline Tensor discriminator_bce(const Tensor& d_source, const Tensor& d_target) {
  if (d_source.size() == 0 || d_target.size() == 0) {
    throw ShapeError("discriminator_bce: empty batch");
  }
  Tensor src_term = mean(log(d_source));
  Tensor tgt_term = mean(log(sub(detail::ones(d_target.shape()), d_target)));
  return scalar_mul(add(src_term, tgt_term), -1.0);
}

// L_IM = -I(p_t; x_t) = -H(mean-row) + mean(row entropies); natural log.
// Minimizing this maximizes mutual information.
inline Tensor info_max_loss(const Tensor& target_probs) {
  if (target_probs.shape().size() != 2 || target_probs.shape()[0] == 0) {
    throw ShapeError("info_max_loss: expected non-empty 2-D tensor, got " +
                     shape_str(target_probs.shape()));
  }
  const std::size_t n = target_probs.shape()[0], k = target_probs.shape()[1];
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) row_sum += target_probs.at(i, j);
    if (std::fabs(row_sum - 1.0) > 1e-6) {
      throw NumericError("info_max_loss: row " + std::to_string(i) +
                         " sums to " + std::to_string(row_sum) + ", expected 1");
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor marginal =
      matmul(Tensor::full({1, n}, inv_n), target_probs);  // 1 x K mean row
  Tensor neg_marginal_entropy = sum(mul(marginal, log(marginal)));
  Tensor mean_row_entropy_neg = scalar_mul(sum(mul(target_probs, log(target_probs))), inv_n);
  return sub(neg_marginal_entropy, mean_row_entropy_neg);
}

// Minimum class confusion on target logits: softmax at the given temperature,
// entropy-based certainty reweighting, row-normalized confusion matrix, then
// (1/c) * sum of absolute off-diagonal entries.
inline Tensor mcc_loss(const Tensor& target_logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw ConfigError("mcc_loss: temperature must be > 0, got " +
                      std::to_string(temperature));
  }
  if (target_logits.shape().size() != 2 || target_logits.shape()[0] < 1 ||
      target_logits.shape()[1] < 2) {
    throw ShapeError("mcc_loss: need b>=1, c>=2 logits, got " +
                     shape_str(target_logits.shape()));
  }
  const std::size_t b = target_logits.shape()[0], c = target_logits.shape()[1];
  Tensor probs = softmax_rows(scalar_mul(target_logits, 1.0 / temperature));
  // Per-sample entropies H_i, then certainty weights w = b * softmax(-H).
  Tensor row_plogp = matmul(mul(probs, log(probs)), detail::ones({c, 1}));  // b x 1
  Tensor neg_entropy = reshape(row_plogp, {1, b});
  Tensor weights = reshape(scalar_mul(softmax_rows(neg_entropy), static_cast<double>(b)),
                           {b});
  Tensor confusion = matmul(transpose(probs), scale_rows(probs, weights));  // c x c
  Tensor row_sums = reshape(matmul(confusion, detail::ones({c, 1})), {c});
  Tensor normalized = div_rows(confusion, row_sums);
  std::vector<double> mask(c * c, 1.0);
  for (std::size_t j = 0; j < c; ++j) mask[j * c + j] = 0.0;
  Tensor off_diag = mul(normalized, Tensor({c, c}, std::move(mask)));
  return scalar_mul(sum(abs(off_diag)), 1.0 / static_cast<double>(c));
}

// Resolves the kernel bandwidths for a batch pair. Median mode pools both
// batches and takes the median pairwise Euclidean distance as base bandwidth.
inline std::vector<double> resolve_bandwidths(const Tensor& x, const Tensor& y,
                                              const KernelSpec& spec) {
  spec.validate();
  double base = spec.fixed_bandwidth;
  if (spec.mode == BandwidthMode::kMedian) {
    const std::size_t a = x.shape()[0], b = y.shape()[0], d = x.shape()[1];
    std::vector<const double*> rows;
    rows.reserve(a + b);
    for (std::size_t i = 0; i < a; ++i) rows.push_back(x.values().data() + i * d);
    for (std::size_t i = 0; i < b; ++i) rows.push_back(y.values().data() + i * d);
    std::vector<double> dists;
    dists.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        double dist2 = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
          const double diff = rows[i][t] - rows[j][t];
          dist2 += diff * diff;
        }
        dists.push_back(std::sqrt(dist2));
      }
    if (dists.empty()) {
      base = 1.0;
    } else {
      auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
      std::nth_element(dists.begin(), mid, dists.end());
      base = *mid;
      if (!(base > 0.0)) {
        warn("median pairwise distance is zero; falling back to bandwidth 1.0");
        base = 1.0;
      }
    }
  }
  std::vector<double> sigmas;
  sigmas.reserve(spec.multipliers.size());
  for (double m : spec.multipliers) sigmas.push_back(base * m);
  return sigmas;
}

inline Tensor gaussian_kernel_matrix(const Tensor& x, const Tensor& y,
                                     const KernelSpec& spec) {
  return gaussian_kernel(x, y, resolve_bandwidths(x, y, spec));
}

// Biased (V-statistic) multi-kernel MMD^2; non-negative for PD kernels. All
// three kernel blocks share the bandwidths resolved on the pooled batches.
inline Tensor mmd_loss(const Tensor& source_feats, const Tensor& target_feats,
                       const KernelSpec& spec) {
  if (source_feats.shape().size() != 2 || target_feats.shape().size() != 2 ||
      source_feats.shape()[0] == 0 || target_feats.shape()[0] == 0) {
    throw ShapeError("mmd_loss: empty batch");
  }
  if (source_feats.shape()[1] != target_feats.shape()[1]) {
    throw ShapeError("mmd_loss: feature dims differ, " +
                     shape_str(source_feats.shape()) + " vs " +
                     shape_str(target_feats.shape()));
  }
  const std::vector<double> sigmas = resolve_bandwidths(source_feats, target_feats, spec);
  Tensor k_ss = mean(gaussian_kernel(source_feats, source_feats, sigmas));
  Tensor k_tt = mean(gaussian_kernel(target_feats, target_feats, sigmas));
  Tensor k_st = mean(gaussian_kernel(source_feats, target_feats, sigmas));
  return sub(add(k_ss, k_tt), scalar_mul(k_st, 2.0));
}

// Instance-level weights for the pseudo-label MMD. For each class present in
// both domains the class-normalized label columns are combined as outer
// products, averaged over the number of common classes.
struct PlmmdWeights {
  Tensor w_xx;  // b_s x b_s
  Tensor w_xy;  // b_s x b_t
  Tensor w_yy;  // b_t x b_t
  int common_class_count = 0;
};

inline PlmmdWeights plmmd_weights(const Tensor& source_labels,
                                  const Tensor& target_pseudo) {
  if (source_labels.shape().size() != 2 || target_pseudo.shape().size() != 2 ||
      source_labels.shape()[1] != target_pseudo.shape()[1]) {
    throw ShapeError("plmmd_weights: label shapes " + shape_str(source_labels.shape()) +
                     " vs " + shape_str(target_pseudo.shape()));
  }
  for (double v : source_labels.values())
    if (v < 0.0) throw ConfigError("plmmd_weights: negative source label mass");
  for (double v : target_pseudo.values())
    if (v < 0.0) throw ConfigError("plmmd_weights: negative pseudo-label mass");

  const std::size_t bs = source_labels.shape()[0];
  const std::size_t bt = target_pseudo.shape()[0];
  const std::size_t k = source_labels.shape()[1];

  std::vector<double> wxx(bs * bs, 0.0), wxy(bs * bt, 0.0), wyy(bt * bt, 0.0);
  int common = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double src_mass = 0.0, tgt_mass = 0.0;
    for (std::size_t i = 0; i < bs; ++i) src_mass += source_labels.at(i, c);
    for (std::size_t j = 0; j < bt; ++j) tgt_mass += target_pseudo.at(j, c);
    if (!(src_mass > 0.0) || !(tgt_mass > 0.0)) continue;
    ++common;
    for (std::size_t i = 0; i < bs; ++i) {
      const double u_i = source_labels.at(i, c) / src_mass;
      if (u_i == 0.0) continue;
      for (std::size_t j = 0; j < bs; ++j)
        wxx[i * bs + j] += u_i * source_labels.at(j, c) / src_mass;
      for (std::size_t j = 0; j < bt; ++j)
        wxy[i * bt + j] += u_i * target_pseudo.at(j, c) / tgt_mass;
    }
    for (std::size_t i = 0; i < bt; ++i) {
      const double v_i = target_pseudo.at(i, c) / tgt_mass;
      if (v_i == 0.0) continue;
      for (std::size_t j = 0; j < bt; ++j)
        wyy[i * bt + j] += v_i * target_pseudo.at(j, c) / tgt_mass;
    }
  }
  if (common > 0) {
    const double inv = 1.0 / static_cast<double>(common);
    for (double& v : wxx) v *= inv;
    for (double& v : wxy) v *= inv;
    for (double& v : wyy) v *= inv;
  }
  PlmmdWeights out;
  out.w_xx = Tensor({bs, bs}, std::move(wxx));
  out.w_xy = Tensor({bs, bt}, std::move(wxy));
  out.w_yy = Tensor({bt, bt}, std::move(wyy));
  out.common_class_count = common;
  return out;
}

// Weighted MMD: sum(w_xx .* K_xx) - 2 sum(w_xy .* K_xy) + sum(w_yy .* K_yy).
inline Tensor plmmd_loss(const Tensor& source_feats, const Tensor& target_feats,
                         const PlmmdWeights& weights, const KernelSpec& spec) {
  const std::size_t bs = source_feats.shape()[0], bt = target_feats.shape()[0];
  if (weights.w_xx.shape() != Shape{bs, bs} || weights.w_xy.shape() != Shape{bs, bt} ||
      weights.w_yy.shape() != Shape{bt, bt}) {
    throw ShapeError("plmmd_loss: weight shapes do not match batch sizes " +
                     std::to_string(bs) + "/" + std::to_string(bt));
  }
  if (weights.common_class_count == 0) return Tensor::scalar(0.0);
  const std::vector<double> sigmas = resolve_bandwidths(source_feats, target_feats, spec);
  Tensor t_ss = sum(mul(weights.w_xx, gaussian_kernel(source_feats, source_feats, sigmas)));
  Tensor t_tt = sum(mul(weights.w_yy, gaussian_kernel(target_feats, target_feats, sigmas)));
  Tensor t_st = sum(mul(weights.w_xy, gaussian_kernel(source_feats, target_feats, sigmas)));
  return sub(add(t_ss, t_tt), scalar_mul(t_st, 2.0));
}

// ---------------------------------------------------------------------------
// Discriminator conditioning
// ---------------------------------------------------------------------------

enum class ConditioningKind { kConcat, kMultilinear, kRandomized };

inline std::string to_string(ConditioningKind kind) {
  switch (kind) {
    case ConditioningKind::kConcat: return "concat";
    case ConditioningKind::kMultilinear: return "multilinear";
    case ConditioningKind::kRandomized: return "randomized";
  }
  return "?";
}

inline ConditioningKind conditioning_from_string(const std::string& s) {
  if (s == "concat") return ConditioningKind::kConcat;
  if (s == "multilinear") return ConditioningKind::kMultilinear;
  if (s == "randomized") return ConditioningKind::kRandomized;
  throw ConfigError("unknown conditioning kind: " + s);
}

// Maps the joint variable h = (f, g) to the discriminator input. The
// randomized variant samples its projection matrices once and freezes them.
struct ConditioningMap {
  ConditioningKind kind = ConditioningKind::kMultilinear;
  std::size_t feature_dim = 0;
  std::size_t prediction_dim = 0;
  std::size_t output_dim = 0;
  Tensor r_f;  // feature_dim x output_dim, randomized only
  Tensor r_g;  // prediction_dim x output_dim, randomized only

  static ConditioningMap make(ConditioningKind kind, std::size_t feature_dim,
                              std::size_t prediction_dim,
                              std::size_t randomized_dim = 1024,
                              std::uint64_t seed = 0) {
    ConditioningMap map;
    map.kind = kind;
    map.feature_dim = feature_dim;
    map.prediction_dim = prediction_dim;
    switch (kind) {
      case ConditioningKind::kConcat:
        map.output_dim = feature_dim + prediction_dim;
        break;
      case ConditioningKind::kMultilinear:
        map.output_dim = feature_dim * prediction_dim;
        break;
      case ConditioningKind::kRandomized: {
        map.output_dim = randomized_dim;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> rf(feature_dim * randomized_dim);
        std::vector<double> rg(prediction_dim * randomized_dim);
        for (double& v : rf) v = normal(rng);
        for (double& v : rg) v = normal(rng);
        map.r_f = Tensor({feature_dim, randomized_dim}, std::move(rf));
        map.r_g = Tensor({prediction_dim, randomized_dim}, std::move(rg));
        break;
      }
    }
    return map;
  }
};

inline Tensor condition(const ConditioningMap& map, const Tensor& f, const Tensor& g) {
  if (f.shape().size() != 2 || g.shape().size() != 2 ||
      f.shape()[0] != g.shape()[0] || f.shape()[1] != map.feature_dim ||
      g.shape()[1] != map.prediction_dim) {
    throw ShapeError("condition: shapes " + shape_str(f.shape()) + ", " +
                     shape_str(g.shape()) + " do not match map dims " +
                     std::to_string(map.feature_dim) + "/" +
                     std::to_string(map.prediction_dim));
  }
  switch (map.kind) {
    case ConditioningKind::kConcat:
      return concat_cols(f, g);
    case ConditioningKind::kMultilinear:
      return row_outer(f, g);
    case ConditioningKind::kRandomized:
      return scalar_mul(mul(matmul(f, map.r_f), matmul(g, map.r_g)),
                        1.0 / std::sqrt(static_cast<double>(map.output_dim)));
  }
  throw ConfigError("condition: invalid map kind");
}

// ---------------------------------------------------------------------------
// Combined objective
// ---------------------------------------------------------------------------

struct LossBreakdown {
  double clc = 0.0;
  double dis = 0.0;
  double im = 0.0;
  double mcc = 0.0;
  double mmd = 0.0;
  double plmmd = 0.0;
  double total = 0.0;
};

// L = L_clc + L_dis + beta L_IM + gamma L_MCC + delta L_MMD + eta L_PLMMD.
// The adversarial -lambda coupling is realized by the gradient-reversal node
// inside the discriminator branch, so L_dis enters with coefficient 1 and a
// single minimization drives the min-max. Undefined tensors contribute 0.
inline Tensor total_loss(const Tensor& clc, const Tensor& dis, const Tensor& im,
                         const Tensor& mcc, const Tensor& mmd, const Tensor& plmmd,
                         const LossWeights& weights, LossBreakdown* breakdown = nullptr) {
  weights.validate();
  auto term_value = [](const char* name, const Tensor& t) {
    if (!t.defined()) return 0.0;
    const double v = t.item();
    if (!std::isfinite(v)) {
      throw NumericError(std::string("total_loss: non-finite ") + name + " term");
    }
    return v;
  };
  LossBreakdown b;
  b.clc = term_value("clc", clc);
  b.dis = term_value("dis", dis);
  b.im = term_value("im", im);
  b.mcc = term_value("mcc", mcc);
  b.mmd = term_value("mmd", mmd);
  b.plmmd = term_value("plmmd", plmmd);

  Tensor total = clc.defined() ? clc : Tensor::scalar(0.0);
  if (dis.defined()) total = add(total, dis);
  if (im.defined() && weights.beta > 0.0) total = add(total, scalar_mul(im, weights.beta));
  if (mcc.defined() && weights.gamma > 0.0)
    total = add(total, scalar_mul(mcc, weights.gamma));
  if (mmd.defined() && weights.delta > 0.0)
    total = add(total, scalar_mul(mmd, weights.delta));
  if (plmmd.defined() && weights.eta > 0.0)
    total = add(total, scalar_mul(plmmd, weights.eta));
  b.total = total.item();
  if (breakdown) *breakdown = b;
  return total;
}

}  // namespace idal
