#pragma once

// Multi-domain weighted softmax cross-entropy and its weight formulas, plus
// the MSE objective of the arousal-valence regressor.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "cake/datamodel.hpp"
#include "cake/numerics.hpp"

namespace cake {

// w_class[j][c] = N_total^j / (N_class[j][c] * nbclass)
// w_dataset[j]  = 1 / log(N_total^j)
struct LossWeights {
  std::vector<Vec64> w_class;
  Vec64 w_dataset;

  std::size_t n_domains() const { return w_dataset.size(); }
};

struct ClassWeights {
  Vec64 weights;
  // Classes whose count is zero; they receive weight 0 instead of infinity.
  std::vector<std::size_t> empty_classes;

  bool has_warning() const { return !empty_classes.empty(); }
};

inline ClassWeights class_weights(std::span<const std::uint64_t> counts, std::size_t nbclass = kNumEmotions) {
  if (counts.size() < nbclass) {
    throw Error("objective", "class_weights: " + std::to_string(counts.size()) +
                                 " counts for " + std::to_string(nbclass) + " classes");
  }
  std::uint64_t n_total = 0;
  for (std::size_t c = 0; c < nbclass; ++c) n_total += counts[c];
  if (n_total == 0) throw Error("objective", "class_weights: domain has no samples");
  ClassWeights out;
  out.weights.assign(nbclass, 0.0);
  for (std::size_t c = 0; c < nbclass; ++c) {
    if (counts[c] == 0) {
      out.empty_classes.push_back(c);
      continue;
    }
    out.weights[c] = static_cast<double>(n_total) /
                     (static_cast<double>(counts[c]) * static_cast<double>(nbclass));
  }
  return out;
}

inline ClassWeights class_weights(const DomainMeta& meta, std::size_t nbclass = kNumEmotions) {
  return class_weights(std::span<const std::uint64_t>(meta.class_counts), nbclass);
}

// Natural log by default; log_base only rescales all domains uniformly.
inline double dataset_weight(std::uint64_t n_total, double log_base = std::numbers::e) {
  if (n_total <= 1) {
    throw Error("objective", "dataset weight undefined for a domain of " + std::to_string(n_total) +
                                 " samples (need >= 2)");
  }
  return std::log(log_base) / std::log(static_cast<double>(n_total));
}

// Real-valued overload for synthetic sizes such as e^2.
inline double dataset_weight(double n_total, double log_base = std::numbers::e) {
  if (!(n_total > 1.0)) throw Error("objective", "dataset weight undefined for N_total <= 1");
  return std::log(log_base) / std::log(n_total);
}

inline Vec64 dataset_weights(std::span<const DomainMeta> metas, double log_base = std::numbers::e) {
  Vec64 out;
  out.reserve(metas.size());
  for (const auto& m : metas) {
    if (m.n_total <= 1) {
      throw Error("objective", "invalid domain '" + m.name + "': N_total = " + std::to_string(m.n_total) +
                                   " (need >= 2)");
    }
    out.push_back(dataset_weight(m.n_total, log_base));
  }
  return out;
}

struct LossWeightReport {
  LossWeights weights;
  // (domain, class) pairs that had zero training samples.
  std::vector<std::pair<std::size_t, std::size_t>> empty_classes;
};

// Computed once from training-set counts.
inline LossWeightReport compute_loss_weights(std::span<const DomainMeta> metas,
                                             std::size_t nbclass = kNumEmotions,
                                             double log_base = std::numbers::e) {
  LossWeightReport rep;
  rep.weights.w_dataset = dataset_weights(metas, log_base);
  for (std::size_t j = 0; j < metas.size(); ++j) {
    auto cw = class_weights(metas[j], nbclass);
    for (auto c : cw.empty_classes) rep.empty_classes.emplace_back(j, c);
    rep.weights.w_class.push_back(std::move(cw.weights));
  }
  return rep;
}

inline LossWeights uniform_loss_weights(std::size_t n_domains, std::size_t nbclass = kNumEmotions) {
  return LossWeights{std::vector<Vec64>(n_domains, Vec64(nbclass, 1.0)), Vec64(n_domains, 1.0)};
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Vec64> dlogits;
};

// loss = (1/N) sum_i w_class[j_i][y_i] * w_dataset[j_i] * CE(softmax(logits_i), y_i)
// Each sample is routed to the single head of its own domain; the cross
// terms of the other heads are identically zero.
inline LossAndGrad multidomain_loss(std::span<const Vec64> logits, std::span<const std::size_t> labels,
                                    std::span<const std::uint32_t> domain_ids, const LossWeights& weights) {
  const std::size_t n = logits.size();
  if (n == 0) throw Error("objective", "multidomain_loss: empty batch");
  if (labels.size() != n || domain_ids.size() != n) {
    throw Error("objective", "multidomain_loss: logits/labels/domains length mismatch");
  }
  LossAndGrad out;
  out.dlogits.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = domain_ids[i];
    if (j >= weights.n_domains() || j >= weights.w_class.size()) {
      throw Error("objective", "multidomain_loss: no weights for domain " + std::to_string(j));
    }
    const auto& wc = weights.w_class[j];
    if (labels[i] >= logits[i].size() || labels[i] >= wc.size()) {
      throw Error("objective", "multidomain_loss: label " + std::to_string(labels[i]) + " out of range");
    }
    const double w = wc[labels[i]] * weights.w_dataset[j];
    out.loss -= w * log_softmax_at(logits[i], labels[i]);
    Vec64 g = softmax_stable(logits[i]);
    g[labels[i]] -= 1.0;
    for (double& x : g) x *= w * inv_n;
    out.dlogits[i] = std::move(g);
  }
  out.loss *= inv_n;
  return out;
}

struct MseResult {
  double loss = 0.0;
  Vec64 grad;
};

// Mean of squared coordinate errors. For an (arousal, valence) pair the
// gradient is exactly pred - target.
inline MseResult mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw Error("objective", "mse_loss: length mismatch");
  }
  MseResult out;
  out.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.loss += d * d;
    out.grad[i] = 2.0 * d / static_cast<double>(pred.size());
  }
  out.loss /= static_cast<double>(pred.size());
  return out;
}

}  // namespace cake
