#pragma once

// Random (config, batch) problems and their analytic-vs-central-difference
// comparison. The AV head is excluded: the classification loss does not
// train it.

#include <cstdint>
#include <string>
#include <vector>

#include "cake/model.hpp"
#include "cake/numerics.hpp"
#include "cake/objective.hpp"

namespace cake {

struct GradCheckCase {
  ModelConfig cfg;
  ModelParams params;
  std::vector<FeatureRecord> records;
  LossWeights weights;
  std::vector<DropoutMask> masks;  // empty: dropout off

  std::vector<const FeatureRecord*> batch() const {
    std::vector<const FeatureRecord*> b;
    for (const auto& r : records) b.push_back(&r);
    return b;
  }
};

inline GradCheckCase make_gradcheck_case(SeededRng& rng, Variant variant, std::uint32_t k, std::uint32_t dim,
                                         std::size_t batch_size, bool dropout, std::uint32_t n_domains = 3,
                                         AvSource av_source = AvSource::record) {
  GradCheckCase c;
  c.cfg.variant = variant;
  c.cfg.k = variant == Variant::av ? 0 : k;
  c.cfg.dim = dim;
  c.cfg.n_domains = n_domains;
  c.cfg.dropout_rate = dropout ? 0.3 : 0.0;
  c.cfg.seed = rng.next_u64();
  c.cfg.av_source = av_source;
  c.params = init_params(c.cfg);
  // Non-zero biases so every parameter has a generic gradient.
  for (double& b : c.params.embed_b) b = 0.2 * rng.next_gaussian();
  for (auto& bj : c.params.clf_b) {
    for (double& b : bj) b = 0.2 * rng.next_gaussian();
  }
  for (std::size_t i = 0; i < batch_size; ++i) {
    FeatureRecord r;
    r.id = "gc" + std::to_string(i);
    r.domain_id = static_cast<std::uint32_t>(rng.next_below(n_domains));
    r.label = static_cast<EmotionClass>(rng.next_below(c.cfg.n_classes));
    r.features.resize(dim);
    for (double& x : r.features) x = rng.next_gaussian();
    r.av = ArousalValence{-0.9 + 1.8 * rng.next_double(), -0.9 + 1.8 * rng.next_double()};
    c.records.push_back(std::move(r));
  }
  c.weights.w_dataset.resize(n_domains);
  c.weights.w_class.assign(n_domains, Vec64(c.cfg.n_classes));
  for (std::uint32_t j = 0; j < n_domains; ++j) {
    c.weights.w_dataset[j] = 0.1 + rng.next_double();
    for (double& w : c.weights.w_class[j]) w = 0.2 + 2.0 * rng.next_double();
  }
  if (dropout && c.cfg.has_embed_head()) {
    for (std::size_t i = 0; i < batch_size; ++i) c.masks.push_back(make_dropout_mask(rng, dim, c.cfg.dropout_rate));
  }
  return c;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t n_compared = 0;
};

// Relative error |a - b| / max(|a|, |b|, 1e-8) per trainable coordinate.
inline GradCheckResult check_gradients(const GradCheckCase& c, double eps = 1e-5) {
  const auto batch = c.batch();
  const Gradients analytic = backprop(c.params, c.cfg, batch, c.weights, c.masks).grads;

  // Flat index ranges of the tensors under test.
  std::vector<std::pair<std::size_t, std::size_t>> trainable;
  std::size_t pos = 0;
  for_each_tensor(c.params, [&](std::string_view name, std::span<const double> s) {
    if (name != "av_W" && name != "av_b") trainable.emplace_back(pos, pos + s.size());
    pos += s.size();
  });

  const Vec64 theta = flatten(c.params);
  ModelParams scratch = c.params;
  const ScalarFn loss = [&](std::span<const double> p) {
    unflatten(p, scratch);
    return backprop(scratch, c.cfg, batch, c.weights, c.masks).loss;
  };
  const Vec64 numeric = finite_diff_grad(loss, theta, eps);
  const Vec64 a = flatten(analytic);

  GradCheckResult res;
  for (auto [lo, hi] : trainable) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double e = relative_error(a[i], numeric[i]);
      ++res.n_compared;
      if (e > res.max_rel_error) {
        res.max_rel_error = e;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace cake
