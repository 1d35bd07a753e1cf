#pragma once

// Linear embedding heads (CAKE-k, AV, AVk, CAKE-k-Norm), per-domain
// classifier heads, the linear arousal-valence regressor, and exact
// forward/backward passes for the multi-domain loss.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cake/datamodel.hpp"
#include "cake/numerics.hpp"
#include "cake/objective.hpp"

namespace cake {

enum class Variant : std::uint8_t { cake = 0, av = 1, avk = 2, cake_norm = 3 };

// Where AV-based variants read arousal-valence from.
enum class AvSource : std::uint8_t {
  record = 0,     // the value stored on each record (ground truth)
  regressor = 1,  // the model's own linear AV head
};

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::cake: return "cake";
    case Variant::av: return "av";
    case Variant::avk: return "avk";
    case Variant::cake_norm: return "cake-norm";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "cake") return Variant::cake;
  if (s == "av") return Variant::av;
  if (s == "avk") return Variant::avk;
  if (s == "cake-norm" || s == "cake_norm") return Variant::cake_norm;
  throw Error("model", "unknown variant '" + std::string(s) + "' (cake|av|avk|cake-norm)");
}

inline std::string_view av_source_name(AvSource s) {
  return s == AvSource::record ? "record" : "regressor";
}

inline AvSource parse_av_source(std::string_view s) {
  if (s == "record" || s == "ground-truth") return AvSource::record;
  if (s == "regressor" || s == "regressed") return AvSource::regressor;
  throw Error("model", "unknown av source '" + std::string(s) + "' (record|regressor)");
}

struct ModelConfig {
  Variant variant = Variant::cake;
  std::uint32_t k = 3;
  std::uint32_t dim = 512;
  std::uint32_t n_domains = 1;
  std::uint32_t n_classes = kNumEmotions;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  AvSource av_source = AvSource::regressor;

  bool has_embed_head() const { return variant != Variant::av; }
  bool uses_av() const { return variant == Variant::av || variant == Variant::avk; }
  bool has_av_head() const { return uses_av() && av_source == AvSource::regressor; }
  std::size_t embedding_dim() const {
    switch (variant) {
      case Variant::av: return 2;
      case Variant::avk: return k + 2;
      default: return k;
    }
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void validate(const ModelConfig& cfg) {
  auto bad = [](const std::string& what) { throw Error("model", "invalid model config: " + what); };
  if (cfg.variant == Variant::av && cfg.k != 0) bad("variant av requires k = 0");
  if (cfg.variant != Variant::av && cfg.k < 1) bad("variant " + std::string(variant_name(cfg.variant)) + " requires k >= 1");
  if (cfg.dim < 1) bad("feature dimension must be >= 1");
  if (cfg.n_domains < 1) bad("need at least one domain");
  if (cfg.n_classes < 1 || cfg.n_classes > kNumEmotions) bad("n_classes must be in 1..7");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) bad("dropout rate must be in [0, 1)");
}

// Tensor layout shared by parameters, gradients and optimizer moments.
struct ParamTensors {
  Mat64 embed_W;  // k x D
  Vec64 embed_b;  // k
  Mat64 av_W;     // 2 x D
  Vec64 av_b;     // 2
  std::vector<Mat64> clf_W;  // per domain: n_classes x d
  std::vector<Vec64> clf_b;  // per domain: n_classes

  friend bool operator==(const ParamTensors&, const ParamTensors&) = default;
};

struct ModelParams : ParamTensors {};
struct Gradients : ParamTensors {};

// Visits every tensor in a fixed order: embed_W, embed_b, av_W, av_b, then
// (clf_W[j], clf_b[j]) for each domain. Absent tensors are visited as empty.
template <typename Tensors, typename Fn>
  requires std::is_base_of_v<ParamTensors, std::remove_const_t<Tensors>>
void for_each_tensor(Tensors& t, Fn&& fn) {
  auto span_of = [](auto& x) { if constexpr (requires { x.flat(); }) return x.flat(); else return std::span(x); };
  fn(std::string_view("embed_W"), span_of(t.embed_W));
  fn(std::string_view("embed_b"), span_of(t.embed_b));
  fn(std::string_view("av_W"), span_of(t.av_W));
  fn(std::string_view("av_b"), span_of(t.av_b));
  for (std::size_t j = 0; j < t.clf_W.size(); ++j) {
    fn(std::string_view("clf_W"), span_of(t.clf_W[j]));
    fn(std::string_view("clf_b"), span_of(t.clf_b[j]));
  }
}

template <typename To>
To zeros_like(const ParamTensors& p) {
  To z;
  z.embed_W = Mat64(p.embed_W.rows(), p.embed_W.cols());
  z.embed_b = Vec64(p.embed_b.size(), 0.0);
  z.av_W = Mat64(p.av_W.rows(), p.av_W.cols());
  z.av_b = Vec64(p.av_b.size(), 0.0);
  for (const auto& w : p.clf_W) z.clf_W.emplace_back(w.rows(), w.cols());
  for (const auto& b : p.clf_b) z.clf_b.emplace_back(b.size(), 0.0);
  return z;
}

inline std::size_t parameter_count(const ParamTensors& t) {
  std::size_t n = 0;
  for_each_tensor(t, [&](std::string_view, std::span<const double> s) { n += s.size(); });
  return n;
}

inline Vec64 flatten(const ParamTensors& t) {
  Vec64 out;
  for_each_tensor(t, [&](std::string_view, std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

inline void unflatten(std::span<const double> flat, ParamTensors& t) {
  if (flat.size() != parameter_count(t)) throw Error("model", "unflatten: size mismatch");
  std::size_t pos = 0;
  for_each_tensor(t, [&](std::string_view, std::span<double> s) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), s.size(), s.begin());
    pos += s.size();
  });
}

inline ModelParams init_params(const ModelConfig& cfg) {
  validate(cfg);
  SeededRng rng(cfg.seed);
  auto uniform_fill = [&](Mat64& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (double& x : w.flat()) x = -bound + 2.0 * bound * rng.next_double();
  };
  ModelParams p;
  if (cfg.has_embed_head()) {
    p.embed_W = Mat64(cfg.k, cfg.dim);
    p.embed_b = Vec64(cfg.k, 0.0);
    uniform_fill(p.embed_W);
  }
  if (cfg.has_av_head()) {
    p.av_W = Mat64(2, cfg.dim);
    p.av_b = Vec64(2, 0.0);
    uniform_fill(p.av_W);
  }
  const std::size_t d = cfg.embedding_dim();
  for (std::uint32_t j = 0; j < cfg.n_domains; ++j) {
    p.clf_W.emplace_back(cfg.n_classes, d);
    p.clf_b.emplace_back(cfg.n_classes, 0.0);
    uniform_fill(p.clf_W.back());
  }
  return p;
}

// Throws unless the tensors have exactly the shapes init_params produces.
inline void check_shapes(const ParamTensors& p, const ModelConfig& cfg) {
  const ModelParams ref = zeros_like<ModelParams>(init_params(cfg));
  auto same = [](const Mat64& a, const Mat64& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
  bool ok = same(p.embed_W, ref.embed_W) && p.embed_b.size() == ref.embed_b.size() && same(p.av_W, ref.av_W) &&
            p.av_b.size() == ref.av_b.size() && p.clf_W.size() == ref.clf_W.size() &&
            p.clf_b.size() == ref.clf_b.size();
  for (std::size_t j = 0; ok && j < ref.clf_W.size(); ++j) {
    ok = same(p.clf_W[j], ref.clf_W[j]) && p.clf_b[j].size() == ref.clf_b[j].size();
  }
  if (!ok) throw Error("model", "parameter shapes do not match the model config");
}

// Inverted dropout: each entry is 0 (dropped) or 1/(1-rate) (kept).
using DropoutMask = Vec64;

inline DropoutMask make_dropout_mask(SeededRng& rng, std::size_t dim, double rate) {
  DropoutMask m(dim);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& x : m) x = rng.next_double() < rate ? 0.0 : keep_scale;
  return m;
}

// av_W x + av_b, clipped to [-1, 1] per coordinate.
inline ArousalValence av_regress(const ModelParams& params, std::span<const double> features) {
  if (params.av_W.empty()) throw Error("model", "av_regress: model has no arousal-valence head");
  const Vec64 y = affine(params.av_W, params.av_b, features);
  return {std::clamp(y[0], -1.0, 1.0), std::clamp(y[1], -1.0, 1.0)};
}

// The AV pair an AV-based variant consumes for this record, or nullopt for
// variants that ignore AV.
inline std::optional<ArousalValence> resolve_av(const ModelParams& params, const ModelConfig& cfg,
                                                const FeatureRecord& rec) {
  if (!cfg.uses_av()) return std::nullopt;
  if (cfg.av_source == AvSource::regressor) return av_regress(params, rec.features);
  if (!rec.av) {
    throw Error("model", "record '" + rec.id + "' has no arousal-valence value, required by variant " +
                             std::string(variant_name(cfg.variant)));
  }
  return rec.av;
}

inline constexpr double kMinEmbeddingNorm = 1e-12;

// Intermediate values of the embedding forward pass kept for backprop.
struct EmbedTrace {
  Vec64 input;      // features after dropout
  Vec64 projected;  // W x + b before normalization
  double norm = 1.0;
  Vec64 out;
};

inline EmbedTrace embed_trace(const ModelParams& params, const ModelConfig& cfg, std::span<const double> features,
                              const std::optional<ArousalValence>& av, const DropoutMask* mask = nullptr) {
  if (features.size() != cfg.dim) {
    throw Error("model", "embed: got " + std::to_string(features.size()) + " features, model expects " +
                             std::to_string(cfg.dim));
  }
  EmbedTrace t;
  if (cfg.uses_av() && !av) {
    throw Error("model", "embed: variant " + std::string(variant_name(cfg.variant)) +
                             " requires an arousal-valence value");
  }
  if (cfg.variant == Variant::av) {
    t.out = {av->arousal, av->valence};
    return t;
  }
  t.input.assign(features.begin(), features.end());
  if (mask) {
    if (mask->size() != features.size()) throw Error("model", "embed: dropout mask length mismatch");
    for (std::size_t i = 0; i < t.input.size(); ++i) t.input[i] *= (*mask)[i];
  }
  t.projected = affine(params.embed_W, params.embed_b, t.input);
  t.out = t.projected;
  if (cfg.variant == Variant::cake_norm) {
    t.norm = norm2(t.projected);
    if (t.norm < kMinEmbeddingNorm) {
      throw Error("model", "embed: degenerate embedding norm " + std::to_string(t.norm) + " under cake-norm");
    }
    for (double& x : t.out) x /= t.norm;
  } else if (cfg.variant == Variant::avk) {
    t.out.push_back(av->arousal);
    t.out.push_back(av->valence);
  }
  return t;
}

inline Vec64 embed(const ModelParams& params, const ModelConfig& cfg, std::span<const double> features,
                   const std::optional<ArousalValence>& av, const DropoutMask* mask = nullptr) {
  return embed_trace(params, cfg, features, av, mask).out;
}

inline Vec64 embed(const ModelParams& params, const ModelConfig& cfg, const FeatureRecord& rec) {
  return embed(params, cfg, rec.features, resolve_av(params, cfg, rec));
}

inline Vec64 classify(const ModelParams& params, std::span<const double> embedding, std::size_t domain_id) {
  if (domain_id >= params.clf_W.size()) {
    throw Error("model", "classify: no classifier head for domain " + std::to_string(domain_id));
  }
  return affine(params.clf_W[domain_id], params.clf_b[domain_id], embedding);
}

// argmax of the logits (softmax is monotone); ties go to the lowest index.
inline EmotionClass predict_embedding(const ModelParams& params, std::span<const double> embedding,
                                      std::size_t domain_id) {
  return static_cast<EmotionClass>(argmax(classify(params, embedding, domain_id)));
}

inline EmotionClass predict(const ModelParams& params, const ModelConfig& cfg, const FeatureRecord& rec,
                            std::size_t domain_id) {
  return predict_embedding(params, embed(params, cfg, rec), domain_id);
}

struct BackpropResult {
  double loss = 0.0;
  Gradients grads;
};

using Batch = std::span<const FeatureRecord* const>;

// Loss and exact gradients for one batch. masks is either empty (no dropout)
// or holds one mask per sample. The AV head is not trained by this loss.
inline BackpropResult backprop(const ModelParams& params, const ModelConfig& cfg, Batch batch,
                               const LossWeights& weights, std::span<const DropoutMask> masks = {}) {
  if (batch.empty()) throw Error("model", "backprop: empty batch");
  if (!masks.empty() && masks.size() != batch.size()) throw Error("model", "backprop: need one dropout mask per sample");
  const std::size_t n = batch.size();
  std::vector<EmbedTrace> traces;
  std::vector<Vec64> logits;
  std::vector<std::size_t> labels;
  std::vector<std::uint32_t> domains;
  traces.reserve(n);
  logits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureRecord& rec = *batch[i];
    traces.push_back(embed_trace(params, cfg, rec.features, resolve_av(params, cfg, rec),
                                 masks.empty() ? nullptr : &masks[i]));
    logits.push_back(classify(params, traces.back().out, rec.domain_id));
    labels.push_back(index_of(rec.label));
    domains.push_back(rec.domain_id);
  }
  const LossAndGrad lg = multidomain_loss(logits, labels, domains, weights);

  BackpropResult res{lg.loss, zeros_like<Gradients>(params)};
  Gradients& g = res.grads;
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = domains[i];
    const Vec64& dl = lg.dlogits[i];
    add_outer(g.clf_W[j], dl, traces[i].out);
    for (std::size_t c = 0; c < dl.size(); ++c) g.clf_b[j][c] += dl[c];
    if (!cfg.has_embed_head()) continue;

    Vec64 de = transpose_times(params.clf_W[j], dl);
    de.resize(cfg.k);  // AVk: the AV tail carries no trainable upstream
    if (cfg.variant == Variant::cake_norm) {
      // d(e/|e|)/de = (I - u u^T) / |e|
      const Vec64& u = traces[i].out;
      const double ud = dot(u, de);
      for (std::size_t r = 0; r < de.size(); ++r) de[r] = (de[r] - u[r] * ud) / traces[i].norm;
    }
    add_outer(g.embed_W, de, traces[i].input);
    for (std::size_t r = 0; r < de.size(); ++r) g.embed_b[r] += de[r];
  }
  return res;
}

// Same as above with dropout masks drawn in sample order from rng.
inline BackpropResult backprop(const ModelParams& params, const ModelConfig& cfg, Batch batch,
                               const LossWeights& weights, SeededRng& rng) {
  std::vector<DropoutMask> masks;
  if (cfg.has_embed_head() && cfg.dropout_rate > 0.0) {
    masks.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) masks.push_back(make_dropout_mask(rng, cfg.dim, cfg.dropout_rate));
  }
  return backprop(params, cfg, batch, weights, masks);
}

struct AvRegressionResult {
  double loss = 0.0;  // mean over records of the per-pair MSE
  Mat64 grad_W;
  Vec64 grad_b;
};

// MSE of the clipped linear AV head against each record's stored AV. The
// clip has zero derivative wherever the unclipped output leaves [-1, 1].
inline AvRegressionResult av_regression_backprop(const ModelParams& params, Batch batch) {
  if (params.av_W.empty()) throw Error("model", "av regression: model has no arousal-valence head");
  if (batch.empty()) throw Error("model", "av regression: empty batch");
  AvRegressionResult res{0.0, Mat64(2, params.av_W.cols()), Vec64(2, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const FeatureRecord* rec : batch) {
    if (!rec->av) throw Error("model", "av regression: record '" + rec->id + "' has no arousal-valence target");
    const Vec64 raw = affine(params.av_W, params.av_b, rec->features);
    const Vec64 pred = {std::clamp(raw[0], -1.0, 1.0), std::clamp(raw[1], -1.0, 1.0)};
    const Vec64 target = {rec->av->arousal, rec->av->valence};
    MseResult m = mse_loss(pred, target);
    res.loss += m.loss * inv_n;
    for (std::size_t r = 0; r < 2; ++r) {
      if (raw[r] < -1.0 || raw[r] > 1.0) m.grad[r] = 0.0;
      m.grad[r] *= inv_n;
      res.grad_b[r] += m.grad[r];
    }
    add_outer(res.grad_W, m.grad, rec->features);
  }
  return res;
}

}  // namespace cake
