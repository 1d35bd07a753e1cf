#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cake/model.hpp"
#include "cake/numerics.hpp"

namespace cake {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

inline void validate(const AdamHyper& h) {
  if (!(h.lr > 0.0)) throw Error("optim", "learning rate must be > 0");
  if (!(h.beta1 >= 0.0 && h.beta1 < 1.0)) throw Error("optim", "beta1 must be in [0, 1)");
  if (!(h.beta2 >= 0.0 && h.beta2 < 1.0)) throw Error("optim", "beta2 must be in [0, 1)");
  if (!(h.eps > 0.0)) throw Error("optim", "epsilon must be > 0");
}

// One bias-corrected Adam update over flat buffers; t is the new step count.
inline void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                        std::span<double> v, std::uint64_t t, const AdamHyper& h) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw Error("optim", "adam: tensor shape mismatch");
  }
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    theta[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

// Adam over a flat parameter vector; used for scalar problems and for the
// arousal-valence head.
class FlatAdam {
 public:
  FlatAdam(std::size_t n, AdamHyper h) : h_(h), m_(n, 0.0), v_(n, 0.0) { validate(h_); }

  void step(std::span<double> theta, std::span<const double> grad) {
    if (!all_finite(grad)) throw Error("optim", "non-finite gradient at step " + std::to_string(t_ + 1));
    ++t_;
    adam_update(theta, grad, m_, v_, t_, h_);
  }
  std::uint64_t steps() const { return t_; }

 private:
  AdamHyper h_;
  Vec64 m_, v_;
  std::uint64_t t_ = 0;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  ParamTensors m;
  ParamTensors v;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline AdamState adam_init(const ModelParams& params, const AdamHyper& hyper = {}) {
  validate(hyper);
  return AdamState{hyper, 0, zeros_like<ParamTensors>(params), zeros_like<ParamTensors>(params)};
}

namespace detail {
template <typename T>
auto tensor_spans(T& t) {
  using Span = std::conditional_t<std::is_const_v<T>, std::span<const double>, std::span<double>>;
  std::vector<Span> out;
  for_each_tensor(t, [&](std::string_view, Span s) { out.push_back(s); });
  return out;
}
}  // namespace detail

inline void adam_step(AdamState& state, ModelParams& params, const Gradients& grads) {
  auto theta = detail::tensor_spans(params);
  auto g = detail::tensor_spans(grads);
  auto m = detail::tensor_spans(state.m);
  auto v = detail::tensor_spans(state.v);
  if (g.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw Error("optim", "adam: tensor count mismatch");
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (g[i].size() != theta[i].size()) throw Error("optim", "adam: gradient shape mismatch");
    if (!all_finite(g[i])) {
      throw Error("optim", "non-finite gradient at step " + std::to_string(state.t + 1));
    }
  }
  ++state.t;
  for (std::size_t i = 0; i < theta.size(); ++i) adam_update(theta[i], g[i], m[i], v[i], state.t, state.hyper);
}

}  // namespace cake
