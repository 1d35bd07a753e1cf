#include <gtest/gtest.h>

#include <cmath>

#include "cake/optim.hpp"

namespace cake {
namespace {

ModelConfig cake3() {
  ModelConfig c;
  c.k = 3;
  c.dim = 16;
  c.n_domains = 2;
  c.seed = 4;
  return c;
}

TEST(AdamInit, DefaultsGiveZeroedState) {
  const ModelParams p = init_params(cake3());
  const AdamState st = adam_init(p);
  EXPECT_EQ(st.t, 0u);
  EXPECT_EQ(st.hyper, (AdamHyper{1e-3, 0.9, 0.999, 1e-8}));
  for (double x : flatten(st.m)) EXPECT_EQ(x, 0.0);
  for (double x : flatten(st.v)) EXPECT_EQ(x, 0.0);
}

TEST(AdamInit, ShapesMirrorParams) {
  const ModelParams p = init_params(cake3());
  const AdamState st = adam_init(p);
  EXPECT_EQ(st.m, zeros_like<ParamTensors>(p));
  EXPECT_EQ(st.v, zeros_like<ParamTensors>(p));
  EXPECT_EQ(parameter_count(st.m), parameter_count(p));
}

TEST(AdamInit, InvalidHyperparametersRejected) {
  const ModelParams p = init_params(cake3());
  EXPECT_THROW(adam_init(p, AdamHyper{1e-3, 1.0, 0.999, 1e-8}), Error);
  EXPECT_THROW(adam_init(p, AdamHyper{1e-3, 0.9, 1.0, 1e-8}), Error);
  EXPECT_THROW(adam_init(p, AdamHyper{0.0, 0.9, 0.999, 1e-8}), Error);
  EXPECT_THROW(adam_init(p, AdamHyper{1e-3, -0.1, 0.999, 1e-8}), Error);
  EXPECT_THROW(adam_init(p, AdamHyper{1e-3, 0.9, 0.999, 0.0}), Error);
  EXPECT_NO_THROW(adam_init(p, AdamHyper{1e-3, 0.0, 0.0, 1e-8}));
}

TEST(AdamStep, ZeroGradientsLeaveParamsUnchanged) {
  ModelParams p = init_params(cake3());
  const ModelParams before = p;
  AdamState st = adam_init(p);
  adam_step(st, p, zeros_like<Gradients>(p));
  adam_step(st, p, zeros_like<Gradients>(p));
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.t, 2u);
}

TEST(AdamStep, FirstStepIsSignOfGradient) {
  SeededRng rng(1);
  ModelParams p = init_params(cake3());
  const ModelParams before = p;
  AdamState st = adam_init(p);
  Gradients g = zeros_like<Gradients>(p);
  for (double& x : g.embed_W.flat()) x = rng.next_gaussian();
  for (double& x : g.clf_b[1]) x = rng.next_gaussian();
  adam_step(st, p, g);
  const Vec64 a = flatten(before), b = flatten(p), gf = flatten(g);
  const double lr = st.hyper.lr;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double expected = gf[i] == 0.0 ? 0.0 : -lr * (gf[i] > 0 ? 1.0 : -1.0);
    EXPECT_NEAR(b[i] - a[i], expected, lr * 1e-6);
  }
}

TEST(AdamStep, ScalarQuadraticConverges) {
  Vec64 theta = {1.0};
  FlatAdam opt(1, AdamHyper{0.1, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 100; ++i) opt.step(theta, Vec64{2.0 * theta[0]});
  EXPECT_LT(std::abs(theta[0]), 0.05);
  EXPECT_EQ(opt.steps(), 100u);
}

// Independent scalar Adam, three steps, against the tensor implementation.
TEST(AdamStep, MatchesScalarReference) {
  const AdamHyper h{0.05, 0.8, 0.95, 1e-6};
  const Vec64 grads = {0.3, -1.2, 0.7};
  double theta = 0.4, m = 0, v = 0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = h.beta1 * m + (1 - h.beta1) * g;
    v = h.beta2 * v + (1 - h.beta2) * g * g;
    const double mh = m / (1 - std::pow(h.beta1, t));
    const double vh = v / (1 - std::pow(h.beta2, t));
    theta -= h.lr * mh / (std::sqrt(vh) + h.eps);
  }
  Vec64 x = {0.4};
  FlatAdam opt(1, h);
  for (double g : grads) opt.step(x, Vec64{g});
  EXPECT_NEAR(x[0], theta, 1e-15);
}

TEST(AdamStep, NoMomentumGivesSignLikeStep) {
  const AdamHyper h{0.1, 0.0, 0.0, 1e-8};
  Vec64 x = {1.0, 1.0, 1.0};
  const Vec64 g = {0.5, -3.0, 1e-9};
  FlatAdam opt(3, h);
  opt.step(x, g);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x[i], 1.0 - h.lr * g[i] / (std::abs(g[i]) + h.eps), 1e-15);
}

TEST(AdamStep, PermutationEquivariant) {
  SeededRng rng(9);
  const Vec64 theta0 = rng_uniform(rng, 6, -1, 1);
  const std::vector<Vec64> grads = {rng_uniform(rng, 6, -1, 1), rng_uniform(rng, 6, -1, 1)};
  const std::array<std::size_t, 6> perm = {3, 0, 5, 1, 4, 2};
  Vec64 a = theta0, b(6);
  for (std::size_t i = 0; i < 6; ++i) b[i] = theta0[perm[i]];
  FlatAdam oa(6, {}), ob(6, {});
  for (const auto& g : grads) {
    Vec64 gp(6);
    for (std::size_t i = 0; i < 6; ++i) gp[i] = g[perm[i]];
    oa.step(a, g);
    ob.step(b, gp);
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(b[i], a[perm[i]]);
}

TEST(AdamStep, BitIdenticalReplays) {
  SeededRng rng(2);
  ModelParams p = init_params(cake3());
  Gradients g = zeros_like<Gradients>(p);
  for (double& x : g.embed_W.flat()) x = rng.next_gaussian();
  ModelParams q = p;
  AdamState a = adam_init(p), b = adam_init(q);
  for (int i = 0; i < 5; ++i) {
    adam_step(a, p, g);
    adam_step(b, q, g);
  }
  EXPECT_EQ(p, q);
  EXPECT_EQ(a, b);
}

TEST(AdamStep, NonFiniteGradientRejectedBeforeUpdate) {
  ModelParams p = init_params(cake3());
  const ModelParams before = p;
  AdamState st = adam_init(p);
  Gradients g = zeros_like<Gradients>(p);
  g.embed_b[0] = 1.0;
  g.clf_W[1].flat()[2] = NAN;
  EXPECT_THROW(adam_step(st, p, g), Error);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.t, 0u);
  Vec64 x = {1.0};
  FlatAdam opt(1, {});
  EXPECT_THROW(opt.step(x, Vec64{INFINITY}), Error);
}

TEST(AdamStep, ShapeMismatchRejected) {
  ModelParams p = init_params(cake3());
  AdamState st = adam_init(p);
  ModelConfig other = cake3();
  other.k = 2;
  EXPECT_THROW(adam_step(st, p, zeros_like<Gradients>(init_params(other))), Error);
}

TEST(AdamState, SecondMomentStaysNonNegative) {
  SeededRng rng(6);
  ModelParams p = init_params(cake3());
  AdamState st = adam_init(p);
  for (int i = 0; i < 20; ++i) {
    Gradients g = zeros_like<Gradients>(p);
    for (double& x : g.clf_W[0].flat()) x = rng.next_gaussian();
    adam_step(st, p, g);
  }
  for (double x : flatten(st.v)) EXPECT_GE(x, 0.0);
}

}  // namespace
}  // namespace cake
