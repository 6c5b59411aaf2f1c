#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "driftlab/fields.hpp"
#include "support.hpp"

using namespace driftlab;

namespace {
const NoiseSchedule& vp2() {
  static auto s = NoiseSchedule::vp_const_beta(2.0);
  return s;
}
}  // namespace

TEST_CASE("noise models pass through unchanged") {
  FieldModel m;
  m.param = FieldParam::kNoise;
  m.eval = [](const std::vector<double>& x, double, int) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = 3.0 * x[i] + 0.1;
    return v;
  };
  const std::vector<double> x = {0.3, -1.7};
  CHECK(to_noise(m, vp2(), x, 0.5) == m.eval(x, 0.5, kNullCondition));
}

TEST_CASE("score view of the preserved normal converts to sigma x") {
  auto mix = GaussianMixture::single({0.0}, 1.0);
  auto m = oracle_field(mix, vp2(), FieldParam::kScore);
  Rng rng(301);
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(0.05, 0.95);
    const double x = rng.uniform(-3.0, 3.0);
    const double eps = to_noise(m, vp2(), {x}, t)[0];
    CHECK(eps == doctest::Approx(vp2().sigma(t) * x).epsilon(1e-12));
    CHECK(eps ==
          doctest::Approx(ideal_noise(mix, vp2(), t, {x})[0]).epsilon(1e-13));
  }
}

TEST_CASE("an exact x0 predictor inverts the forward reparameterization") {
  const double t = 0.35, x0 = 0.8, eps = -0.6;
  const double x = vp2().alpha(t) * x0 + vp2().sigma(t) * eps;
  FieldModel m;
  m.param = FieldParam::kX0;
  m.eval = [x0](const std::vector<double>& q, double, int) {
    return std::vector<double>(q.size(), x0);
  };
  CHECK(to_noise(m, vp2(), {x}, t)[0] == doctest::Approx(eps).epsilon(1e-12));
}

TEST_CASE("parameterization round trip noise -> score -> noise") {
  FieldModel noise;
  noise.param = FieldParam::kNoise;
  noise.eval = [](const std::vector<double>& x, double t, int) {
    return std::vector<double>{std::sin(x[0]) + t, std::cos(x[0]) - t};
  };
  FieldModel score;
  score.param = FieldParam::kScore;
  score.eval = [&noise](const std::vector<double>& x, double t, int c) {
    auto v = noise.eval(x, t, c);
    const double sg = vp2().sigma(t);
    for (double& u : v) u /= -sg;
    return v;
  };
  Rng rng(302);
  for (int i = 0; i < 50; ++i) {
    // sigma in [1e-3, 1]: any t >= sigma^{-1}(1e-3); for beta = 2 that is tiny.
    const double t = rng.uniform(1e-6, 1.0);
    if (vp2().sigma(t) < 1e-3) continue;
    const std::vector<double> x = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    auto direct = noise.eval(x, t, kNullCondition);
    auto via = to_noise(score, vp2(), x, t);
    for (int k = 0; k < 2; ++k)
      CHECK(via[k] == doctest::Approx(direct[k]).epsilon(1e-12));
  }
}

TEST_CASE("reverse SDE drift of the preserved normal is +x") {
  auto m = oracle_field(GaussianMixture::single({0.0}, 1.0), vp2(),
                        FieldParam::kScore);
  Rng rng(303);
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(kTMin, kTMax);
    const double x = rng.uniform(-3.0, 3.0);
    CHECK(reverse_sde_drift(m, vp2(), {x}, t)[0] ==
          doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("reverse SDE drift equals the score form at the probe point") {
  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kNoise);
  const double t = 0.5, x = 0.7;
  const auto dd = drift_diffusion(vp2(), t);
  const double want =
      dd.f * x - dd.g2 * marginal_score(mix, vp2(), t, {x})[0];
  CHECK(reverse_sde_drift(m, vp2(), {x}, t)[0] ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("zero-gamma classifier mode is bitwise the unguided drift") {
  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kNoise);
  GuidanceSpec g;
  g.mode = GuidanceMode::kClassifier;
  g.gamma = 0.0;
  g.condition = kNullCondition;
  g.classifier_grad = [&](const std::vector<double>& x, double t, int c) {
    return class_score(mix, vp2(), t, x, c);
  };
  const double t = 0.5, x = 0.7;
  CHECK(reverse_sde_drift(m, vp2(), {x}, t, g) ==
        reverse_sde_drift(m, vp2(), {x}, t));
}

TEST_CASE("probability-flow velocity identities") {
  auto normal = GaussianMixture::single({0.0}, 1.0);
  auto mn = oracle_field(normal, vp2(), FieldParam::kScore);
  Rng rng(304);
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(kTMin, kTMax);
    const double x = rng.uniform(-3.0, 3.0);
    CHECK(std::abs(reverse_ode_velocity(mn, vp2(), {x}, t)[0]) < 1e-12);
  }

  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kNoise);
  const double t = 0.5, x = 0.7;
  // SDE drift minus flow velocity leaves (g^2 / 2 sigma) eps_hat.
  const auto dd = drift_diffusion(vp2(), t);
  const double eps = to_noise(m, vp2(), {x}, t)[0];
  const double gap = reverse_sde_drift(m, vp2(), {x}, t)[0] -
                     reverse_ode_velocity(m, vp2(), {x}, t)[0];
  CHECK(gap == doctest::Approx(0.5 * dd.g2 / vp2().sigma(t) * eps)
                   .epsilon(1e-12));
  CHECK(reverse_ode_velocity(m, vp2(), {x}, t)[0] ==
        doctest::Approx(marginal_velocity(mix, vp2(), t, {x})[0])
            .epsilon(1e-9));
}

TEST_CASE("flow velocity equals the oracle field at 500 random queries") {
  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kNoise);
  Rng rng(305);
  for (int i = 0; i < 500; ++i) {
    const double t = rng.uniform(0.01, kTMax);
    const double x = rng.uniform(-3.0, 3.0);
    CHECK(reverse_ode_velocity(m, vp2(), {x}, t)[0] ==
          doctest::Approx(marginal_velocity(mix, vp2(), t, {x})[0])
              .epsilon(1e-9));
  }
}

TEST_CASE("velocity-parameterized models feed the ODE directly") {
  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kVelocity);
  const double t = 0.5, x = 0.7;
  CHECK(reverse_ode_velocity(m, vp2(), {x}, t) ==
        marginal_velocity(mix, vp2(), t, {x}));
  CHECK_THROWS_AS(to_noise(m, vp2(), {x}, t), std::invalid_argument);
  CHECK_THROWS_AS(reverse_sde_drift(m, vp2(), {x}, t), std::invalid_argument);
  GuidanceSpec g;
  g.mode = GuidanceMode::kCfg;
  g.s = 2.0;
  g.condition = 1;
  CHECK_THROWS_AS(reverse_ode_velocity(m, vp2(), {x}, t, g),
                  std::invalid_argument);
}

TEST_CASE("cfg_combine endpoints and arithmetic") {
  const std::vector<double> c = {0.1 * std::sqrt(2.0), -0.7};
  const std::vector<double> u = {std::exp(1.0), 0.3};
  CHECK(cfg_combine(c, u, 1.0) == c);
  CHECK(cfg_combine(c, u, 0.0) == u);
  auto v = cfg_combine({1.0, 0.0}, {0.0, 1.0}, 2.0);
  CHECK(v[0] == 2.0);
  CHECK(v[1] == -1.0);
}

TEST_CASE("cfg_combine is affine in the scale") {
  // Dyadic inputs keep every intermediate exact.
  const std::vector<double> c = {0.75, -1.25};
  const std::vector<double> u = {0.25, 0.5};
  for (auto [s1, s2] : {std::pair{0.0, 2.0}, {0.5, 1.5}, {-1.0, 4.0}}) {
    auto mid = cfg_combine(c, u, 0.5 * (s1 + s2));
    auto a = cfg_combine(c, u, s1);
    auto b = cfg_combine(c, u, s2);
    for (int i = 0; i < 2; ++i) CHECK(mid[i] == 0.5 * (a[i] + b[i]));
  }
}

TEST_CASE("cfg scale one is bitwise the conditional predictor") {
  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kNoise);
  GuidanceSpec cfg;
  cfg.mode = GuidanceMode::kCfg;
  cfg.s = 1.0;
  cfg.condition = 1;
  GuidanceSpec plain;
  plain.condition = 1;
  const double t = 0.5, x = 0.7;
  CHECK(guided_noise(m, vp2(), {x}, t, cfg) ==
        guided_noise(m, vp2(), {x}, t, plain));
  CHECK(reverse_sde_drift(m, vp2(), {x}, t, cfg) ==
        reverse_sde_drift(m, vp2(), {x}, t, plain));

  // cond == null makes every scale collapse to the unguided predictor.
  GuidanceSpec null_cfg;
  null_cfg.mode = GuidanceMode::kCfg;
  null_cfg.s = 3.0;
  null_cfg.condition = kNullCondition;
  CHECK(guided_noise(m, vp2(), {x}, t, null_cfg) == to_noise(m, vp2(), {x}, t));
}

TEST_CASE("unit-gamma classifier guidance recovers the conditional drift") {
  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kNoise);
  GuidanceSpec g;
  g.mode = GuidanceMode::kClassifier;
  g.gamma = 1.0;
  g.condition = 1;
  g.classifier_grad = [&](const std::vector<double>& x, double t, int c) {
    return class_score(mix, vp2(), t, x, c);
  };
  auto cond_model =
      oracle_field(class_conditional(mix, 1), vp2(), FieldParam::kNoise);
  Rng rng(306);
  for (int i = 0; i < 30; ++i) {
    const double t = rng.uniform(0.05, 0.95);
    const double x = rng.uniform(-2.5, 2.5);
    CHECK(reverse_sde_drift(m, vp2(), {x}, t, g)[0] ==
          doctest::Approx(reverse_sde_drift(cond_model, vp2(), {x}, t)[0])
              .epsilon(1e-9));
    CHECK(reverse_ode_velocity(m, vp2(), {x}, t, g)[0] ==
          doctest::Approx(reverse_ode_velocity(cond_model, vp2(), {x}, t)[0])
              .epsilon(1e-9));
  }
}

TEST_CASE("conditional oracle evaluation routes through the class mixture") {
  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kNoise);
  const double t = 0.5, x = 0.7;
  CHECK(to_noise(m, vp2(), {x}, t, 1) ==
        ideal_noise(class_conditional(mix, 1), vp2(), t, {x}));
}

TEST_CASE("field error contracts") {
  auto mix = testlab::probe_pair();
  auto m = oracle_field(mix, vp2(), FieldParam::kScore);
  CHECK_THROWS_AS(to_noise(m, vp2(), {0.5}, 0.0), std::domain_error);

  GuidanceSpec g;
  g.mode = GuidanceMode::kClassifier;
  g.gamma = 2.0;
  g.condition = 0;
  CHECK_THROWS_AS(reverse_sde_drift(m, vp2(), {0.5}, 0.5, g),
                  std::invalid_argument);

  CHECK_THROWS_AS(to_noise(m, vp2(), {0.5}, 0.5, 9), std::invalid_argument);
  CHECK_THROWS_AS(cfg_combine({1.0}, {1.0, 2.0}, 0.5), std::invalid_argument);
}
