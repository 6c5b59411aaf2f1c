#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "driftlab/mlp.hpp"
#include "driftlab/verify.hpp"
#include "support.hpp"

using namespace driftlab;

namespace {

const NoiseSchedule& vp2() {
  static auto s = NoiseSchedule::vp_const_beta(2.0);
  return s;
}

const NoiseSchedule& vp1() {
  static auto s = NoiseSchedule::vp_const_beta(1.0);
  return s;
}

FieldModel constant_noise(double value) {
  FieldModel m;
  m.param = FieldParam::kNoise;
  m.eval = [value](const std::vector<double>& x, double, int) {
    return std::vector<double>(x.size(), value);
  };
  return m;
}

DiscreteSchedule chain_from_abar(std::vector<double> a_bar) {
  DiscreteSchedule ds;
  const int n = static_cast<int>(a_bar.size()) - 1;
  ds.a_bar = std::move(a_bar);
  ds.t.resize(n + 1);
  ds.a.assign(n + 1, 0.0);
  ds.b.assign(n + 1, 0.0);
  ds.h.assign(n + 1, 0.0);
  ds.b_tilde.assign(n + 1, 0.0);
  for (int k = 0; k <= n; ++k) ds.t[k] = static_cast<double>(k) / n;
  for (int k = 1; k <= n; ++k) {
    ds.a[k] = ds.a_bar[k] / ds.a_bar[k - 1];
    ds.b[k] = 1.0 - ds.a[k];
    ds.h[k] = -std::log(ds.a[k]);
    ds.b_tilde[k] =
        (1.0 - ds.a_bar[k - 1]) / (1.0 - ds.a_bar[k]) * ds.b[k];
  }
  return ds;
}

double interior_max_ratio(const DiscreteSchedule& ds) {
  double worst = 0.0;
  for (const auto& row : ddpm_expansion_check(ds)) {
    if (1.0 - ds.a_bar[row.k - 1] < 0.5) continue;
    worst = std::max(worst, row.ratio);
  }
  return worst;
}

}  // namespace

TEST_CASE("grids validate shape and spacing") {
  const auto grid = make_grid(-2.0, 3.0, 101);
  CHECK(grid.points() == 101);
  CHECK(grid.x_lo() == -2.0);
  CHECK(grid.x_hi() == 3.0);
  CHECK(grid.dx == doctest::Approx(0.05).epsilon(1e-12));
  CHECK_NOTHROW(grid.validate());

  CHECK_THROWS_AS(make_grid(-2.0, 3.0, 63), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(1.0, 1.0, 128), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(2.0, -2.0, 128), std::invalid_argument);

  Grid1D skewed = make_grid(0.0, 1.0, 64);
  skewed.xs[10] += 1e-3;
  CHECK_THROWS_AS(skewed.validate(), std::invalid_argument);

  Grid1D payload = make_grid(0.0, 1.0, 64);
  payload.values.assign(64, -1.5);  // signed field samples are a valid payload
  CHECK_NOTHROW(payload.validate());
  payload.values.resize(63);
  CHECK_THROWS_AS(payload.validate(), std::invalid_argument);
}

TEST_CASE("suggested grid spans the means plus six widest deviations") {
  const auto mix = testlab::probe_pair();
  const double t = 0.5;
  const auto grid = suggested_grid(mix, vp2(), t, 512);
  const double a = vp2().alpha(t);
  const double sg = vp2().sigma(t);
  const double sd = std::sqrt(a * a * 0.01 + sg * sg);
  CHECK(grid.x_lo() == doctest::Approx(-a - 6.0 * sd).epsilon(1e-12));
  CHECK(grid.x_hi() == doctest::Approx(a + 6.0 * sd).epsilon(1e-12));

  const auto offset = GaussianMixture::single({2.0}, 0.25);
  const auto shifted = suggested_grid(offset, vp2(), t, 512);
  const double wide = std::sqrt(a * a * 0.25 + sg * sg);
  CHECK(shifted.x_lo() == doctest::Approx(2.0 * a - 6.0 * wide).epsilon(1e-12));
  CHECK(shifted.x_hi() == doctest::Approx(2.0 * a + 6.0 * wide).epsilon(1e-12));
}

TEST_CASE("density sampling clamps the far tail to zero") {
  const auto mix = testlab::probe_pair();
  const auto tail = make_grid(32.0, 52.0, 64);
  for (double v : density_on_grid(mix, vp2(), 0.5, tail)) CHECK(v == 0.0);

  const auto rep = continuity_residual(mix, vp2(), 0.5, tail);
  CHECK(rep.sup_norm == 0.0);
  CHECK(rep.l2_norm == 0.0);

  const auto near = make_grid(-3.0, 3.0, 128);
  const auto dens = density_on_grid(mix, vp2(), 0.5, near);
  for (std::size_t i = 0; i < near.points(); ++i) {
    const double direct =
        std::exp(marginal_logpdf(mix, vp2(), 0.5, {near.xs[i]}));
    CHECK(dens[i] == direct);
    CHECK(dens[i] >= 0.0);
  }
}

TEST_CASE("a stationary normal solves both transport equations") {
  const auto unit = GaussianMixture::single({0.0}, 1.0);
  const auto grid = make_grid(-6.0, 6.0, 1024);
  const auto cont = continuity_residual(unit, vp2(), 0.5, grid);
  CHECK(cont.sup_norm < 1e-8);
  const auto fp = fokker_planck_residual(unit, vp2(), 0.5, grid);
  CHECK(fp.sup_norm < 1e-8);
  CHECK(cont.points == 1024);
  CHECK(cont.x_lo == -6.0);
  CHECK(cont.x_hi == 6.0);
  CHECK(std::isfinite(cont.l2_norm));
  CHECK(cont.l2_norm >= 0.0);
}

TEST_CASE("benchmark residuals sit at stencil accuracy") {
  const auto mix = testlab::probe_pair();
  const auto grid = make_grid(-6.0, 6.0, 1024);
  for (double t : {0.3, 0.5, 0.7}) {
    CHECK(continuity_residual(mix, vp2(), t, grid).sup_norm < 1e-5);
    CHECK(fokker_planck_residual(mix, vp2(), t, grid).sup_norm < 1e-5);
  }
  CHECK(reverse_density_residual(mix, vp2(), 0.5, grid).sup_norm < 1e-5);
  CHECK(conditional_fp_residual(vp2(), 0.5, 1.0, grid).sup_norm < 1e-6);
}

TEST_CASE("grid refinement drops the l2 residual at fourth order") {
  const auto mix = testlab::probe_pair();
  double prev_cont = 0.0, prev_fp = 0.0;
  for (std::size_t n : {128u, 256u, 512u}) {
    const auto grid = make_grid(-6.0, 6.0, n);
    const double cont = continuity_residual(mix, vp2(), 0.5, grid).l2_norm;
    const double fp = fokker_planck_residual(mix, vp2(), 0.5, grid).l2_norm;
    if (n > 128u) {
      CHECK(prev_cont / cont >= 8.0);
      CHECK(prev_fp / fp >= 8.0);
    }
    prev_cont = cont;
    prev_fp = fp;
  }
}

TEST_CASE("reverse-time residual mirrors the forward equation exactly") {
  const auto mix = testlab::probe_pair();
  const auto grid = make_grid(-6.0, 6.0, 256);
  for (double tau : {0.4, 0.5, 0.65}) {
    const auto rev = reverse_density_residual(mix, vp2(), tau, grid);
    const auto fwd = fokker_planck_residual(mix, vp2(), 1.0 - tau, grid);
    CHECK(rev.sup_norm == fwd.sup_norm);
    CHECK(rev.l2_norm == fwd.l2_norm);
  }
}

TEST_CASE("residual reports are deterministic") {
  const auto mix = testlab::probe_pair();
  const auto grid = make_grid(-5.0, 5.0, 256);
  const auto first = continuity_residual(mix, vp2(), 0.37, grid);
  const auto second = continuity_residual(mix, vp2(), 0.37, grid);
  CHECK(first.sup_norm == second.sup_norm);
  CHECK(first.l2_norm == second.l2_norm);
  const auto fp1 = fokker_planck_residual(mix, vp2(), 0.37, grid);
  const auto fp2 = fokker_planck_residual(mix, vp2(), 0.37, grid);
  CHECK(fp1.sup_norm == fp2.sup_norm);
  CHECK(fp1.l2_norm == fp2.l2_norm);
}

TEST_CASE("posterior-averaged drift reproduces the direct residual") {
  const auto mix = testlab::probe_pair();
  const auto grid = make_grid(-6.0, 6.0, 512);
  for (double t : {0.3, 0.5, 0.7}) {
    const auto direct = continuity_residual(mix, vp2(), t, grid);
    const auto averaged = averaged_drift_residual(mix, vp2(), t, grid);
    CHECK(std::abs(averaged.sup_norm - direct.sup_norm) < 1e-6);
    CHECK(std::abs(averaged.l2_norm - direct.l2_norm) < 1e-6);
  }
}

TEST_CASE("residual inputs are validated") {
  const auto mix = testlab::probe_pair();
  const auto grid = make_grid(-6.0, 6.0, 128);

  auto planar = GaussianMixture::single({0.0, 0.0}, 1.0);
  CHECK_THROWS_AS(continuity_residual(planar, vp2(), 0.5, grid),
                  std::invalid_argument);
  CHECK_THROWS_AS(continuity_residual(mix, vp2(), 5e-5, grid),
                  std::invalid_argument);
  CHECK_THROWS_AS(fokker_planck_residual(mix, vp2(), 0.99995, grid),
                  std::invalid_argument);
  CHECK_THROWS_AS(conditional_fp_residual(vp2(), 1.0, 1.0, grid),
                  std::invalid_argument);

  Grid1D bad = grid;
  bad.dx = -bad.dx;
  CHECK_THROWS_AS(continuity_residual(mix, vp2(), 0.5, bad),
                  std::invalid_argument);
}

TEST_CASE("fisher identity is exact for a single component") {
  const auto unit = GaussianMixture::single({0.0}, 1.0);
  const auto rep = fisher_check(unit, vp2(), 0.5, 0.9, 5000, Rng(9));
  CHECK(rep.std_error == 0.0);
  CHECK(rep.z_score == 0.0);
  CHECK(std::abs(rep.estimate - rep.reference) < 1e-12);
}

TEST_CASE("fisher z stays in band on the benchmark") {
  const auto mix = testlab::probe_pair();
  const auto rep = fisher_check(mix, vp2(), 0.5, 0.7, 100000, Rng(7));
  CHECK(std::abs(rep.z_score) < 3.0);
  CHECK(rep.std_error > 0.0);

  int exceed = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto r = fisher_check(mix, vp2(), 0.5, 0.7, 100000, Rng(seed));
    if (std::abs(r.z_score) > 3.0) ++exceed;
  }
  CHECK(exceed <= 1);
}

TEST_CASE("fisher concentrates on the near component deep in a basin") {
  const auto mix = testlab::probe_pair();
  const double x = 5.0;
  const auto resp = posterior_responsibilities(mix, vp2(), 0.5, {x});
  CHECK(resp[1] > 0.9999);

  const auto rep = fisher_check(mix, vp2(), 0.5, x, 100000, Rng(8));
  CHECK(std::abs(rep.z_score) < 3.0);
  const auto near = GaussianMixture::single({1.0}, 0.01);
  const double near_score = marginal_score(near, vp2(), 0.5, {x})[0];
  CHECK(std::abs(rep.estimate - near_score) <= 3.0 * rep.std_error);
}

TEST_CASE("fisher validates draws and dimension") {
  const auto mix = testlab::probe_pair();
  CHECK_THROWS_AS(fisher_check(mix, vp2(), 0.5, 0.7, 999, Rng(1)),
                  std::invalid_argument);
  auto planar = GaussianMixture::single({0.0, 0.0}, 1.0);
  CHECK_THROWS_AS(fisher_check(planar, vp2(), 0.5, 0.7, 5000, Rng(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(fisher_check(mix, vp2(), 1e-5, 0.7, 5000, Rng(1)),
                  std::invalid_argument);
}

TEST_CASE("ito isometry matches the quadrature target") {
  const auto unit = [](double) { return 1.0; };
  const auto rep = ito_isometry_check(unit, 0.0, 1.0, 100000, 128, Rng(11));
  CHECK(rep.target_var == 1.0);
  CHECK(std::abs(rep.z_score) < 3.0);
  CHECK(rep.normality_stat < 10.0);

  const auto zero = ito_isometry_check([](double) { return 0.0; }, 0.0, 1.0,
                                       1000, 128, Rng(13));
  CHECK(zero.sample_var == 0.0);
  CHECK(zero.target_var == 0.0);
  CHECK(zero.z_score == 0.0);
  CHECK(zero.normality_stat == 0.0);
}

TEST_CASE("ito target reproduces the chain increments") {
  // With beta constant at 1 the integrand sqrt(beta(1 - tau)) is 1, so the
  // variance over the reversed step window must equal h_k.
  const auto ds = discretize(vp1(), uniform_grid(20));
  const int k = 7;
  const auto rep = ito_isometry_check([](double) { return 1.0; },
                                      1.0 - ds.t[k], 1.0 - ds.t[k - 1], 20000,
                                      256, Rng(12));
  CHECK(std::abs(rep.target_var - ds.h[k]) < 1e-12);
  CHECK(std::abs(rep.z_score) < 3.0);

  const auto lin = NoiseSchedule::vp_linear_beta();
  const auto lds = discretize(lin, uniform_grid(16));
  const int j = 5;
  const auto lrep = ito_isometry_check(
      [&lin](double tau) { return std::sqrt(lin.beta(1.0 - tau)); },
      1.0 - lds.t[j], 1.0 - lds.t[j - 1], 5000, 256, Rng(55));
  CHECK(std::abs(lrep.target_var - lds.h[j]) < 1e-12);
  CHECK(std::abs(lrep.z_score) < 3.0);
}

TEST_CASE("ito z band holds over twenty seeds") {
  int exceed = 0, heavy = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto rep = ito_isometry_check(
        [](double tau) { return std::sqrt(1.0 - tau); }, 0.0, 1.0, 10000, 512,
        Rng(seed));
    if (std::abs(rep.z_score) > 3.0) ++exceed;
    if (rep.normality_stat > 13.8) ++heavy;
  }
  CHECK(exceed <= 1);
  CHECK(heavy <= 1);
}

TEST_CASE("ito validates inputs") {
  const auto unit = [](double) { return 1.0; };
  CHECK_THROWS_AS(ito_isometry_check(unit, 0.0, 1.0, 1000, 127, Rng(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(ito_isometry_check(unit, 0.0, 1.0, 1, 128, Rng(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(ito_isometry_check(unit, 1.0, 1.0, 1000, 128, Rng(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(ito_isometry_check(std::function<double(double)>{}, 0.0, 1.0,
                                     1000, 128, Rng(1)),
                  std::invalid_argument);
}

TEST_CASE("orthogonality decomposition balances") {
  const auto mix = testlab::probe_pair();

  FieldModel ident;
  ident.param = FieldParam::kNoise;
  ident.eval = [](const std::vector<double>& x, double, int) { return x; };
  const auto rep = orthogonality_check(mix, vp2(), ident, 20000, Rng(31));
  CHECK(std::abs(rep.z_score) < 3.0);
  CHECK(rep.std_error > 0.0);

  const auto oracle_probe = oracle_field(mix, vp2(), FieldParam::kNoise);
  const auto exact = orthogonality_check(mix, vp2(), oracle_probe, 5000,
                                         Rng(32));
  CHECK(exact.mean_gap == 0.0);
  CHECK(exact.std_error == 0.0);
  CHECK(exact.z_score == 0.0);

  MlpSpec spec;
  spec.hidden = {16};
  Mlp net(spec, Rng(33));
  const auto netm = network_field(net, vp2(), FieldParam::kNoise);
  const auto net_rep = orthogonality_check(mix, vp2(), netm, 20000, Rng(34));
  CHECK(std::abs(net_rep.z_score) < 3.0);
}

TEST_CASE("orthogonality validates inputs") {
  const auto mix = testlab::probe_pair();
  CHECK_THROWS_AS(orthogonality_check(mix, vp2(), FieldModel{}, 100, Rng(1)),
                  std::invalid_argument);
  FieldModel ident;
  ident.param = FieldParam::kNoise;
  ident.eval = [](const std::vector<double>& x, double, int) { return x; };
  CHECK_THROWS_AS(orthogonality_check(mix, vp2(), ident, 1, Rng(1)),
                  std::invalid_argument);
}

TEST_CASE("ddim step equals the ode coefficient step") {
  const auto mix = testlab::probe_pair();
  const auto ds = discretize(vp2(), uniform_grid(40));
  const auto model = oracle_field(mix, vp2(), FieldParam::kNoise);
  for (int k = 2; k <= ds.steps(); ++k)
    CHECK(ddim_ode_equivalence(ds, model, k) < 1e-12);

  const std::vector<std::vector<double>> probes{{0.3}, {-2.7}, {1.9}};
  CHECK(ddim_ode_equivalence(ds, model, 17, probes) < 1e-12);
}

TEST_CASE("ddim equivalence holds across random networks") {
  const auto ds = discretize(vp2(), uniform_grid(30));
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    MlpSpec spec;
    spec.hidden = {8};
    Mlp net(spec, rng.split(trial));
    const auto model = network_field(net, vp2(), FieldParam::kNoise);
    const int k = 2 + rng.uniform_int(ds.steps() - 1);
    const std::vector<std::vector<double>> probes{{3.0 * rng.gaussian()}};
    CHECK(ddim_ode_equivalence(ds, model, k, probes) < 1e-12);
  }
}

TEST_CASE("ddim edge cases are exact") {
  // Scale pairs are powers of two and probes subtract without rounding, so
  // both formulas evaluate exactly and the difference must be zero.
  const auto shrink = chain_from_abar({1.0, 0.25, 0.0625});
  const std::vector<std::vector<double>> any{{0.3712345}, {-1.9}, {2.0}};
  CHECK(ddim_ode_equivalence(shrink, constant_noise(0.0), 2, any) == 0.0);
  CHECK(ddim_ode_equivalence(shrink, constant_noise(0.0), 2) == 0.0);

  const auto flat = chain_from_abar({1.0, 0.25, 0.25});
  const double s = std::sqrt(0.75);
  const std::vector<std::vector<double>> aligned{{0.0}, {s}, {2.0 * s}};
  CHECK(ddim_ode_equivalence(flat, constant_noise(1.0), 2, aligned) == 0.0);
}

TEST_CASE("ddim equivalence validates k") {
  const auto ds = discretize(vp2(), uniform_grid(10));
  const auto model = constant_noise(0.0);
  CHECK_THROWS_AS(ddim_ode_equivalence(ds, model, 1), std::invalid_argument);
  CHECK_THROWS_AS(ddim_ode_equivalence(ds, model, 11), std::invalid_argument);
  const auto tiny = discretize(vp2(), uniform_grid(1));
  CHECK_THROWS_AS(ddim_ode_equivalence(tiny, model, 2), std::invalid_argument);
}

TEST_CASE("ddpm expansion rows track the discrete chain") {
  const auto ds = discretize(vp1(), uniform_grid(100));
  const auto rows = ddpm_expansion_check(ds);
  REQUIRE(rows.size() == 99);
  CHECK(rows.front().k == 2);
  CHECK(rows.back().k == 100);
  for (const auto& row : rows) {
    CHECK(row.b_tilde == ds.b_tilde[row.k]);
    CHECK(row.h == ds.h[row.k]);
    CHECK(row.ratio ==
          std::abs(row.b_tilde - row.h) / (row.h * row.h));
  }
  CHECK(ds.b_tilde[1] == 0.0);

  // The second-order coefficient at step k is bounded by
  // 1/2 + a_bar_{k-1} / (1 - a_bar_{k-1}), which the k = 50 row must respect.
  const auto& mid = rows[48];
  REQUIRE(mid.k == 50);
  const double abar = ds.a_bar[49];
  CHECK(mid.ratio <= 0.5 + abar / (1.0 - abar));
  CHECK(mid.ratio > 0.0);
}

TEST_CASE("ddpm expansion stays second order in the chain interior") {
  const double n100 = interior_max_ratio(discretize(vp1(), uniform_grid(100)));
  const double n400 = interior_max_ratio(discretize(vp1(), uniform_grid(400)));
  const double n1600 =
      interior_max_ratio(discretize(vp1(), uniform_grid(1600)));
  CHECK(n100 <= 2.0);
  CHECK(n400 <= 2.0);
  CHECK(n1600 <= 2.0);
  CHECK(n400 <= 1.5 * n100);
  CHECK(n1600 <= 1.5 * n400);
}

TEST_CASE("ddpm expansion validates the chain") {
  const auto tiny = discretize(vp1(), uniform_grid(1));
  CHECK_THROWS_AS(ddpm_expansion_check(tiny), std::invalid_argument);
}
