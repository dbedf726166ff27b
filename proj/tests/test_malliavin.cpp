#include "bq/errors.hpp"
#include "bq/malliavin.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace bq;

namespace {

struct Small {
  GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  double dt = 5e-3;
  Integrator integ{grid, p, dt};
  SetupRng rng{11, 0};
};

BaseTrajectory noisy_base(const Small& f, int steps) {
  SetupRng r(2, 0);
  ExtendedState e;
  e.x = Vec2(0.7, 2.9);
  e.tau = Vec2(0.8, 0.6);
  return BaseTrajectory(f.integ, bqtest::random_state(f.grid.n, 3, r, 1.0), e, CounterRng(4, 0), 0, steps);
}

}  // namespace

TEST_CASE("direction set is orthonormal") {
  Small f;
  const auto d = default_directions(f.grid.n, f.p);
  REQUIRE(d.size() == 12);
  for (std::size_t a = 0; a < d.size(); ++a)
    for (std::size_t b = 0; b < d.size(); ++b)
      CHECK(std::abs(variation_inner(d[a].p, d[b].p, f.p, 4.0) - (a == b ? 1.0 : 0.0)) < 1e-13);
  CHECK(std::count_if(d.begin(), d.end(), [](const Direction& x) { return x.low_mode; }) == 8);
}

TEST_CASE("temperature block of the Gram matrix at rest") {
  Small f;
  const int steps = 100;
  const BaseTrajectory base(f.integ, SpectralState(f.grid.n), ExtendedState{}, {}, steps);
  const auto dirs = default_directions(f.grid.n, f.p);
  const GramMatrix g = malliavin_gram(base, 0, steps, dirs, 10);
  CHECK(g.symmetric());
  // theta direction of cos x1 (index 4): J sigma keeps theta = alpha e^{-nu2 (T-r)} cos x1
  const double T = steps * f.dt, a = f.p.alpha[0];
  const double c = std::sqrt(weighted_norm_sq(SpectralState(ScalarField(f.grid.n), trig_scalar(f.grid.n, 1, 0, 0)), 4.0, f.p));
  const double expect = a * a * c * c * (-std::expm1(-2.0 * f.p.nu2 * T)) / (2.0 * f.p.nu2);
  CHECK(std::abs(g.M(4, 4) - expect) < 1e-4 * expect);
  CHECK(g.min_eig() >= -1e-12);
}

TEST_CASE("Gram matrix on a noisy base: PSD, quadrature refinement, thread invariance") {
  Small f;
  const int steps = 60;
  const BaseTrajectory base = noisy_base(f, steps);
  const auto dirs = default_directions(f.grid.n, f.p);
  const GramMatrix g = malliavin_gram(base, 0, steps, dirs, 10);
  const GramMatrix g2 = malliavin_gram(base, 0, steps, dirs, 5);
  const GramMatrix gt = malliavin_gram(base, 0, steps, dirs, 10, 4.0, 3);
  CHECK(g.min_eig() >= -1e-10 * g.M.cwiseAbs().maxCoeff());
  CHECK((g.M - gt.M).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.M - g2.M).cwiseAbs().maxCoeff() < 1e-3 * g.M.cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(malliavin_gram(base, 0, steps + 1, dirs, 10), DomainError);
}

TEST_CASE("cone probe respects the cone weight and the spectrum") {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2, 2);
  M(0, 0) = 1.0;
  SetupRng rng(1, 0);
  const ConeProbe c = cone_probe(M, {true, false}, 0.5, 2000, rng);
  CHECK(c.accepted == 2000);
  CHECK(c.probe >= 0.25 - 1e-14);
  CHECK(c.probe < 0.27);
  CHECK(c.min_eig == doctest::Approx(0.0));
  Eigen::MatrixXd R = Eigen::MatrixXd::Random(5, 5);
  R = R * R.transpose();
  const ConeProbe d = cone_probe(R, {true, true, false, true, false}, 0.3, 500, rng);
  CHECK(d.probe >= d.min_eig - 1e-12);
  CHECK_THROWS_AS(cone_probe(M, {false, false}, 0.5, 10, rng), DomainError);
}

TEST_CASE("regularized control: identity, limits and monotone residual") {
  Small f;
  const int steps = 80;
  const BaseTrajectory base = noisy_base(f, steps);
  const RegularizedControl ctl(base, default_directions(f.grid.n, f.p), 10);

  const auto zero = ctl.solve(VariationState(f.grid.n), 1e-2);
  CHECK(zero.rho_norm == 0.0);
  CHECK(zero.control_norm == 0.0);

  VariationState p(f.grid.n);
  p.psi.theta = trig_scalar(f.grid.n, 1, 0, 0, 0.3) + trig_scalar(f.grid.n, 0, 1, 1, 0.2);
  p.y = Vec2(0.1, -0.2);
  const VariationState Jp = jacobian_action(p, 0, steps, base);
  const double jn = variation_norm(Jp, f.p, 4.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const auto r = ctl.solve(p, beta);
    CHECK(r.identity_error < 1e-8);
    CHECK(r.rho_norm <= prev * (1 + 1e-12));
    prev = r.rho_norm;
    CHECK(r.v[steps / 2 + 1][0] == 0.0);
  }
  const auto big = ctl.solve(p, 1e8);
  CHECK(std::abs(big.rho_norm - jn) < 1e-4 * jn);
  CHECK(big.control_norm < 1e-6);
  CHECK_THROWS_AS(ctl.solve(p, 0.0), ConfigError);
}
