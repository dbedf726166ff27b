#include "bq/brackets.hpp"
#include "bq/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace bq;

namespace {

double l2(const SpectralState& U) { return std::sqrt(sobolev_norm_sq(U.omega, 0) + sobolev_norm_sq(U.theta, 0)); }

PhysicalParams unit_params() {
  PhysicalParams p;
  p.nu1 = p.nu2 = p.g = 1.0;
  return p;
}

}  // namespace

TEST_CASE("bracket of constant fields vanishes") {
  const GridSpec grid = GridSpec::make(16);
  SetupRng rng(1, 0);
  const auto U = bqtest::random_state(grid.n, 3, rng);
  const auto a = constant_map(bqtest::random_state(grid.n, 3, rng));
  const auto b = constant_map(bqtest::random_state(grid.n, 3, rng));
  CHECK(bqtest::max_coeff(lie_bracket_fd(a, b, U, 1e-3)) == 0.0);
  CHECK_THROWS_AS(lie_bracket_fd(a, b, U, 1e-14), DomainError);
}

TEST_CASE("bilinear pair has the hand-computed bracket") {
  // X(U) = B(U,U), Y(U) = s: [X,Y] = -DX s = -B(s,U) - B(U,s)
  const GridSpec grid = GridSpec::make(16);
  SetupRng rng(2, 0);
  const auto U = bqtest::random_state(grid.n, 3, rng);
  const auto s = bqtest::random_state(grid.n, 3, rng);
  const FieldMap X = [&](const SpectralState& V) { return nonlinear_B(V, V, grid); };
  const SpectralState fd = lie_bracket_fd(X, constant_map(s), U, 0.1);
  const SpectralState exact = -1.0 * (nonlinear_B(s, U, grid) + nonlinear_B(U, s, grid));
  CHECK(bqtest::max_coeff_diff(fd, exact) < 1e-12);
}

TEST_CASE("Y at rest for j = (1,0)") {
  const GridSpec grid = GridSpec::make(16);
  const auto p = unit_params();
  const SpectralState Y = Y_field(1, 0, 0, SpectralState(grid.n), p, grid);
  CHECK(bqtest::max_coeff_diff(Y.omega, trig_scalar(grid.n, 1, 0, 1)) < 1e-15);
  CHECK(bqtest::max_coeff_diff(Y.theta, trig_scalar(grid.n, 1, 0, 0)) < 1e-15);
}

TEST_CASE("Y for j1 = 0 has no vorticity mode") {
  const GridSpec grid = GridSpec::make(16);
  SetupRng rng(3, 0);
  PhysicalParams p;
  const auto U = bqtest::random_state(grid.n, 3, rng);
  const SpectralState Y = Y_field(0, 1, 1, U, p, grid);
  const SpectralState s = trig_mode(grid.n, 0, 1, 1, Slot::temperature);
  SpectralState expect = nonlinear_B(U, s, grid);
  expect.axpy(p.nu2, s);
  CHECK(bqtest::max_coeff_diff(Y, expect) < 1e-15);
}

TEST_CASE("Y matches the difference bracket of the drift and a constant field") {
  const GridSpec grid = GridSpec::make(32);
  SetupRng rng(4, 0);
  PhysicalParams p;
  const auto F = drift_map(p, grid);
  for (int t = 0; t < 3; ++t) {
    const auto U = bqtest::random_state(grid.n, 4, rng);
    for (int m = 0; m < 2; ++m) {
      const SpectralState Y = Y_field(2, -1, m, U, p, grid);
      const SpectralState fd = lie_bracket_fd(F, constant_map(trig_mode(grid.n, 2, -1, m, Slot::temperature)), U, 1e-4);
      CHECK(l2(fd - Y) / l2(Y) < 1e-10);
    }
  }
}

TEST_CASE("Z at rest keeps only the linear terms") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  p.nu1 = 0.3;
  p.nu2 = 0.2;
  p.g = 1.5;
  const int j1 = 2, j2 = 1, m = 1;
  const double jj = 5.0;
  const SpectralState Z = Z_field(j1, j2, m, SpectralState(grid.n), p, grid);
  SpectralState expect = (p.nu2 * p.nu2 * jj * jj) * trig_mode(grid.n, j1, j2, m, Slot::temperature);
  expect.axpy(-(p.nu1 + p.nu2) * p.g * j1 * jj, trig_mode(grid.n, j1, j2, 0, Slot::vorticity));
  CHECK(bqtest::max_coeff_diff(Z, expect) < 1e-13);
}

TEST_CASE("Z matches the nested difference bracket at first order") {
  const GridSpec grid = GridSpec::make(32);
  SetupRng rng(5, 0);
  PhysicalParams p;
  const auto F = drift_map(p, grid);
  const auto U = bqtest::random_state(grid.n, 4, rng);
  for (int m = 0; m < 2; ++m) {
    const SpectralState Z = Z_field(1, 1, m, U, p, grid);
    auto nested = [&](double eps) {
      const FieldMap Y = [&, eps](const SpectralState& V) {
        return lie_bracket_fd(F, constant_map(trig_mode(grid.n, 1, 1, m, Slot::temperature)), V, eps);
      };
      return lie_bracket_fd(F, Y, U, eps, FdScheme::forward);
    };
    const double e1 = l2(nested(1e-3) - Z) / l2(Z);
    const double e2 = l2(nested(5e-4) - Z) / l2(Z);
    CHECK(std::log2(e1 / e2) > 0.9);
    CHECK(e2 < 1e-2);
  }
}

TEST_CASE("[Z, sigma] closed form and independence of U") {
  const GridSpec grid = GridSpec::make(32);
  SetupRng rng(6, 0);
  PhysicalParams p;
  CHECK(bqtest::max_coeff(Z_sigma_bracket(0, 1, 0, 0, 1, 1, p, grid)) == 0.0);
  for (int m = 0; m < 2; ++m)
    for (int mk = 0; mk < 2; ++mk) {
      const SpectralState closed = Z_sigma_bracket(2, 1, m, 1, 0, mk, p, grid);
      const FieldMap Z = [&](const SpectralState& V) { return Z_field(2, 1, m, V, p, grid); };
      const auto s = constant_map(trig_mode(grid.n, 1, 0, mk, Slot::temperature));
      for (int t = 0; t < 3; ++t) {
        const auto U = bqtest::random_state(grid.n, 4, rng);
        const SpectralState fd = lie_bracket_fd(Z, s, U, 1.0, FdScheme::forward);
        CHECK(bqtest::max_coeff_diff(fd, closed) < 1e-12);
      }
    }
}

TEST_CASE("[Z, sigma] for j = k = (1,0) is a two-mode product") {
  // g(-B(psi^1, sigma^0) + B(psi^1, sigma^0)) = 0 for equal indices
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  CHECK(bqtest::max_coeff(Z_sigma_bracket(1, 0, 0, 1, 0, 0, p, grid)) < 1e-16);
  // j = (1,1), m = 0, k = (1,0), m' = 0: velocity of sin(x1+x2) is (1/2, -1/2) cos(x1+x2),
  // velocity of sin x1 is (0, -cos x1)
  const SpectralState z = Z_sigma_bracket(1, 1, 0, 1, 0, 0, p, grid);
  const ScalarField c11 = trig_scalar(grid.n, 1, 1, 0), s11 = trig_scalar(grid.n, 1, 1, 1);
  const ScalarField c1 = trig_scalar(grid.n, 1, 0, 0), s1 = trig_scalar(grid.n, 1, 0, 1);
  // -g B(psi_(1,1)^1, sigma_(1,0)^0) = -g (1/2 cos(x1+x2)) (-sin x1)
  ScalarField expect = (0.5 * p.g) * multiply_exact(c11, s1);
  // + g B(psi_(1,0)^1, sigma_(1,1)^0) = g (-cos x1)(-sin(x1+x2))
  expect += p.g * multiply_exact(c1, s11);
  CHECK(bqtest::max_coeff_diff(z.theta, expect) < 1e-15);
  CHECK(z.omega.max_abs() == 0.0);
}

TEST_CASE("J corrector: rest value, affinity and projection") {
  const GridSpec grid = GridSpec::make(32);
  SetupRng rng(7, 0);
  PhysicalParams p;
  p.g = 2.0;
  const SpectralState J0 = J_jm_field(1, 0, 0, SpectralState(grid.n), 10.0, p, grid);
  CHECK(bqtest::max_coeff_diff(J0, (p.nu2 / p.g) * trig_mode(grid.n, 1, 0, 1, Slot::temperature)) < 1e-16);
  const auto U1 = bqtest::random_state(grid.n, 4, rng), U2 = bqtest::random_state(grid.n, 4, rng);
  for (auto j : {std::array<int, 2>{2, 1}, std::array<int, 2>{0, 2}})
    for (int m = 0; m < 2; ++m) {
      auto J = [&](const SpectralState& U) { return J_jm_field(j[0], j[1], m, U, 5.0, p, grid); };
      SpectralState r = J(U1 + U2) - J(U1) - J(U2) + J(SpectralState(grid.n));
      CHECK(bqtest::max_coeff(r) < 1e-12);
      const SpectralState v = J(U1);
      for (int k1 = -15; k1 <= 15; ++k1)
        for (int k2 = 0; k2 <= 15; ++k2)
          if (k1 * k1 + k2 * k2 > 25) {
            REQUIRE(v.omega.coeff(k1, k2) == cplx(0.0));
            REQUIRE(v.theta.coeff(k1, k2) == cplx(0.0));
          }
    }
  // the j1 = 0 branch lives in the temperature slot
  CHECK(J_jm_field(0, 1, 1, U1, 8.0, p, grid).omega.max_abs() == 0.0);
}

TEST_CASE("span field at rest and for j1 = 0") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  const SpanField f(SpectralState(grid.n), {0, 0, 0, 0}, p, grid.dealias_cut);
  const Vec2 x(0.4, 1.7);
  const SpanVector v = f.eval(1, 0, 0, x);
  CHECK((v.v - Vec2(0.0, -(p.nu1 + p.nu2) * p.g * std::cos(0.4))).norm() < 1e-15);
  CHECK(f.eval(0, 1, 0, x).v.norm() == 0.0);
  CHECK((span_from_definitions(2, 1, 1, SpectralState(grid.n), {0, 0, 0, 0}, p, grid, x) - f.eval(2, 1, 1, x).v).norm() <
        1e-13);
}

TEST_CASE("span field gradient matches differences") {
  const GridSpec grid = GridSpec::make(32);
  SetupRng rng(8, 0);
  PhysicalParams p;
  const SpanField f(bqtest::random_state(grid.n, 4, rng), {0.3, -0.2, 0.5, 0.1}, p, grid.dealias_cut);
  const Vec2 x(2.0, 0.7);
  const double h = 1e-5;
  for (int m = 0; m < 2; ++m) {
    const SpanVector a = f.eval(2, -1, m, x);
    for (int k = 0; k < 2; ++k) {
      Vec2 e = Vec2::Zero();
      e(k) = h;
      const Vec2 d = (f.eval(2, -1, m, x + e).v - f.eval(2, -1, m, x - e).v) / (2 * h);
      CHECK((d - a.dv.col(k)).norm() < 1e-6 * (1 + a.dv.norm()));
    }
  }
}

TEST_CASE("span field against the bracket assembled from definitions") {
  // The literal field and the definition-based assembly differ once u_T != 0:
  // the x-bracket gradient term enters with the opposite sign, and the Biot-Savart
  // image of the nonlinear vorticity terms is not local. Record the size.
  const GridSpec grid = GridSpec::make(32);
  SetupRng rng(9, 0);
  PhysicalParams p;
  const auto U = bqtest::random_state(grid.n, 3, rng, 0.5);
  const std::array<double, 4> W{0.1, 0.2, -0.1, 0.05};
  const SpanField f(U, W, p, grid.dealias_cut);
  const Vec2 x(1.3, 2.2);
  const Vec2 lit = f.eval(1, 0, 1, x).v;
  const Vec2 sgn = f.eval_bracket_sign(1, 0, 1, x).v;
  const Vec2 def = span_from_definitions(1, 0, 1, U, W, p, grid, x);
  MESSAGE("literal ", (lit - def).norm(), " sign-corrected ", (sgn - def).norm(), " scale ", def.norm());
  CHECK(std::isfinite((lit - def).norm()));
  CHECK((lit - sgn).norm() > 0.0);
}

TEST_CASE("span nondegeneracy at rest") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  const SpanField f(SpectralState(grid.n), {0, 0, 0, 0}, p, grid.dealias_cut);
  SpanState s;
  s.x = Vec2(0.3, 1.1);
  s.tau = Vec2(1.0, 0.0);
  CHECK(span_check(SpanKind::tangent, s, f, 2.0) > 0.0);
  s.y = Vec2(2.0, 2.5);
  CHECK(span_check(SpanKind::two_point, s, f, 3.0) > 0.0);
  CHECK(span_check(SpanKind::jacobian, s, f, 3.0) > 0.0);
  s.y = s.x;
  CHECK_THROWS_AS(span_check(SpanKind::two_point, s, f, 3.0), DomainError);
}
