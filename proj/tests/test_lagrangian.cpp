#include "bq/errors.hpp"
#include "bq/lagrangian.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace bq;

namespace {

ScalarField shear_vorticity(int n) { return trig_scalar(n, 0, 1, 0, -1.0); }  // u = (sin x2, 0)

ScalarField cellular_vorticity(int n, double a, double b) {
  return trig_scalar(n, 1, 0, 0, 1.0, a) + trig_scalar(n, 0, 1, 0, 1.0, b);
}

ExtendedState run(ExtendedState e, const PointVelocity& pv, double dt, int steps) {
  for (int i = 0; i < steps; ++i) e = step_extended(e, pv, dt);
  return e;
}

}  // namespace

TEST_CASE("zero velocity leaves the extended state unchanged") {
  const PointVelocity pv(ScalarField(16));
  ExtendedState e;
  e.x = Vec2(1.0, 2.0);
  e.tau = Vec2(0.3, -0.2);
  e.v = Vec2(0.6, 0.8);
  const ExtendedState f = run(e, pv, 0.01, 50);
  CHECK((f.x - e.x).norm() == doctest::Approx(0.0));
  CHECK((f.tau - e.tau).norm() == 0.0);
  CHECK((f.A - Mat2::Identity()).norm() == 0.0);
  CHECK(std::abs(f.v.norm() - 1.0) < 1e-15);
}

TEST_CASE("steady shear at the origin gives the nilpotent Jacobian") {
  const int n = 16;
  const PointVelocity pv(shear_vorticity(n));
  const double t = 2.0;
  const ExtendedState f = run(ExtendedState{}, pv, 0.01, 200);
  Mat2 expect;
  expect << 1.0, t, 0.0, 1.0;
  CHECK((f.A - expect).norm() < 1e-12);
  CHECK(std::abs(f.A.determinant() - 1.0) < 1e-12);
  CHECK(f.x.norm() < 1e-14);
}

TEST_CASE("cellular flow rotates the direction at its cell center") {
  const int n = 16;
  const double a = 0.7, b = 2.1;
  const PointVelocity pv(cellular_vorticity(n, a, b));
  ExtendedState e;
  e.x = Vec2(a, b);
  const double t = 1.3;
  const ExtendedState f = run(e, pv, 0.01, 130);
  CHECK(std::abs(std::atan2(f.v(1), f.v(0)) - t) < 1e-9);
  CHECK((f.x - e.x).norm() < 1e-10);
  CHECK(std::abs(f.A.determinant() - 1.0) < 1e-9);
}

TEST_CASE("unit direction and determinant are preserved in a random field") {
  SetupRng rng(7, 0);
  const int n = 32;
  const PointVelocity pv(bqtest::random_field(n, 4, rng));
  ExtendedState e;
  e.x = Vec2(0.4, 5.0);
  e.v = Vec2(std::cos(0.3), std::sin(0.3));
  double total = 0.0;
  for (int i = 0; i < 400; ++i) {
    double g = 0.0;
    e = step_extended(e, pv, 0.005, nullptr, 1, &g);
    total += g;
    REQUIRE(std::abs(e.v.norm() - 1.0) < 1e-15);
  }
  CHECK(std::abs(e.A.determinant() - 1.0) < 1e-8);
  // projective growth matches log |A v0|
  const double direct = std::log((e.A * Vec2(std::cos(0.3), std::sin(0.3))).norm());
  CHECK(std::abs(total - direct) < 1e-6);
}

TEST_CASE("QR renormalization is a rotation times upper triangular") {
  Mat2 A;
  A << 2.0, 1.0, 0.5, 1.0;
  const Mat2 A0 = A;
  QrAccumulator qr;
  qr.renormalize(A, 1e300);
  CHECK(std::abs(A.determinant() - 1.0) < 1e-14);
  CHECK((A.transpose() * A - Mat2::Identity()).norm() < 1e-14);
  CHECK(std::abs(qr.log_r11 + qr.log_r22 - std::log(A0.determinant())) < 1e-14);
  CHECK(std::abs(qr.raw_log_det - std::log(A0.determinant())) < 1e-14);
  CHECK(qr.reprojections == 0);

  Mat2 B = A0;
  QrAccumulator q2;
  q2.renormalize(B);
  CHECK(q2.reprojections == 1);
  CHECK(std::abs(q2.log_r11 + q2.log_r22) < 1e-14);
}

TEST_CASE("two-point motion in a shear") {
  const int n = 16;
  const PointVelocity pv(shear_vorticity(n));
  Vec2 x(1.0, 0.3), y(1.0, 1.2);
  const double dt = 0.01;
  for (int i = 0; i < 100; ++i) std::tie(x, y) = two_point_step(x, y, pv, dt);
  const double sep = torus_delta(y, x)(0);
  CHECK(std::abs(sep - (std::sin(1.2) - std::sin(0.3))) < 1e-12);
  CHECK(std::abs(x(1) - 0.3) < 1e-14);
  CHECK_THROWS_AS(two_point_step(x, x, pv, dt), DomainError);
}

TEST_CASE("two particles in a random field stay apart") {
  SetupRng rng(11, 0);
  const int n = 32;
  const PointVelocity pv(bqtest::random_field(n, 5, rng, 2.0));
  Vec2 x(1.0, 1.0), y(1.5, 2.0);
  double dmin = 10.0;
  for (int i = 0; i < 2000; ++i) {
    std::tie(x, y) = two_point_step(x, y, pv, 0.005);
    dmin = std::min(dmin, torus_delta(x, y).norm());
  }
  CHECK(dmin > 1e-6);
}

TEST_CASE("Lyapunov estimators vanish without noise") {
  LyapunovConfig c;
  c.grid = GridSpec::make(16);
  c.params.alpha = {0.0, 0.0, 0.0, 0.0};
  c.dt = 0.01;
  c.burn_in = 1.0;
  c.horizon = 5.0;
  c.seeds = 2;
  c.sample_every = 100;
  const LyapunovSummary s = lyapunov_top(c, 2);
  REQUIRE(s.seeds.size() == 2);
  for (const auto& r : s.seeds) {
    REQUIRE(r.ok);
    CHECK(r.lambda_qr == 0.0);
    CHECK(r.lambda_proj == 0.0);
    CHECK(r.lambda_sum == 0.0);
    CHECK(r.series.size() == 4);
  }
}

TEST_CASE("Lyapunov configuration is validated") {
  LyapunovConfig c;
  c.horizon = 10.0;
  c.burn_in = 20.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("short stochastic run keeps det A at one and sums to zero") {
  LyapunovConfig c;
  c.grid = GridSpec::make(32);
  c.params.alpha = {0.25, 0.25, 0.25, 0.25};
  c.dt = 5e-3;
  c.burn_in = 5.0;
  c.horizon = 25.0;
  c.seeds = 2;
  c.det_check_until = 20.0;
  c.sample_every = 1000;
  const LyapunovSummary s = lyapunov_top(c, 1);
  for (const auto& r : s.seeds) {
    INFO(r.error);
    REQUIRE(r.ok);
    CHECK(r.det_drift_until < 1e-6);
    CHECK(std::abs(r.lambda_qr + r.lambda_qr2) < 1e-3);
    CHECK(std::abs(lyapunov_sum(r)) < 1e-4);
    CHECK(r.reprojections == 0);
  }
  const auto again = run_lyapunov_seed(c, 1);
  CHECK(again.lambda_qr == s.seeds[1].lambda_qr);
}

TEST_CASE("Student-t interval") {
  const auto [m, h] = mean_ci95({1.0, 2.0, 3.0});
  CHECK(m == doctest::Approx(2.0));
  CHECK(h == doctest::Approx(4.302653 / std::sqrt(3.0)).epsilon(1e-6));
}
