#include "doctest.h"

#include "bq/errors.hpp"
#include "bq/rng.hpp"
#include "bq/spectral.hpp"
#include "support.hpp"

#include <cmath>
#include <numbers>

using namespace bq;
using bqtest::random_field;

namespace {
const double pi = std::numbers::pi;
}

TEST_CASE("grid validation") {
  CHECK(GridSpec::make(64).dealias_cut == 21);
  CHECK(GridSpec::make(32).dealias_cut == 10);
  CHECK_THROWS_AS(GridSpec::make(7), DomainError);
  CHECK_THROWS_AS(GridSpec::make(6), DomainError);
  CHECK_THROWS_AS(GridSpec::make(16, 9), DomainError);
}

TEST_CASE("philox known answers") {
  const auto z = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(z[0] == 0x6627e8d5u);
  CHECK(z[1] == 0xe169c58du);
  CHECK(z[2] == 0xbc57ac4cu);
  CHECK(z[3] == 0x9b00dbd8u);
  const auto f = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(f[0] == 0x408f276du);
  CHECK(f[1] == 0x41c83b0eu);
  CHECK(f[2] == 0xa20bc7c6u);
  CHECK(f[3] == 0x6d5451fdu);
}

TEST_CASE("counter rng normals have unit variance and do not depend on call order") {
  CounterRng rng(42, 3);
  double s = 0, s2 = 0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) {
    const auto z = rng.normals4(i);
    for (double v : z) {
      s += v;
      s2 += v * v;
    }
  }
  CHECK(std::abs(s / (4 * N)) < 0.02);
  CHECK(std::abs(s2 / (4 * N) - 1.0) < 0.03);
  CHECK(rng.normals4(17)[2] == CounterRng(42, 3).normals4(17)[2]);
  CHECK(rng.normals4(17)[2] != CounterRng(42, 4).normals4(17)[2]);
}

TEST_CASE("biot-savart on single modes") {
  const int n = 16;
  auto u = biot_savart(trig_scalar(n, 1, 0, 0));
  CHECK(u.u1.max_abs() == 0.0);
  CHECK((u.u2 - trig_scalar(n, 1, 0, 1)).max_abs() < 1e-15);

  u = biot_savart(ScalarField(n));
  CHECK(u.u1.max_abs() == 0.0);
  CHECK(u.u2.max_abs() == 0.0);

  u = biot_savart(trig_scalar(n, 1, 1, 1));
  CHECK((u.u1 - trig_scalar(n, 1, 1, 0, 0.5)).max_abs() < 1e-15);
  CHECK((u.u2 - trig_scalar(n, 1, 1, 0, -0.5)).max_abs() < 1e-15);

  ScalarField bad(n);
  bad.set(0, 0, 1.0);
  CHECK_THROWS_AS(biot_savart(bad), DomainError);
}

TEST_CASE("biot-savart is divergence free and inverts the curl") {
  SetupRng rng(1, 0);
  const auto w = random_field(32, 10, rng);
  const auto u = biot_savart(w);
  const auto div = partial(u.u1, 0) + partial(u.u2, 1);
  CHECK(div.max_abs() < 1e-15);
  CHECK((curl(u) - w).max_abs() < 1e-13);
}

TEST_CASE("trigonometric basis") {
  const int n = 16;
  auto s = trig_mode(n, 1, 0, 0, Slot::temperature);
  CHECK(s.omega.max_abs() == 0.0);
  CHECK(eval_physical(s.theta, Vec2(0.0, 1.3)) == doctest::Approx(1.0).epsilon(1e-15));
  auto p = trig_mode(n, 0, 1, 1, Slot::vorticity);
  CHECK(p.theta.max_abs() == 0.0);
  CHECK(eval_physical(p.omega, Vec2(0.4, pi / 2)) == doctest::Approx(1.0).epsilon(1e-15));
  auto q = trig_mode(n, 1, 1, 1, Slot::temperature);
  CHECK(eval_physical(q.theta, Vec2(pi / 2, 0.0)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(trig_mode(n, -1, 2, 0, Slot::temperature), DomainError);
  CHECK_THROWS_AS(trig_mode(n, 0, 0, 0, Slot::temperature), DomainError);
  CHECK_THROWS_AS(trig_mode(n, 8, 0, 0, Slot::temperature), DomainError);
  CHECK_THROWS_AS(trig_mode(n, 1, 0, 2, Slot::temperature), DomainError);
}

TEST_CASE("weighted norms") {
  PhysicalParams p;
  p.nu1 = p.nu2 = p.g = 1.0;
  const int n = 16;
  SpectralState U(trig_scalar(n, 1, 0, 0), ScalarField(n));
  CHECK(weighted_norm_sq(U, 0, p) == doctest::Approx(2 * pi * pi).epsilon(1e-14));
  CHECK(weighted_norm_sq(SpectralState(n), 0, p) == 0.0);
  SpectralState V(ScalarField(n), trig_scalar(n, 0, 1, 1));
  CHECK(weighted_norm_sq(V, 1, p) == doctest::Approx(4 * pi * pi).epsilon(1e-14));
}

TEST_CASE("parseval against physical quadrature") {
  PhysicalParams p;
  SetupRng rng(2, 0);
  const int n = 32;
  SpectralState U(random_field(n, 8, rng), random_field(n, 8, rng));
  std::vector<double> w(n * n), t(n * n);
  fft_for(n).to_physical(U.omega, w.data());
  fft_for(n).to_physical(U.theta, t.data());
  double qw = 0, qt = 0;
  for (int i = 0; i < n * n; ++i) {
    qw += w[i] * w[i];
    qt += t[i] * t[i];
  }
  const double cell = (2 * pi / n) * (2 * pi / n);
  const double quad = p.varkappa() * qw * cell + qt * cell;
  CHECK(std::abs(weighted_norm_sq(U, 0, p) - quad) / quad < 1e-10);
}

TEST_CASE("point evaluation matches dense synthesis") {
  SetupRng rng(3, 0);
  ScalarField f(16), dense(512);
  for (int m = 0; m < 8; ++m) {
    int k1 = static_cast<int>(rng.uniform(-5.999, 5.999));
    int k2 = static_cast<int>(rng.uniform(0.0, 5.999));
    if (!in_upper_half(k1, k2)) k2 = 1;
    const double re = rng.normal();
    const cplx c(re, rng.normal());
    f.set(k1, k2, c);
    dense.set(k1, k2, c);
  }
  std::vector<double> phys(512 * 512);
  fft_for(512).to_physical(dense, phys.data());
  for (int trial = 0; trial < 20; ++trial) {
    const int i1 = static_cast<int>(rng.uniform(0, 511.99)), i2 = static_cast<int>(rng.uniform(0, 511.99));
    const Vec2 x(2 * pi * i1 / 512, 2 * pi * i2 / 512);
    CHECK(std::abs(eval_physical(f, x) - phys[i1 * 512 + i2]) < 1e-12);
  }
  CHECK(eval_physical(trig_scalar(16, 1, 1, 1), Vec2(pi / 4, pi / 4)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dealiasing") {
  auto a = trig_scalar(32, 1, 0, 0);
  CHECK((dealias(a, 10) - a).max_abs() == 0.0);
  CHECK(dealias(trig_scalar(32, 12, 0, 0), 10).max_abs() == 0.0);

  const auto c10 = trig_scalar(32, 10, 0, 0);
  const auto exact = dealias(multiply_exact(c10, c10), 10);
  const auto pseudo = multiply(c10, c10, GridSpec::make(32));
  CHECK(std::abs(pseudo.coeff(12, 0)) < 1e-16);
  CHECK((pseudo - exact).max_abs() < 1e-15);
  // without truncation the (20,0) content folds onto (12,0)
  std::vector<double> ph(32 * 32);
  fft_for(32).to_physical(c10, ph.data());
  for (double& v : ph) v *= v;
  ScalarField raw(32);
  fft_for(32).to_spectral(ph.data(), raw);
  CHECK(std::abs(raw.coeff(12, 0)) > 0.1);
}

TEST_CASE("pseudo-spectral products agree with exact convolution and stay Hermitian") {
  SetupRng rng(4, 0);
  const GridSpec grid = GridSpec::make(32);
  const auto a = random_field(32, 6, rng), b = random_field(32, 6, rng);
  const auto p = multiply(a, b, grid);
  CHECK((p - dealias(multiply_exact(a, b), grid.dealias_cut)).max_abs() < 1e-14);
  CHECK(bqtest::hermitian_and_mean_zero(p));
  const auto u = biot_savart(a);
  const auto adv = advect(u, b, grid);
  CHECK(bqtest::hermitian_and_mean_zero(adv));
  const auto ref = multiply_exact(u.u1, partial(b, 0)) + multiply_exact(u.u2, partial(b, 1));
  CHECK((adv - dealias(ref, grid.dealias_cut)).max_abs() < 1e-14);
}

TEST_CASE("velocity jets agree with spectral derivatives") {
  SetupRng rng(5, 0);
  const auto w = random_field(32, 8, rng);
  const auto u = biot_savart(w);
  const PointVelocity pv(w);
  for (int trial = 0; trial < 5; ++trial) {
    Vec2 x;
    x(0) = rng.uniform(0, 2 * pi);
    x(1) = rng.uniform(0, 2 * pi);
    const auto J = pv.jet(x, 3);
    const ScalarField* comp[2] = {&u.u1, &u.u2};
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(J.u(i) - eval_physical(*comp[i], x)) < 1e-13);
      for (int j = 0; j < 2; ++j) {
        const auto dj = partial(*comp[i], j);
        CHECK(std::abs(J.du(i, j) - eval_physical(dj, x)) < 1e-12);
        for (int k = 0; k < 2; ++k) {
          const auto dkj = partial(dj, k);
          CHECK(std::abs(J.d2u[k](i, j) - eval_physical(dkj, x)) < 1e-11);
          for (int l = 0; l < 2; ++l)
            CHECK(std::abs(J.d3u[k][l](i, j) - eval_physical(partial(dkj, l), x)) < 1e-10);
        }
      }
    }
    CHECK(std::abs(J.du.trace()) < 1e-12);
  }
}

TEST_CASE("torus helpers") {
  CHECK((wrap_point(Vec2(-0.5, 7.0)) - Vec2(2 * pi - 0.5, 7.0 - 2 * pi)).norm() < 1e-14);
  CHECK((torus_delta(Vec2(0.1, 6.2), Vec2(6.2, 0.1)) - Vec2(0.1 - 6.2 + 2 * pi, 6.2 - 0.1 - 2 * pi)).norm() < 1e-14);
}
