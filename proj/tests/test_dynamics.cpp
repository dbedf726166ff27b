#include "doctest.h"

#include "bq/dynamics.hpp"
#include "bq/errors.hpp"
#include "support.hpp"

#include <cmath>
#include <numbers>

using namespace bq;
using bqtest::max_coeff_diff;
using bqtest::random_state;

namespace {
const double pi = std::numbers::pi;

PhysicalParams unit_params() {
  PhysicalParams p;
  p.nu1 = p.nu2 = p.g = 1.0;
  return p;
}
}  // namespace

TEST_CASE("transport term examples") {
  const GridSpec grid = GridSpec::make(16);
  SetupRng rng(10, 0);
  SpectralState V = random_state(16, 4, rng);
  SpectralState U(ScalarField(16), bqtest::random_field(16, 4, rng));
  CHECK(bqtest::max_coeff(nonlinear_B(U, V, grid)) == 0.0);

  SpectralState S(trig_scalar(16, 0, 1, 0, -1.0), ScalarField(16));
  const auto u = biot_savart(S.omega);
  CHECK((u.u1 - trig_scalar(16, 0, 1, 1)).max_abs() < 1e-15);
  CHECK(nonlinear_B(S, S, grid).omega.max_abs() < 1e-16);

  SpectralState A(trig_scalar(16, 1, 0, 0), ScalarField(16));
  SpectralState Bv(trig_scalar(16, 0, 1, 0), trig_scalar(16, 0, 1, 1));
  // sin x1 * d2 cos x2 = -sin x1 sin x2 ; sin x1 * d2 sin x2 = sin x1 cos x2
  const auto ref_w = trig_scalar(16, 1, 1, 0, 0.5) + trig_scalar(16, 1, -1, 0, -0.5);
  const auto ref_t = trig_scalar(16, 1, 1, 1, 0.5) + trig_scalar(16, 1, -1, 1, 0.5);
  const auto b = nonlinear_B(A, Bv, grid);
  CHECK((b.omega - ref_w).max_abs() < 1e-15);
  CHECK((b.theta - ref_t).max_abs() < 1e-15);
}

TEST_CASE("drift examples") {
  const GridSpec grid = GridSpec::make(16);
  const auto p = unit_params();
  CHECK(bqtest::max_coeff(drift(SpectralState(16), p, grid)) == 0.0);
  SpectralState U(ScalarField(16), trig_scalar(16, 1, 0, 0));
  const auto F = drift(U, p, grid);
  CHECK((F.omega - trig_scalar(16, 1, 0, 1, -1.0)).max_abs() < 1e-15);
  CHECK((F.theta - trig_scalar(16, 1, 0, 0, -1.0)).max_abs() < 1e-15);
}

TEST_CASE("drift is the derivative of the one-step map") {
  const GridSpec grid = GridSpec::make(32);
  PhysicalParams p;
  p.alpha = {0, 0, 0, 0};
  SetupRng rng(11, 0);
  const auto U = random_state(32, 6, rng, 0.5);
  const auto F = drift(U, p, grid);
  auto quotient = [&](double dt) {
    Integrator I(grid, p, dt);
    SpectralState d = I.step(U, NoiseIncrement{{0, 0, 0, 0}, dt});
    d -= U;
    return (1.0 / dt) * d;
  };
  const double dt = 1e-3;
  const auto d1 = quotient(dt), d2 = quotient(dt / 2);
  const auto rich = 2.0 * d2 - d1;
  const double scale = bqtest::max_coeff(F);
  CHECK(max_coeff_diff(d1, F) / scale < 1e-2);
  CHECK(max_coeff_diff(rich, F) / scale < 1e-5);
  CHECK(max_coeff_diff(rich, F) < 0.05 * max_coeff_diff(d1, F));
}

TEST_CASE("noise map examples") {
  PhysicalParams p;
  p.alpha = {2.0, 1.0, 1.0, 0.5};
  auto S = noise_map(NoiseIncrement{{1, 0, 0, 0}, 1.0}, p, 16);
  CHECK(S.omega.max_abs() == 0.0);
  CHECK((S.theta - trig_scalar(16, 1, 0, 0, 2.0)).max_abs() == 0.0);
  CHECK(bqtest::max_coeff(noise_map(NoiseIncrement{{0, 0, 0, 0}, 1.0}, p, 16)) == 0.0);
  S = noise_map(NoiseIncrement{{0, 0, 0, 1}, 1.0}, p, 16);
  CHECK((S.theta - trig_scalar(16, 0, 1, 1, 0.5)).max_abs() == 0.0);
}

TEST_CASE("single step examples") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  p.alpha = {0, 0, 0, 0};
  const double dt = 1e-3;
  Integrator I(grid, p, dt);
  SpectralState U(ScalarField(16), trig_scalar(16, 1, 0, 0));
  const auto V = I.step(U, NoiseIncrement{{0.3, 0.1, -0.2, 0.4}, dt});
  CHECK((V.theta - trig_scalar(16, 1, 0, 0, std::exp(-p.nu2 * dt))).max_abs() < 1e-16);
  CHECK((V.omega - trig_scalar(16, 1, 0, 1, -p.g * dt)).max_abs() < p.nu1 * dt * dt);

  PhysicalParams q;
  Integrator J(grid, q, dt);
  const auto W = J.step(SpectralState(16), draw_increment(CounterRng(1, 0), 0, dt));
  CHECK(W.omega.max_abs() == 0.0);
  CHECK(W.theta.support_radius() == 1);
  CHECK(W.theta.coeff(1, 1) == 0.0);
  CHECK(W.theta.coeff(1, -1) == 0.0);
  CHECK(W.theta.coeff(1, 0) != 0.0);
  CHECK(W.theta.coeff(0, 1) != 0.0);
}

TEST_CASE("step_sde is deterministic in seed and step") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  SetupRng rng(12, 0);
  const auto U = random_state(16, 5, rng, 0.3);
  const auto a = step_sde(U, 2.5e-3, CounterRng(7, 2), 15, p, grid);
  const auto b = step_sde(U, 2.5e-3, CounterRng(7, 2), 15, p, grid);
  const auto c = step_sde(U, 2.5e-3, CounterRng(7, 2), 16, p, grid);
  CHECK(max_coeff_diff(a, b) == 0.0);
  CHECK(max_coeff_diff(a, c) > 0.0);
}

TEST_CASE("unforced energy decays monotonically at the dissipative rate") {
  const GridSpec grid = GridSpec::make(32);
  PhysicalParams p;
  p.alpha = {0, 0, 0, 0};
  SetupRng rng(13, 0);
  auto U = random_state(32, 6, rng, 1.0);
  const double dt = 2.5e-3;
  Integrator I(grid, p, dt);
  EnergyMonitor mon(p);
  mon.push(0.0, U);
  double prev = weighted_norm_sq(U, 0, p);
  for (int s = 1; s <= 400; ++s) {
    U = I.step(U, NoiseIncrement{{0, 0, 0, 0}, dt});
    const double e = weighted_norm_sq(U, 0, p);
    CHECK(e <= prev * (1 + 1e-12));
    prev = e;
    const auto& d = mon.push(s * dt, U);
    CHECK(d.decay_ratio <= 1.0 + 1e-6);
    CHECK(U.omega.coeff(0, 0) == 0.0);
    CHECK(U.theta.coeff(0, 0) == 0.0);
  }
  CHECK(mon.series().back().dissipation_budget > 0.0);
}

TEST_CASE("energy report of the zero trajectory") {
  PhysicalParams p;
  const auto r = energy_report({0.0, 1.0}, {SpectralState(16), SpectralState(16)}, p);
  for (const auto& d : r) {
    CHECK(d.h_norm_sq == 0.0);
    CHECK(d.h1_norm_sq == 0.0);
    CHECK(d.dissipation_budget == 0.0);
    CHECK(d.super_lyapunov_v == 0.0);
  }
}

TEST_CASE("forced stationary dissipation is bounded by the energy input") {
  const GridSpec grid = GridSpec::make(32);
  PhysicalParams p;
  const double dt = 2.5e-3;
  Integrator I(grid, p, dt);
  CounterRng rng(21, 0);
  SpectralState U(32);
  EnergyMonitor mon(p);
  const int steps = 8000;
  mon.push(0.0, U);
  for (int s = 0; s < steps; ++s) {
    U = I.step(U, draw_increment(rng, s, dt));
    mon.push((s + 1) * dt, U);
  }
  const double T = steps * dt;
  double input = 0.0;
  for (double a : p.alpha) input += a * a;
  input *= 2 * pi * pi;
  const double e_end = mon.series().back().h_norm_sq;
  const double avg_h1 = mon.series().back().dissipation_budget / T;
  const double bound = (2.0 / p.kappa()) * (input + (0.0 - e_end) / T);
  MESSAGE("time-averaged H1 norm " << avg_h1 << " bound " << bound);
  CHECK(avg_h1 > 0.0);
  CHECK(avg_h1 <= bound);
}

TEST_CASE("temperature variance matches the OU law when transport is off") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  const double dt = 1e-2, T = 3.0;
  const int steps = static_cast<int>(T / dt + 0.5), seeds = 64;
  Integrator I(grid, p, dt, StepOptions{false, true});
  std::vector<double> samples;
  for (int s = 0; s < seeds; ++s) {
    CounterRng rng(99, s);
    SpectralState U(16);
    for (int k = 0; k < steps; ++k) U = I.step(U, draw_increment(rng, k, dt));
    samples.push_back(sobolev_norm_sq(U.theta, 0));
  }
  double mean = 0, var = 0;
  for (double v : samples) mean += v / seeds;
  for (double v : samples) var += (v - mean) * (v - mean) / (seeds - 1);
  double expected = 0.0;
  for (double a : p.alpha) expected += a * a * (-std::expm1(-2 * p.nu2 * T)) / (2 * p.nu2);
  expected *= 2 * pi * pi;
  CHECK(std::abs(mean - expected) < 3.0 * std::sqrt(var / seeds));
}

TEST_CASE("step size guard and divergence") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  Integrator I(grid, p, 0.5);
  SpectralState U(trig_scalar(16, 1, 0, 0, 5.0), ScalarField(16));
  CHECK_THROWS_AS(I.step(U, NoiseIncrement{{0, 0, 0, 0}, 0.5}), StepSizeError);
  Integrator J(grid, p, 1e-3);
  SpectralState bad(16);
  bad.theta.set(2, 1, std::nan(""));
  CHECK_THROWS_AS(J.step(bad, NoiseIncrement{{0, 0, 0, 0}, 1e-3}), DivergenceError);
}

TEST_CASE("controlled step with zero forcing keeps the rest state") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  const ForcingFn none = [](double) { return ControlForcing{}; };
  SpectralState U(16);
  for (int k = 0; k < 10; ++k) U = step_controlled(U, 1e-2, none, k * 1e-2, p, grid);
  CHECK(bqtest::max_coeff(U) == 0.0);
}

TEST_CASE("controlled stepping with a realized noise path tracks the stochastic step") {
  const GridSpec grid = GridSpec::make(16);
  PhysicalParams p;
  p.alpha = {0.5, 0.5, 0.5, 0.5};
  SetupRng init(31, 0);
  const auto U0 = random_state(16, 4, init, 0.3);
  const double T = 0.5;
  const int fine = 512;
  CounterRng rng(5, 1);
  std::vector<std::array<double, 4>> dW(fine);
  for (int k = 0; k < fine; ++k) dW[k] = draw_increment(rng, k, T / fine).dw;
  auto gap = [&](int steps) {
    const double dt = T / steps;
    const int agg = fine / steps;
    Integrator I(grid, p, dt);
    ControlledIntegrator C(grid, p, dt, ControlScheme::exponential_euler);
    SpectralState S = U0;
    AugmentedState A(16);
    A.U = U0;
    for (int k = 0; k < steps; ++k) {
      NoiseIncrement inc{{0, 0, 0, 0}, dt};
      for (int j = 0; j < agg; ++j)
        for (int i = 0; i < 4; ++i) inc.dw[i] += dW[k * agg + j][i];
      S = I.step(S, inc);
      NoiseIncrement rate = inc;
      for (int i = 0; i < 4; ++i) rate.dw[i] /= dt;
      const ScalarField h = noise_map(rate, p, 16).theta;
      A = C.step(A, k * dt, [&](double) { return ControlForcing{h, ScalarField()}; });
    }
    return std::sqrt(weighted_norm_sq(S - A.U, 0, p));
  };
  const double e1 = gap(32), e2 = gap(64), e3 = gap(128);
  MESSAGE("gaps " << e1 << " " << e2 << " " << e3);
  CHECK(std::log2(e1 / e2) > 0.8);
  CHECK(std::log2(e2 / e3) > 0.8);
}
