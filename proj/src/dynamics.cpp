#include "bq/dynamics.hpp"

#include "bq/errors.hpp"

#include <cmath>

namespace bq {

namespace {

std::size_t grid_points(int n) { return static_cast<std::size_t>(n) * n; }

ScalarField back_to_spectral(const std::vector<double>& v, const GridSpec& grid) {
  ScalarField f(grid.n);
  fft_for(grid.n).to_spectral(v.data(), f);
  return dealias(std::move(f), grid.dealias_cut);
}

std::vector<double> on_grid(const ScalarField& f) {
  std::vector<double> v(grid_points(f.n()));
  fft_for(f.n()).to_physical(f, v.data());
  return v;
}

}  // namespace

NoiseIncrement draw_increment(const CounterRng& rng, std::uint64_t step, double dt) {
  NoiseIncrement inc;
  inc.dt = dt;
  const auto z = rng.normals4(step);
  const double s = std::sqrt(dt);
  for (int i = 0; i < 4; ++i) inc.dw[i] = s * z[i];
  return inc;
}

SpectralState nonlinear_B(const SpectralState& U, const SpectralState& V, const GridSpec& grid) {
  const auto u = biot_savart(U.omega);
  return SpectralState(advect(u, V.omega, grid), advect(u, V.theta, grid));
}

SpectralState linear_A(const SpectralState& U, const PhysicalParams& p) {
  return SpectralState(-p.nu1 * laplacian(U.omega), -p.nu2 * laplacian(U.theta));
}

SpectralState buoyancy_G(const SpectralState& U, const PhysicalParams& p) {
  return SpectralState(p.g * partial(U.theta, 0), ScalarField(U.n()));
}

SpectralState drift(const SpectralState& U, const PhysicalParams& p, const GridSpec& grid) {
  SpectralState F = buoyancy_G(U, p);
  F -= linear_A(U, p);
  F -= nonlinear_B(U, U, grid);
  return F;
}

SpectralState noise_map(const NoiseIncrement& inc, const PhysicalParams& p, int n) {
  SpectralState S(n);
  for (int i = 0; i < 4; ++i) {
    const double a = p.alpha[i] * inc.dw[i];
    if (a == 0.0) continue;
    const auto& m = kForcedModes[i];
    S.theta += trig_scalar(n, m.j1, m.j2, m.m, a);
  }
  return S;
}

Integrator::Integrator(GridSpec grid, PhysicalParams params, double dt, StepOptions opt)
    : grid_(grid), params_(params), dt_(dt), opt_(opt) {
  params_.validate();
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  const int n = grid_.n, h = n / 2 + 1;
  const std::size_t sz = static_cast<std::size_t>(n) * h;
  ew_.assign(sz, 1.0);
  et_.assign(sz, 1.0);
  pw_.assign(sz, 0.0);
  pt_.assign(sz, 0.0);
  ScalarField probe(n);
  for (int i1 = 0; i1 < n; ++i1) {
    const double k1 = probe.k1_at(i1);
    for (int i2 = 0; i2 < h; ++i2) {
      const double kk = k1 * k1 + double(i2) * i2;
      if (kk == 0.0) continue;
      const std::size_t idx = probe.index(i1, i2);
      const double lw = params_.nu1 * kk, lt = params_.nu2 * kk;
      ew_[idx] = std::exp(-lw * dt);
      et_[idx] = std::exp(-lt * dt);
      pw_[idx] = -std::expm1(-lw * dt) / lw;
      pt_[idx] = -std::expm1(-lt * dt) / lt;
    }
  }
  for (int i = 0; i < 4; ++i) {
    const auto& m = kForcedModes[i];
    const double lam = params_.nu2 * (m.j1 * m.j1 + m.j2 * m.j2);
    gain_[i] = std::sqrt(-std::expm1(-2.0 * lam * dt) / (2.0 * lam * dt));
  }
}

PhysicalFields Integrator::physical(const SpectralState& U) const {
  PhysicalFields ph;
  const auto u = biot_savart(U.omega);
  ph.u1 = on_grid(u.u1);
  ph.u2 = on_grid(u.u2);
  ph.wx = on_grid(partial(U.omega, 0));
  ph.wy = on_grid(partial(U.omega, 1));
  ph.tx = on_grid(partial(U.theta, 0));
  ph.ty = on_grid(partial(U.theta, 1));
  double m2 = 0.0;
  for (std::size_t i = 0; i < ph.u1.size(); ++i) m2 = std::max(m2, ph.u1[i] * ph.u1[i] + ph.u2[i] * ph.u2[i]);
  ph.umax = std::sqrt(m2);
  return ph;
}

SpectralState Integrator::explicit_term(const SpectralState& U, const PhysicalFields& ph) const {
  SpectralState N(params_.g * partial(U.theta, 0), ScalarField(grid_.n));
  if (!opt_.nonlinear) return N;
  const std::size_t np = grid_points(grid_.n);
  std::vector<double> bw(np), bt(np);
  for (std::size_t i = 0; i < np; ++i) {
    bw[i] = ph.u1[i] * ph.wx[i] + ph.u2[i] * ph.wy[i];
    bt[i] = ph.u1[i] * ph.tx[i] + ph.u2[i] * ph.ty[i];
  }
  N.omega -= back_to_spectral(bw, grid_);
  N.theta -= back_to_spectral(bt, grid_);
  return N;
}

SpectralState Integrator::tangent_term(const PhysicalFields& base, const SpectralState& psi) const {
  SpectralState N(params_.g * partial(psi.theta, 0), ScalarField(grid_.n));
  if (!opt_.nonlinear) return N;
  const auto v = biot_savart(psi.omega);
  const auto v1 = on_grid(v.u1), v2 = on_grid(v.u2);
  const auto px = on_grid(partial(psi.omega, 0)), py = on_grid(partial(psi.omega, 1));
  const auto qx = on_grid(partial(psi.theta, 0)), qy = on_grid(partial(psi.theta, 1));
  const std::size_t np = grid_points(grid_.n);
  std::vector<double> bw(np), bt(np);
  for (std::size_t i = 0; i < np; ++i) {
    bw[i] = v1[i] * base.wx[i] + v2[i] * base.wy[i] + base.u1[i] * px[i] + base.u2[i] * py[i];
    bt[i] = v1[i] * base.tx[i] + v2[i] * base.ty[i] + base.u1[i] * qx[i] + base.u2[i] * qy[i];
  }
  N.omega -= back_to_spectral(bw, grid_);
  N.theta -= back_to_spectral(bt, grid_);
  return N;
}

SpectralState Integrator::decay(const SpectralState& U) const {
  SpectralState out = U;
  for (std::size_t i = 0; i < ew_.size(); ++i) {
    out.omega.data()[i] *= ew_[i];
    out.theta.data()[i] *= et_[i];
  }
  return out;
}

SpectralState Integrator::phi1(const SpectralState& N) const {
  SpectralState out = N;
  for (std::size_t i = 0; i < pw_.size(); ++i) {
    out.omega.data()[i] *= pw_[i];
    out.theta.data()[i] *= pt_[i];
  }
  return out;
}

void Integrator::check_cfl(double umax) const {
  if (opt_.check_cfl && umax > cfl_speed())
    throw StepSizeError("CFL violated: dt*max|u| = " + std::to_string(umax * dt_) + " exceeds " +
                        std::to_string(cfl_speed() * dt_));
}

SpectralState Integrator::step(const SpectralState& U, const NoiseIncrement& inc) const {
  const auto ph = physical(U);
  check_cfl(ph.umax);
  SpectralState next = decay(U);
  next += phi1(explicit_term(U, ph));
  NoiseIncrement scaled = inc;
  for (int i = 0; i < 4; ++i) scaled.dw[i] *= gain_[i];
  next += noise_map(scaled, params_, grid_.n);
  if (!next.finite()) throw DivergenceError("non-finite state after step", 0, -1);
  return next;
}

SpectralState Integrator::step_forced(const SpectralState& U, const ScalarField* h) const {
  const auto ph = physical(U);
  check_cfl(ph.umax);
  SpectralState N = explicit_term(U, ph);
  if (h) N.theta += *h;
  SpectralState next = decay(U);
  next += phi1(N);
  if (!next.finite()) throw DivergenceError("non-finite state after step", 0, -1);
  return next;
}

SpectralState step_sde(const SpectralState& U, double dt, const CounterRng& rng, std::uint64_t step,
                       const PhysicalParams& p, const GridSpec& grid) {
  return Integrator(grid, p, dt).step(U, draw_increment(rng, step, dt));
}

AugmentedState& AugmentedState::axpy(double s, const AugmentedState& o) {
  U.axpy(s, o.U);
  q.axpy(s, o.q);
  return *this;
}

ControlledIntegrator::ControlledIntegrator(GridSpec grid, PhysicalParams params, double dt, ControlScheme scheme)
    : base_(grid, params, dt), grid_(grid), params_(params), dt_(dt), scheme_(scheme) {
  const int n = grid.n, h = n / 2 + 1;
  hw_.assign(static_cast<std::size_t>(n) * h, 1.0);
  ht_ = hw_;
  ScalarField probe(n);
  for (int i1 = 0; i1 < n; ++i1) {
    const double k1 = probe.k1_at(i1);
    for (int i2 = 0; i2 < h; ++i2) {
      const double kk = k1 * k1 + double(i2) * i2;
      hw_[probe.index(i1, i2)] = std::exp(-params.nu1 * kk * dt / 2);
      ht_[probe.index(i1, i2)] = std::exp(-params.nu2 * kk * dt / 2);
    }
  }
}

AugmentedState ControlledIntegrator::explicit_term(const AugmentedState& s, const ControlForcing& h) const {
  const auto ph = base_.physical(s.U);
  AugmentedState N(grid_.n);
  N.U = base_.explicit_term(s.U, ph);
  if (s.q.max_abs() != 0.0) {
    const auto q = on_grid(s.q);
    const auto qx = on_grid(partial(s.q, 0)), qy = on_grid(partial(s.q, 1));
    const std::size_t np = grid_points(grid_.n);
    std::vector<double> adv(np), u1q(np);
    for (std::size_t i = 0; i < np; ++i) {
      adv[i] = ph.u1[i] * qx[i] + ph.u2[i] * qy[i];
      u1q[i] = ph.u1[i] * q[i];
    }
    N.U.omega.axpy(params_.g, s.q);
    N.U.theta -= back_to_spectral(u1q, grid_);
    N.U.theta.axpy(2.0 * params_.nu2, partial(s.q, 0));
    N.q -= back_to_spectral(adv, grid_);
  }
  if (h.hp.n() == grid_.n) N.U.theta += h.hp;
  if (h.hq.n() == grid_.n) N.q += h.hq;
  return N;
}

AugmentedState ControlledIntegrator::decay(const AugmentedState& s, int half_steps) const {
  AugmentedState out = s;
  if (half_steps == 2) {
    out.U = base_.decay(s.U);
    SpectralState qq(s.q, s.q);
    out.q = base_.decay(qq).theta;
    return out;
  }
  for (std::size_t i = 0; i < hw_.size(); ++i) {
    out.U.omega.data()[i] *= hw_[i];
    out.U.theta.data()[i] *= ht_[i];
    out.q.data()[i] *= ht_[i];
  }
  return out;
}

AugmentedState ControlledIntegrator::phi1(const AugmentedState& s) const {
  AugmentedState out = s;
  out.U = base_.phi1(s.U);
  SpectralState qq(s.q, s.q);
  out.q = base_.phi1(qq).theta;
  return out;
}

AugmentedState ControlledIntegrator::step(const AugmentedState& s, double t, const ForcingFn& h,
                                          std::array<ScalarField, 4>* stages) const {
  const double dt = dt_;
  if (scheme_ == ControlScheme::exponential_euler) {
    if (stages) stages->fill(s.U.omega);
    AugmentedState next = decay(s, 2);
    const auto ph = base_.physical(s.U);
    if (ph.umax > base_.cfl_speed()) throw StepSizeError("CFL violated in controlled step");
    next.axpy(1.0, phi1(explicit_term(s, h(t))));
    if (!next.U.finite() || !next.q.finite()) throw DivergenceError("non-finite controlled state", 0, -1);
    return next;
  }
  const auto ph = base_.physical(s.U);
  if (ph.umax > base_.cfl_speed()) throw StepSizeError("CFL violated in controlled step");
  const auto k1 = explicit_term(s, h(t));
  AugmentedState w2 = s;
  w2.axpy(dt / 2, k1);
  w2 = decay(w2, 1);
  const auto k2 = explicit_term(w2, h(t + dt / 2));
  AugmentedState w3 = decay(s, 1);
  w3.axpy(dt / 2, k2);
  const auto k3 = explicit_term(w3, h(t + dt / 2));
  AugmentedState w4 = decay(s, 2);
  w4.axpy(dt, decay(k3, 1));
  const auto k4 = explicit_term(w4, h(t + dt));
  if (stages) *stages = {s.U.omega, w2.U.omega, w3.U.omega, w4.U.omega};
  AugmentedState mid = k2;
  mid.axpy(1.0, k3);
  AugmentedState next = decay(s, 2);
  next.axpy(dt / 6, decay(k1, 2));
  next.axpy(dt / 3, decay(mid, 1));
  next.axpy(dt / 6, k4);
  if (!next.U.finite() || !next.q.finite()) throw DivergenceError("non-finite controlled state", 0, -1);
  return next;
}

SpectralState step_controlled(const SpectralState& U, double dt, const ForcingFn& h, double t,
                              const PhysicalParams& p, const GridSpec& grid) {
  ControlledIntegrator ci(grid, p, dt, ControlScheme::exponential_euler);
  AugmentedState s(grid.n);
  s.U = U;
  const ForcingFn periodic = [&](double tt) {
    ControlForcing f = h(tt);
    if (f.hq.n() == grid.n && f.hq.max_abs() != 0.0)
      throw DomainError("forcing with an x1-linear part needs the augmented stepper");
    return f;
  };
  return ci.step(s, t, periodic).U;
}

const Diagnostics& EnergyMonitor::push(double t, const SpectralState& U) {
  Diagnostics d;
  d.t = t;
  d.h_norm_sq = weighted_norm_sq(U, 0, p_);
  d.h1_norm_sq = weighted_norm_sq(U, 1, p_);
  const double h4 = weighted_norm_sq(U, 4, p_);
  d.super_lyapunov_v = opt_.iota * (d.h_norm_sq + opt_.delta * std::pow(h4, 1.0 / 6.0));
  if (series_.empty()) {
    e0_ = d.h_norm_sq;
  } else {
    const auto& prev = series_.back();
    d.dissipation_budget = prev.dissipation_budget + 0.5 * (t - prev.t) * (prev.h1_norm_sq + d.h1_norm_sq);
  }
  const double t0 = series_.empty() ? t : series_.front().t;
  d.decay_ratio = e0_ > 0.0 ? d.h_norm_sq * std::exp(p_.kappa() * (t - t0)) / e0_ : 0.0;
  series_.push_back(d);
  return series_.back();
}

std::vector<Diagnostics> energy_report(const std::vector<double>& times, const std::vector<SpectralState>& traj,
                                       const PhysicalParams& p, EnergyOptions opt) {
  if (times.size() != traj.size()) throw DomainError("times and states differ in length");
  EnergyMonitor mon(p, opt);
  for (std::size_t i = 0; i < traj.size(); ++i) mon.push(times[i], traj[i]);
  return mon.series();
}

}  // namespace bq
