#pragma once

#include "bq/dynamics.hpp"
#include "bq/lagrangian.hpp"

#include <vector>

namespace bq {

// A stored forward trajectory of the discrete extended map
//   U_{k+1} = step(U_k, inc_k),  e_{k+1} = RK4 step of e_k in the velocity of U_k.
// Grid fields and particle jets (order 3) are cached so that many variation
// solves can share it read-only.
class BaseTrajectory {
 public:
  BaseTrajectory(const Integrator& integ, SpectralState U0, ExtendedState e0, const CounterRng& rng,
                 std::uint64_t first_step, int steps);
  // Deterministic variant: explicit increments (empty = no noise).
  BaseTrajectory(const Integrator& integ, SpectralState U0, ExtendedState e0, std::vector<NoiseIncrement> incs,
                 int steps);

  const Integrator& integrator() const { return integ_; }
  int steps() const { return static_cast<int>(inc_.size()); }
  double dt() const { return integ_.dt(); }
  const SpectralState& U(int k) const { return U_[k]; }
  const ExtendedState& ext(int k) const { return ext_[k]; }
  const NoiseIncrement& increment(int k) const { return inc_[k]; }
  const PhysicalFields& fields(int k) const { return ph_[k]; }
  const ParticleStep& particle(int k) const { return rec_[k]; }

 private:
  void run(int steps);
  Integrator integ_;
  std::vector<SpectralState> U_;
  std::vector<ExtendedState> ext_;
  std::vector<NoiseIncrement> inc_;
  std::vector<PhysicalFields> ph_;
  std::vector<ParticleStep> rec_;
};

// Perturbation of (U, x, tau, A).
struct VariationState {
  SpectralState psi;
  Vec2 y = Vec2::Zero();
  Vec2 zeta = Vec2::Zero();
  Mat2 Bmat = Mat2::Zero();

  VariationState() = default;
  explicit VariationState(int n) : psi(n) {}
  VariationState& axpy(double s, const VariationState& o);
};

struct SecondVariationState {
  SpectralState phi;
  Vec2 z = Vec2::Zero();
  Vec2 xi = Vec2::Zero();
  Mat2 Cmat = Mat2::Zero();

  SecondVariationState() = default;
  explicit SecondVariationState(int n) : phi(n) {}
};

// <a,b> = weighted H^s product on the field block plus the Euclidean product on
// the particle, tangent and matrix blocks.
double variation_inner(const VariationState& a, const VariationState& b, const PhysicalParams& p, double s);
double variation_norm(const VariationState& a, const PhysicalParams& p, double s = 0.0);

// Derivative of one step k -> k+1 of the discrete extended map.
VariationState step_first_variation(const VariationState& var, const BaseTrajectory& base, int k);
// Second derivative along var (the first variation at step k); zero initial data.
SecondVariationState step_second_variation(const SecondVariationState& sec, const VariationState& var,
                                           const BaseTrajectory& base, int k);

// J_{s,t} p for step indices s <= t.
VariationState jacobian_action(const VariationState& p, int s, int t, const BaseTrajectory& base);

// Nonlinear flow from step s to t with the base's noise increments.
struct FlowPoint {
  SpectralState U;
  ExtendedState e;
};
FlowPoint flow(const FlowPoint& start, int s, int t, const BaseTrajectory& base);
// start + eps * p
FlowPoint perturb(const FlowPoint& start, const VariationState& p, double eps);
// (a - b) / scale as a variation
VariationState difference(const FlowPoint& a, const FlowPoint& b, double scale);

}  // namespace bq
