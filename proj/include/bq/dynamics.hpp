#pragma once

#include "bq/rng.hpp"
#include "bq/spectral.hpp"

#include <array>
#include <functional>
#include <numbers>
#include <vector>

namespace bq {

struct NoiseIncrement {
  std::array<double, 4> dw{};
  double dt = 0.0;
};

// Forced temperature modes in the order of the noise amplitudes:
// cos x1, sin x1, cos x2, sin x2.
struct ForcedMode {
  int j1, j2, m;
};
inline constexpr std::array<ForcedMode, 4> kForcedModes{{{1, 0, 0}, {1, 0, 1}, {0, 1, 0}, {0, 1, 1}}};

NoiseIncrement draw_increment(const CounterRng& rng, std::uint64_t step, double dt);

SpectralState nonlinear_B(const SpectralState& U, const SpectralState& V, const GridSpec& grid);
// F(U) = -AU - B(U,U) + GU
SpectralState drift(const SpectralState& U, const PhysicalParams& p, const GridSpec& grid);
SpectralState linear_A(const SpectralState& U, const PhysicalParams& p);
SpectralState buoyancy_G(const SpectralState& U, const PhysicalParams& p);
SpectralState noise_map(const NoiseIncrement& inc, const PhysicalParams& p, int n);

// Grid values of a state needed by the transport terms.
struct PhysicalFields {
  std::vector<double> u1, u2, wx, wy, tx, ty;
  double umax = 0.0;
};

struct StepOptions {
  bool nonlinear = true;
  bool check_cfl = true;
};

// Exponential Euler for dU = (-AU + N(U)) dt + sigma dW with N(U) = -B(U,U) + GU:
// U' = e^{-L dt} U + phi1 N(U) + per-mode OU noise with the exact variance.
class Integrator {
 public:
  Integrator(GridSpec grid, PhysicalParams params, double dt, StepOptions opt = {});

  const GridSpec& grid() const { return grid_; }
  const PhysicalParams& params() const { return params_; }
  double dt() const { return dt_; }
  const StepOptions& options() const { return opt_; }
  double cfl_speed() const { return 0.5 * (2.0 * std::numbers::pi / grid_.n) / dt_; }

  PhysicalFields physical(const SpectralState& U) const;
  SpectralState explicit_term(const SpectralState& U, const PhysicalFields& ph) const;
  // DN(U) psi = -B(psi,U) - B(U,psi) + G psi
  SpectralState tangent_term(const PhysicalFields& base, const SpectralState& psi) const;

  SpectralState decay(const SpectralState& U) const;
  // (1 - e^{-lambda dt}) / lambda applied per mode
  SpectralState phi1(const SpectralState& N) const;
  // Exact-variance gain for forced mode i: sqrt((1 - e^{-2 lambda dt}) / (2 lambda dt)).
  double noise_gain(int i) const { return gain_[i]; }

  SpectralState step(const SpectralState& U, const NoiseIncrement& inc) const;
  // Deterministic step with temperature forcing h held constant over the step.
  SpectralState step_forced(const SpectralState& U, const ScalarField* h) const;

 private:
  void check_cfl(double umax) const;
  GridSpec grid_;
  PhysicalParams params_;
  double dt_;
  StepOptions opt_;
  std::vector<double> ew_, et_, pw_, pt_;
  std::array<double, 4> gain_{};
};

SpectralState step_sde(const SpectralState& U, double dt, const CounterRng& rng, std::uint64_t step,
                       const PhysicalParams& p, const GridSpec& grid);

// Controlled system with a temperature carrying a term linear in x1:
// theta = theta_p + x1 q, q periodic and independent of x1.
struct AugmentedState {
  SpectralState U;  // (omega, theta_p)
  ScalarField q;

  AugmentedState() = default;
  explicit AugmentedState(int n) : U(n), q(n) {}
  AugmentedState& axpy(double s, const AugmentedState& o);
};

struct ControlForcing {
  ScalarField hp;  // periodic part
  ScalarField hq;  // coefficient of x1
};
using ForcingFn = std::function<ControlForcing(double t)>;

enum class ControlScheme { exponential_euler, lawson_rk4 };

class ControlledIntegrator {
 public:
  ControlledIntegrator(GridSpec grid, PhysicalParams params, double dt, ControlScheme scheme);

  double dt() const { return dt_; }
  ControlScheme scheme() const { return scheme_; }
  // Explicit part of the augmented system (transport, buoyancy, forcing).
  AugmentedState explicit_term(const AugmentedState& s, const ControlForcing& h) const;
  // Advances from t to t + dt. If stages is given it receives the vorticity seen
  // by each of the four Runge-Kutta stages (all equal for exponential Euler).
  AugmentedState step(const AugmentedState& s, double t, const ForcingFn& h,
                      std::array<ScalarField, 4>* stages = nullptr) const;

 private:
  AugmentedState decay(const AugmentedState& s, int half_steps) const;
  AugmentedState phi1(const AugmentedState& s) const;
  Integrator base_;
  GridSpec grid_;
  PhysicalParams params_;
  double dt_;
  ControlScheme scheme_;
  std::vector<double> hw_, ht_;  // e^{-lambda dt/2}
};

SpectralState step_controlled(const SpectralState& U, double dt, const ForcingFn& h, double t,
                              const PhysicalParams& p, const GridSpec& grid);

struct Diagnostics {
  double t = 0.0;
  double h_norm_sq = 0.0;
  double h1_norm_sq = 0.0;
  double dissipation_budget = 0.0;
  double super_lyapunov_v = 0.0;
  double decay_ratio = 0.0;  // ||U_t||^2 e^{kappa t} / ||U_0||^2, 0 when U_0 = 0
};

struct EnergyOptions {
  double iota = 0.1;
  double delta = 0.1;
};

class EnergyMonitor {
 public:
  EnergyMonitor(PhysicalParams p, EnergyOptions opt = {}) : p_(p), opt_(opt) {}
  const Diagnostics& push(double t, const SpectralState& U);
  const std::vector<Diagnostics>& series() const { return series_; }

 private:
  PhysicalParams p_;
  EnergyOptions opt_;
  std::vector<Diagnostics> series_;
  double e0_ = 0.0;
};

std::vector<Diagnostics> energy_report(const std::vector<double>& times, const std::vector<SpectralState>& traj,
                                       const PhysicalParams& p, EnergyOptions opt = {});

}  // namespace bq
