#pragma once

#include "bq/dynamics.hpp"
#include "bq/spectral.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace bq {

// Particle position, tangent vector, projective direction and Jacobian.
// Convention: du(i,j) = d_j u_i, so tau' = du tau and A' = du A.
struct ExtendedState {
  Vec2 x = Vec2::Zero();
  Vec2 tau = Vec2(1.0, 0.0);
  Vec2 v = Vec2(1.0, 0.0);
  Mat2 A = Mat2::Identity();
};

// Stage positions and velocity jets of one RK4 particle step.
struct ParticleStep {
  std::array<Vec2, 4> xs;
  std::array<VelocityJet, 4> jets;
};

// One RK4 step of the extended ODEs. stage[s] is the velocity field used at
// RK stage s (times t, t+dt/2, t+dt/2, t+dt); pass the same field four times
// for a velocity frozen over the step. growth, if given, receives the RK4
// integral of v.du.v over the step.
ExtendedState step_extended(const ExtendedState& s, const std::array<const PointVelocity*, 4>& stage, double dt,
                            ParticleStep* record = nullptr, int jet_order = 1, double* growth = nullptr);
ExtendedState step_extended(const ExtendedState& s, const PointVelocity& vel, double dt,
                            ParticleStep* record = nullptr, int jet_order = 1, double* growth = nullptr);
ExtendedState step_extended(const ExtendedState& s, const SpectralState& U, double dt);

std::pair<Vec2, Vec2> two_point_step(const Vec2& x, const Vec2& y, const PointVelocity& vel, double dt);

// Benettin bookkeeping for the Jacobian: A = Q R with positive diagonal,
// accumulated log R_11, log R_22 and log det of each block before projection.
struct QrAccumulator {
  double log_r11 = 0.0;
  double log_r22 = 0.0;
  double raw_log_det = 0.0;
  double max_det_drift = 0.0;  // max |exp(raw_log_det) - 1| seen so far
  int reprojections = 0;
  // Factor A in place (A <- Q) after checking its determinant.
  void renormalize(Mat2& A, double det_tol = 1e-6);
  // log|A e_1| including the current block
  double log_first_column(const Mat2& A) const { return log_r11 + std::log(A.col(0).norm()); }
};

struct LyapunovConfig {
  GridSpec grid = GridSpec::make(64);
  PhysicalParams params;
  double dt = 2.5e-3;
  double burn_in = 50.0;
  double horizon = 400.0;
  int seeds = 16;
  std::uint64_t master_seed = 1;
  int qr_every = 20;
  double qr_norm_limit = 1e6;
  int sample_every = 400;
  double det_check_until = 100.0;
};

struct LyapunovSample {
  double t;
  double log_norm_growth;     // log|A_t e_1| / t
  double projective_average;  // (1/t) int v.du.v
};

struct LyapunovSeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double lambda_qr = 0.0;    // sum log R_11 / T
  double lambda_qr2 = 0.0;   // sum log R_22 / T
  double lambda_proj = 0.0;  // time average of v.du.v
  double lambda_sum = 0.0;   // raw log det / T
  double det_drift_until = 0.0;  // max |det A - 1| up to det_check_until
  int reprojections = 0;
  double max_speed = 0.0;
  std::vector<LyapunovSample> series;
};

enum class LyapunovMethod { jacobian_log_norm, projective_average };

struct LyapunovEstimate {
  LyapunovMethod method;
  double lambda_top = 0.0;
  double lambda_sum = 0.0;
  double ci_halfwidth = 0.0;
  int samples = 0;
};

struct LyapunovSummary {
  LyapunovEstimate qr;
  LyapunovEstimate proj;
  double lambda2 = 0.0;
  double joint_halfwidth = 0.0;
  double paired_mean = 0.0;
  double paired_halfwidth = 0.0;
  bool estimators_agree = false;
  bool ci_excludes_zero = false;
  bool ci_positive = false;
  double max_abs_sum = 0.0;
  double max_det_drift = 0.0;
  std::vector<LyapunovSeedResult> seeds;
};

void validate(const LyapunovConfig& c);
LyapunovSeedResult run_lyapunov_seed(const LyapunovConfig& c, std::uint64_t seed_index);
LyapunovSummary summarize(const std::vector<LyapunovSeedResult>& seeds);
LyapunovSummary lyapunov_top(const LyapunovConfig& c, int threads = 1);
double lyapunov_sum(const LyapunovSeedResult& r);

// Mean and Student-t 95% half-width of a sample.
std::pair<double, double> mean_ci95(const std::vector<double>& v);

}  // namespace bq
