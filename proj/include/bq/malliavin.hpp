#pragma once

#include "bq/linearization.hpp"

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace bq {

struct Direction {
  VariationState p;
  bool low_mode = false;  // belongs to the field block Pi_N
  std::string label;
};

// psi and sigma at j = (1,0), (0,1), m = 0,1 normalized in the weighted H^s norm,
// then unit x and tau directions: 12 orthonormal directions.
std::vector<Direction> default_directions(int n, const PhysicalParams& p, double s = 4.0);

// Pairings <p_a, J_{r,t} sigma_i> for the four forced modes at seed times
// r = s, s + every, ..., t (t always included), interpolated linearly to every step.
struct PairingTable {
  int s = 0, t = 0;
  std::vector<int> seeds;
  // values[i][k][a]: mode i, seed k, direction a
  std::vector<std::vector<Eigen::VectorXd>> values;
  // pairing of mode i at step index r (s <= r <= t)
  Eigen::VectorXd at(int mode, int r) const;
};

PairingTable compute_pairings(const BaseTrajectory& base, int s, int t, const std::vector<Direction>& dirs,
                              int seed_every, double norm_s = 4.0, int threads = 1);

struct GramMatrix {
  Eigen::MatrixXd M;
  double horizon = 0.0;
  int quad_steps = 0;
  double min_eig() const;
  bool symmetric() const { return (M - M.transpose()).cwiseAbs().maxCoeff() == 0.0; }
};

// sum_i alpha_i^2 int_s^t <p_a, J_{r,t} sigma_i> <p_b, J_{r,t} sigma_i> dr, trapezoid in r.
GramMatrix gram_from_pairings(const PairingTable& tab, const PhysicalParams& p, double dt);
GramMatrix malliavin_gram(const BaseTrajectory& base, int s, int t, const std::vector<Direction>& dirs,
                          int seed_every, double norm_s = 4.0, int threads = 1);

struct ConeProbe {
  double probe = 0.0;    // min of <p, M p> over sampled unit directions in the cone
  double min_eig = 0.0;  // minimum eigenvalue over the whole span
  int accepted = 0;
};

// Cone {|c| = 1, |c restricted to low_mode| >= alpha} in span coordinates.
ConeProbe cone_probe(const Eigen::MatrixXd& M, const std::vector<bool>& low_mode, double alpha, int trials,
                     SetupRng& rng);

// Tikhonov-regularized control on [0, T/2] for a base over [0, T], realized on the
// span of the direction set.
class RegularizedControl {
 public:
  RegularizedControl(const BaseTrajectory& base, std::vector<Direction> dirs, int seed_every, double norm_s = 4.0,
                     int threads = 1);

  struct Result {
    // control of each forced mode at every step of [0, T/2], zero afterwards
    std::vector<std::array<double, 4>> v;
    VariationState rho;         // J_{0,T} p - A_{0,T} v
    double rho_norm = 0.0;
    double identity_error = 0.0;  // relative gap to beta J_{T/2,T}(M + beta)^{-1} J_{0,T/2} p
    double control_norm = 0.0;    // L2 in time
  };
  Result solve(const VariationState& p, double beta) const;
  const GramMatrix& gram() const { return gram_; }

 private:
  const BaseTrajectory& base_;
  std::vector<Direction> dirs_;
  double norm_s_;
  int half_;
  PairingTable tab_;
  GramMatrix gram_;
  std::vector<VariationState> late_;  // J_{T/2,T} p_a
};

struct MalliavinConfig {
  GridSpec grid = GridSpec::make(64);
  PhysicalParams params;
  double dt = 2.5e-3;
  double burn_in = 10.0;
  double horizon = 1.0;
  int seed_every = 10;
  double norm_s = 4.0;
  double cone_alpha = 0.5;
  int cone_trials = 4000;
  int threads = 1;
  std::uint64_t master_seed = 1;
};

// Burned-in base trajectory over [0, horizon] for ensemble member seed.
BaseTrajectory malliavin_base(const MalliavinConfig& c, std::uint64_t seed);

}  // namespace bq
