#include "bq/malliavin.hpp"

#include "bq/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace bq {

namespace {

// Runs f(i) for i in [0, count) on up to `threads` workers; each i writes its own slot.
template <class F>
void parallel_for(int count, int threads, F&& f) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count && !failed; i = next++) {
        try {
          f(i);
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

VariationState forced_direction(int n, int i, const PhysicalParams& p) {
  VariationState v(n);
  const auto& m = kForcedModes[i];
  v.psi.theta = trig_scalar(n, m.j1, m.j2, m.m, p.alpha[i]);
  return v;
}

Eigen::VectorXd pair_all(const std::vector<Direction>& dirs, const VariationState& v, const PhysicalParams& p,
                         double s) {
  Eigen::VectorXd out(dirs.size());
  for (std::size_t a = 0; a < dirs.size(); ++a) out(a) = variation_inner(dirs[a].p, v, p, s);
  return out;
}

}  // namespace

std::vector<Direction> default_directions(int n, const PhysicalParams& p, double s) {
  std::vector<Direction> out;
  const std::array<std::array<int, 2>, 2> js{{{1, 0}, {0, 1}}};
  for (int slot = 0; slot < 2; ++slot)
    for (const auto& j : js)
      for (int m = 0; m < 2; ++m) {
        Direction d;
        d.p = VariationState(n);
        (slot == 0 ? d.p.psi.omega : d.p.psi.theta) = trig_scalar(n, j[0], j[1], m);
        d.p.psi *= 1.0 / std::sqrt(weighted_norm_sq(d.p.psi, s, p));
        d.low_mode = true;
        d.label = std::string(slot == 0 ? "omega" : "theta") + "_" + std::to_string(j[0]) + std::to_string(j[1]) +
                  (m ? "s" : "c");
        out.push_back(std::move(d));
      }
  for (int b = 0; b < 4; ++b) {
    Direction d;
    d.p = VariationState(n);
    (b < 2 ? d.p.y : d.p.zeta)(b % 2) = 1.0;
    d.label = std::string(b < 2 ? "x" : "tau") + std::to_string(b % 2 + 1);
    out.push_back(std::move(d));
  }
  return out;
}

Eigen::VectorXd PairingTable::at(int mode, int r) const {
  if (r < s || r > t) throw DomainError("pairing time outside the table");
  const auto& vals = values[mode];
  std::size_t k = 0;
  while (k + 1 < seeds.size() && seeds[k + 1] <= r) ++k;
  if (seeds[k] == r || k + 1 == seeds.size()) return vals[k];
  const double w = double(r - seeds[k]) / (seeds[k + 1] - seeds[k]);
  return (1.0 - w) * vals[k] + w * vals[k + 1];
}

PairingTable compute_pairings(const BaseTrajectory& base, int s, int t, const std::vector<Direction>& dirs,
                              int seed_every, double norm_s, int threads) {
  if (s < 0 || t > base.steps() || s >= t) throw DomainError("pairing window outside the base trajectory");
  if (seed_every < 1) throw ConfigError("seed spacing must be positive");
  PairingTable tab;
  tab.s = s;
  tab.t = t;
  for (int r = s; r < t; r += seed_every) tab.seeds.push_back(r);
  tab.seeds.push_back(t);
  const int ns = static_cast<int>(tab.seeds.size());
  const PhysicalParams& p = base.integrator().params();
  const int n = base.U(0).n();
  tab.values.assign(4, std::vector<Eigen::VectorXd>(ns));
  parallel_for(4 * ns, threads, [&](int job) {
    const int i = job / ns, k = job % ns;
    const VariationState v = jacobian_action(forced_direction(n, i, p), tab.seeds[k], t, base);
    tab.values[i][k] = pair_all(dirs, v, p, norm_s);
  });
  return tab;
}

double GramMatrix::min_eig() const {
  if (M.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

GramMatrix gram_from_pairings(const PairingTable& tab, const PhysicalParams& p, double dt) {
  const int dim = static_cast<int>(tab.values[0][0].size());
  GramMatrix g;
  g.M = Eigen::MatrixXd::Zero(dim, dim);
  g.horizon = (tab.t - tab.s) * dt;
  g.quad_steps = tab.t - tab.s;
  for (int i = 0; i < 4; ++i) {
    if (p.alpha[i] == 0.0) continue;
    for (int r = tab.s; r <= tab.t; ++r) {
      const double w = (r == tab.s || r == tab.t) ? 0.5 * dt : dt;
      const Eigen::VectorXd v = tab.at(i, r);
      g.M.noalias() += w * v * v.transpose();
    }
  }
  g.M = 0.5 * (g.M + g.M.transpose()).eval();
  return g;
}

GramMatrix malliavin_gram(const BaseTrajectory& base, int s, int t, const std::vector<Direction>& dirs,
                          int seed_every, double norm_s, int threads) {
  return gram_from_pairings(compute_pairings(base, s, t, dirs, seed_every, norm_s, threads),
                            base.integrator().params(), base.dt());
}

ConeProbe cone_probe(const Eigen::MatrixXd& M, const std::vector<bool>& low_mode, double alpha, int trials,
                     SetupRng& rng) {
  const int dim = static_cast<int>(M.rows());
  if (static_cast<int>(low_mode.size()) != dim) throw DomainError("cone mask size mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("cone weight must lie in [0, 1]");
  const int nlow = static_cast<int>(std::count(low_mode.begin(), low_mode.end(), true));
  if (nlow == 0 && alpha > 0.0) throw DomainError("cone has no low-mode coordinates");
  ConeProbe out;
  out.min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M, Eigen::EigenvaluesOnly).eigenvalues()(0);
  out.probe = std::numeric_limits<double>::infinity();
  for (int tr = 0; tr < trials; ++tr) {
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(dim), hi = Eigen::VectorXd::Zero(dim);
    for (int a = 0; a < dim; ++a) (low_mode[a] ? lo : hi)(a) = rng.normal();
    // low-mode share uniform in [alpha^2, 1]
    const double share = nlow == dim ? 1.0 : alpha * alpha + (1.0 - alpha * alpha) * rng.uniform();
    if (lo.norm() == 0.0) continue;
    Eigen::VectorXd c = std::sqrt(share) * lo / lo.norm();
    if (hi.norm() > 0.0) c += std::sqrt(1.0 - share) * hi / hi.norm();
    out.probe = std::min(out.probe, double(c.transpose() * M * c));
    ++out.accepted;
  }
  return out;
}

RegularizedControl::RegularizedControl(const BaseTrajectory& base, std::vector<Direction> dirs, int seed_every,
                                       double norm_s, int threads)
    : base_(base), dirs_(std::move(dirs)), norm_s_(norm_s), half_(base.steps() / 2) {
  if (half_ < 1) throw DomainError("control window too short");
  tab_ = compute_pairings(base, 0, half_, dirs_, seed_every, norm_s, threads);
  gram_ = gram_from_pairings(tab_, base.integrator().params(), base.dt());
  late_.resize(dirs_.size());
  parallel_for(static_cast<int>(dirs_.size()), threads,
               [&](int a) { late_[a] = jacobian_action(dirs_[a].p, half_, base.steps(), base); });
}

RegularizedControl::Result RegularizedControl::solve(const VariationState& p, double beta) const {
  if (!(beta > 0.0)) throw ConfigError("regularization must be positive");
  const PhysicalParams& par = base_.integrator().params();
  const double dt = base_.dt();
  const int dim = static_cast<int>(dirs_.size());
  const VariationState mid = jacobian_action(p, 0, half_, base_);
  const VariationState full = jacobian_action(mid, half_, base_.steps(), base_);
  const Eigen::VectorXd q = pair_all(dirs_, mid, par, norm_s_);
  const Eigen::MatrixXd reg = gram_.M + beta * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::VectorXd lam = reg.llt().solve(q);

  Result res;
  res.v.assign(base_.steps() + 1, {0, 0, 0, 0});
  Eigen::VectorXd reach = Eigen::VectorXd::Zero(dim);  // span coordinates of A_{0,T/2} v
  double l2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (par.alpha[i] == 0.0) continue;
    for (int r = 0; r <= half_; ++r) {
      const Eigen::VectorXd P = tab_.at(i, r);
      const double v = P.dot(lam);
      res.v[r][i] = v;
      const double w = (r == 0 || r == half_) ? 0.5 * dt : dt;
      reach += w * v * P;
      l2 += w * v * v;
    }
  }
  res.control_norm = std::sqrt(l2);

  res.rho = full;
  VariationState formula = full;
  for (int a = 0; a < dim; ++a) {
    res.rho.axpy(-reach(a), late_[a]);
    formula.axpy(beta * lam(a) - q(a), late_[a]);
  }
  res.rho_norm = variation_norm(res.rho, par, norm_s_);
  VariationState gap = res.rho;
  gap.axpy(-1.0, formula);
  res.identity_error = variation_norm(gap, par, norm_s_) / std::max(variation_norm(formula, par, norm_s_), 1e-300);
  return res;
}

BaseTrajectory malliavin_base(const MalliavinConfig& c, std::uint64_t seed) {
  const Integrator integ(c.grid, c.params, c.dt);
  const CounterRng noise(c.master_seed, seed);
  SetupRng setup(c.master_seed, seed + (std::uint64_t(1) << 40));
  const int burn = static_cast<int>(std::llround(c.burn_in / c.dt));
  const int steps = static_cast<int>(std::llround(c.horizon / c.dt));
  if (steps < 2) throw ConfigError("malliavin horizon shorter than two steps");
  SpectralState U(c.grid.n);
  for (int k = 0; k < burn; ++k) U = integ.step(U, draw_increment(noise, k, c.dt));
  ExtendedState e;
  e.x(0) = setup.uniform(0.0, 2.0 * std::numbers::pi);
  e.x(1) = setup.uniform(0.0, 2.0 * std::numbers::pi);
  const double ang = setup.uniform(0.0, 2.0 * std::numbers::pi);
  e.tau = Vec2(std::cos(ang), std::sin(ang));
  return BaseTrajectory(integ, std::move(U), e, noise, burn, steps);
}

}  // namespace bq
