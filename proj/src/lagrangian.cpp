#include "bq/lagrangian.hpp"

#include "bq/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

namespace bq {

ExtendedState step_extended(const ExtendedState& s, const std::array<const PointVelocity*, 4>& stage, double dt,
                            ParticleStep* record, int jet_order, double* growth) {
  static constexpr double c[4] = {0.0, 0.5, 0.5, 1.0};
  static constexpr double w[4] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};
  Vec2 kx = Vec2::Zero(), kt = Vec2::Zero(), kv = Vec2::Zero();
  Mat2 kA = Mat2::Zero();
  double kl = 0.0;
  ExtendedState out = s;
  double dl = 0.0;
  for (int st = 0; st < 4; ++st) {
    const double h = c[st] * dt;
    const Vec2 x = s.x + h * kx;
    const Vec2 tau = s.tau + h * kt;
    const Vec2 v = s.v + h * kv;
    const Mat2 A = s.A + h * kA;
    const VelocityJet J = stage[st]->jet(wrap_point(x), std::max(jet_order, 1));
    if (!std::isfinite(J.du.sum()) || !std::isfinite(J.u.sum()))
      throw DivergenceError("non-finite velocity gradient at particle", 0, -1);
    if (record) {
      record->xs[st] = x;
      record->jets[st] = J;
    }
    kx = J.u;
    kt = J.du * tau;
    kA = J.du * A;
    kl = v.dot(J.du * v);
    kv = J.du * v - kl * v;
    out.x += w[st] * dt * kx;
    out.tau += w[st] * dt * kt;
    out.v += w[st] * dt * kv;
    out.A += w[st] * dt * kA;
    dl += w[st] * dt * kl;
  }
  out.x = wrap_point(out.x);
  out.v.normalize();
  if (growth) *growth = dl;
  return out;
}

ExtendedState step_extended(const ExtendedState& s, const PointVelocity& vel, double dt, ParticleStep* record,
                            int jet_order, double* growth) {
  return step_extended(s, {&vel, &vel, &vel, &vel}, dt, record, jet_order, growth);
}

ExtendedState step_extended(const ExtendedState& s, const SpectralState& U, double dt) {
  return step_extended(s, PointVelocity(U.omega), dt);
}

std::pair<Vec2, Vec2> two_point_step(const Vec2& x, const Vec2& y, const PointVelocity& vel, double dt) {
  if (torus_delta(x, y).norm() < 1e-12) throw DomainError("two-point process needs distinct points");
  auto rk4 = [&](const Vec2& p) {
    const Vec2 k1 = vel.jet(wrap_point(p), 0).u;
    const Vec2 k2 = vel.jet(wrap_point(p + 0.5 * dt * k1), 0).u;
    const Vec2 k3 = vel.jet(wrap_point(p + 0.5 * dt * k2), 0).u;
    const Vec2 k4 = vel.jet(wrap_point(p + dt * k3), 0).u;
    return wrap_point(p + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4));
  };
  return {rk4(x), rk4(y)};
}

void QrAccumulator::renormalize(Mat2& A, double det_tol) {
  const double d = A.determinant();
  if (!(d > 0.0) || !std::isfinite(d)) throw DivergenceError("Jacobian lost orientation", 0, -1);
  raw_log_det += std::log(d);
  max_det_drift = std::max(max_det_drift, std::abs(std::expm1(raw_log_det)));
  if (std::abs(d - 1.0) > det_tol) {
    A /= std::sqrt(d);
    ++reprojections;
  }
  const Vec2 a1 = A.col(0), a2 = A.col(1);
  const double r11 = a1.norm();
  const Vec2 q1 = a1 / r11;
  const Vec2 b = a2 - q1.dot(a2) * q1;
  const double r22 = b.norm();
  log_r11 += std::log(r11);
  log_r22 += std::log(r22);
  A.col(0) = q1;
  A.col(1) = b / r22;
}

void validate(const LyapunovConfig& c) {
  c.params.validate();
  if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
  if (c.horizon <= c.burn_in) throw ConfigError("horizon must exceed the burn-in time");
  if (c.seeds < 1) throw ConfigError("need at least one seed");
  if (c.qr_every < 1 || c.sample_every < 1) throw ConfigError("cadences must be positive");
}

LyapunovSeedResult run_lyapunov_seed(const LyapunovConfig& c, std::uint64_t seed_index) {
  validate(c);
  LyapunovSeedResult r;
  r.seed = seed_index;
  const Integrator I(c.grid, c.params, c.dt);
  const CounterRng rng(c.master_seed, seed_index);
  SetupRng setup(c.master_seed, seed_index + (std::uint64_t(1) << 40));
  const double two_pi = 2.0 * std::numbers::pi;
  ExtendedState e;
  e.x(0) = setup.uniform(0, two_pi);
  e.x(1) = setup.uniform(0, two_pi);
  const double ang = setup.uniform(0, two_pi);
  e.v = Vec2(std::cos(ang), std::sin(ang));
  SpectralState U(c.grid.n);
  const long nb = std::lround(c.burn_in / c.dt);
  const long nm = std::lround((c.horizon - c.burn_in) / c.dt);
  QrAccumulator qr;
  double ell = 0.0;
  long k = 0;
  try {
    for (; k < nb + nm; ++k) {
      const PointVelocity pv(U.omega, c.grid.dealias_cut);
      double dl = 0.0;
      e = step_extended(e, pv, c.dt, nullptr, 1, &dl);
      U = I.step(U, draw_increment(rng, static_cast<std::uint64_t>(k), c.dt));
      if (k < nb) {
        if ((k + 1) % c.qr_every == 0) {
          QrAccumulator scratch;
          scratch.renormalize(e.A, 1e300);
        }
        if (k + 1 == nb) e.A = Mat2::Identity();
        continue;
      }
      const long m = k - nb + 1;
      const double t = m * c.dt;
      ell += dl;
      if (t <= c.det_check_until + 0.5 * c.dt)
        r.det_drift_until = std::max(r.det_drift_until, std::abs(std::expm1(qr.raw_log_det + std::log(e.A.determinant()))));
      if (m % c.qr_every == 0 || e.A.norm() > c.qr_norm_limit) qr.renormalize(e.A);
      if (m % c.sample_every == 0)
        r.series.push_back({t, qr.log_first_column(e.A) / t, ell / t});
    }
    qr.renormalize(e.A);
    const double T = nm * c.dt;
    r.lambda_qr = qr.log_r11 / T;
    r.lambda_qr2 = qr.log_r22 / T;
    r.lambda_sum = qr.raw_log_det / T;
    r.lambda_proj = ell / T;
    r.reprojections = qr.reprojections;
    r.ok = true;
  } catch (const Error& err) {
    r.ok = false;
    r.error = std::string(err.what()) + " (seed " + std::to_string(seed_index) + ", master " +
              std::to_string(c.master_seed) + ", step " + std::to_string(k) + ")";
  }
  return r;
}

std::pair<double, double> mean_ci95(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity()};
  double mean = 0.0;
  for (double x : v) mean += x / n;
  if (n < 2) return {mean, std::numeric_limits<double>::infinity()};
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean) / (n - 1);
  const boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
  const double tq = boost::math::quantile(boost::math::complement(dist, 0.025));
  return {mean, tq * std::sqrt(var / n)};
}

LyapunovSummary summarize(const std::vector<LyapunovSeedResult>& seeds) {
  LyapunovSummary s;
  s.seeds = seeds;
  std::vector<double> a, b, d, l2;
  for (const auto& r : seeds) {
    if (!r.ok) continue;
    a.push_back(r.lambda_qr);
    b.push_back(r.lambda_proj);
    d.push_back(r.lambda_qr - r.lambda_proj);
    l2.push_back(r.lambda_qr2);
    s.max_abs_sum = std::max(s.max_abs_sum, std::abs(r.lambda_qr + r.lambda_qr2));
    s.max_det_drift = std::max(s.max_det_drift, r.det_drift_until);
  }
  const auto [ma, ha] = mean_ci95(a);
  const auto [mb, hb] = mean_ci95(b);
  const auto [md, hd] = mean_ci95(d);
  s.qr = {LyapunovMethod::jacobian_log_norm, ma, 0.0, ha, static_cast<int>(a.size())};
  s.proj = {LyapunovMethod::projective_average, mb, 0.0, hb, static_cast<int>(b.size())};
  s.lambda2 = mean_ci95(l2).first;
  s.qr.lambda_sum = s.qr.lambda_top + s.lambda2;
  s.proj.lambda_sum = s.qr.lambda_sum;
  s.joint_halfwidth = std::hypot(ha, hb);
  s.paired_mean = md;
  s.paired_halfwidth = hd;
  s.estimators_agree = std::abs(ma - mb) <= s.joint_halfwidth;
  const bool pos = ma - ha > 0.0 && mb - hb > 0.0;
  const bool neg = ma + ha < 0.0 && mb + hb < 0.0;
  s.ci_positive = pos;
  s.ci_excludes_zero = pos || neg;
  return s;
}

LyapunovSummary lyapunov_top(const LyapunovConfig& c, int threads) {
  validate(c);
  std::vector<LyapunovSeedResult> res(c.seeds);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < c.seeds; i = next++) res[i] = run_lyapunov_seed(c, static_cast<std::uint64_t>(i));
  };
  const int nt = std::max(1, std::min(threads, c.seeds));
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return summarize(res);
}

double lyapunov_sum(const LyapunovSeedResult& r) { return r.lambda_sum; }

}  // namespace bq
