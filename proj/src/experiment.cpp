#include "bq/experiment.hpp"

#include "bq/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#ifndef BQ_REVISION
#define BQ_REVISION "unknown"
#endif

namespace bq {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double l2(const SpectralState& U) { return std::sqrt(sobolev_norm_sq(U.omega, 0) + sobolev_norm_sq(U.theta, 0)); }

double max_coeff_diff(const SpectralState& a, const SpectralState& b) {
  return std::max((a.omega - b.omega).max_abs(), (a.theta - b.theta).max_abs());
}

double order(double e_coarse, double e_fine, double eps_coarse, double eps_fine) {
  return std::log(e_coarse / e_fine) / std::log(eps_coarse / eps_fine);
}

std::vector<std::array<int, 2>> wavevectors(int jmax) {
  std::vector<std::array<int, 2>> out;
  for (int j1 = -jmax; j1 <= jmax; ++j1)
    for (int j2 = -jmax; j2 <= jmax; ++j2)
      if (j1 * j1 + j2 * j2 <= jmax * jmax && in_upper_half(j1, j2)) out.push_back({j1, j2});
  return out;
}

VariationState random_variation(int n, int band, SetupRng& rng, double amp) {
  VariationState v(n);
  v.psi = random_truncated_state(n, band, rng, amp);
  v.y(0) = rng.normal();
  v.y(1) = rng.normal();
  v.zeta(0) = rng.normal();
  v.zeta(1) = rng.normal();
  v.Bmat << rng.normal(), rng.normal(), rng.normal(), rng.normal();
  return v;
}

double rel_gap(const VariationState& a, const VariationState& b, const PhysicalParams& p) {
  VariationState d = a;
  d.axpy(-1.0, b);
  return variation_norm(d, p) / std::max(variation_norm(b, p), 1e-300);
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

nlohmann::json finite_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

SpectralState random_truncated_state(int n, int band, SetupRng& rng, double amp) {
  auto field = [&] {
    ScalarField f(n);
    for (int k1 = -band; k1 <= band; ++k1)
      for (int k2 = -band; k2 <= band; ++k2) {
        if (!in_upper_half(k1, k2)) continue;
        const double s = amp / (1.0 + k1 * k1 + k2 * k2);
        const double re = s * rng.normal();
        f.set(k1, k2, cplx(re, s * rng.normal()));
      }
    return f;
  };
  ScalarField w = field();
  return SpectralState(std::move(w), field());
}

// ---------------------------------------------------------------- brackets

BracketReport bracket_check(const BracketOptions& o) {
  if (o.eps.size() < 2) throw ConfigError("bracket check needs at least two step sizes");
  const GridSpec grid = GridSpec::make(o.n);
  const PhysicalParams& p = o.params;
  const FieldMap F = drift_map(p, grid);
  SetupRng rng(o.seed, 0);
  std::vector<SpectralState> states;
  for (int s = 0; s < o.states; ++s) states.push_back(random_truncated_state(o.n, o.band, rng, o.amp));
  const std::size_t ne = o.eps.size();

  BracketReport r;
  r.y_min_order = r.z_min_order = std::numeric_limits<double>::infinity();
  for (const auto& j : wavevectors(o.jmax))
    for (int m = 0; m < 2; ++m) {
      BracketRow row{j[0], j[1], m, std::vector<double>(ne, 0.0), std::vector<double>(ne, 0.0),
                     std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
      const FieldMap sigma = constant_map(trig_mode(o.n, j[0], j[1], m, Slot::temperature));
      for (const auto& U : states) {
        const SpectralState Y = Y_field(j[0], j[1], m, U, p, grid);
        const SpectralState Z = Z_field(j[0], j[1], m, U, p, grid);
        std::vector<double> ey(ne), ez(ne);
        for (std::size_t i = 0; i < ne; ++i) {
          const double eps = o.eps[i];
          ey[i] = l2(lie_bracket_fd(F, sigma, U, eps) - Y) / l2(Y);
          const FieldMap Yfd = [&, eps](const SpectralState& V) { return lie_bracket_fd(F, sigma, V, eps); };
          ez[i] = l2(lie_bracket_fd(F, Yfd, U, eps, FdScheme::forward) - Z) / l2(Z);
          row.y_err[i] = std::max(row.y_err[i], ey[i]);
          row.z_err[i] = std::max(row.z_err[i], ez[i]);
          r.y_floor = std::max(r.y_floor, ey[i]);
        }
        // below the floor the quotient is exact and only roundoff remains: no order to measure
        for (std::size_t i = 0; i + 1 < ne; ++i) {
          if (ey[0] > o.y_floor)
            row.y_order = std::min(row.y_order, order(ey[i], ey[i + 1], o.eps[i], o.eps[i + 1]));
          if (ez[0] > o.z_floor)
            row.z_order = std::min(row.z_order, order(ez[i], ez[i + 1], o.eps[i], o.eps[i + 1]));
        }
      }
      r.y_max_rel = std::max(r.y_max_rel, row.y_err.back());
      r.z_max_rel = std::max(r.z_max_rel, row.z_err.back());
      if (std::isinf(row.y_order)) ++r.y_exact_rows;
      else r.y_min_order = std::min(r.y_min_order, row.y_order);
      if (std::isinf(row.z_order)) ++r.z_exact_rows;
      else r.z_min_order = std::min(r.z_min_order, row.z_order);
      r.rows.push_back(std::move(row));
    }

  // [Z, sigma_k] is affine in U, so the forward quotient with eps = 1 is exact
  for (const auto& j : wavevectors(o.jmax))
    for (int m = 0; m < 2; ++m) {
      const FieldMap Zmap = [&, j, m](const SpectralState& V) { return Z_field(j[0], j[1], m, V, p, grid); };
      for (const auto& k : kForcedModes) {
        const SpectralState closed = Z_sigma_bracket(j[0], j[1], m, k.j1, k.j2, k.m, p, grid);
        const FieldMap sk = constant_map(trig_mode(o.n, k.j1, k.j2, k.m, Slot::temperature));
        SpectralState first;
        for (std::size_t s = 0; s < states.size(); ++s) {
          const SpectralState fd = lie_bracket_fd(Zmap, sk, states[s], 1.0, FdScheme::forward);
          r.zsigma_max_err = std::max(r.zsigma_max_err, max_coeff_diff(fd, closed));
          if (s == 0)
            first = fd;
          else
            r.zsigma_spread = std::max(r.zsigma_spread, max_coeff_diff(fd, first));
        }
        ++r.zsigma_pairs;
      }
    }
  return r;
}

nlohmann::json to_json(const BracketReport& r) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& row : r.rows)
    table.push_back({{"j", {row.j1, row.j2}},
                     {"m", row.m},
                     {"y_err", row.y_err},
                     {"z_err", row.z_err},
                     {"y_order", finite_or_null(row.y_order)},
                     {"z_order", finite_or_null(row.z_order)}});
  return {{"table", table},
          {"y_max_rel", r.y_max_rel},         {"z_max_rel", r.z_max_rel},
          {"y_min_order", finite_or_null(r.y_min_order)}, {"z_min_order", finite_or_null(r.z_min_order)},
          {"y_floor", r.y_floor},             {"zsigma_max_err", r.zsigma_max_err},
          {"zsigma_spread", r.zsigma_spread}, {"zsigma_pairs", r.zsigma_pairs},
          {"y_exact_rows", r.y_exact_rows},
          {"z_exact_rows", r.z_exact_rows}};
}

// ---------------------------------------------------------------- linearization

LinearizationReport linearization_check(const LinearizationOptions& o) {
  const GridSpec grid = GridSpec::make(o.n);
  const Integrator integ(grid, o.params, o.dt);
  SetupRng rng(o.seed, 0);
  const SpectralState U0 = random_truncated_state(o.n, 4, rng, 2.0);
  ExtendedState e0;
  e0.x(0) = rng.uniform(0, kTwoPi);
  e0.x(1) = rng.uniform(0, kTwoPi);
  e0.tau(0) = rng.normal();
  e0.tau(1) = rng.normal();
  const int steps = static_cast<int>(std::llround(o.t / o.dt));
  const BaseTrajectory base(integ, U0, e0, CounterRng(o.seed, 1), 0, steps);
  const FlowPoint start{U0, e0};
  const FlowPoint end = flow(start, 0, steps, base);

  LinearizationReport r;
  r.min_order = std::numeric_limits<double>::infinity();
  const int mid = (2 * steps) / 5;
  for (int d = 0; d < o.directions; ++d) {
    const VariationState p = random_variation(o.n, 4, rng, 0.5);
    const VariationState jp = jacobian_action(p, 0, steps, base);
    std::vector<double> errs;
    for (double eps : o.eps) {
      VariationState err = difference(flow(perturb(start, p, eps), 0, steps, base), end, eps);
      err.axpy(-1.0, jp);
      errs.push_back(variation_norm(err, o.params) / variation_norm(p, o.params));
    }
    for (std::size_t i = 0; i + 1 < errs.size(); ++i)
      r.min_order = std::min(r.min_order, order(errs[i], errs[i + 1], o.eps[i], o.eps[i + 1]));
    r.max_final_error = std::max(r.max_final_error, errs.back());
    r.errors.push_back(errs);
    const VariationState composed = jacobian_action(jacobian_action(p, 0, mid, base), mid, steps, base);
    r.cocycle_error = std::max(r.cocycle_error, rel_gap(composed, jp, o.params));
  }
  return r;
}

nlohmann::json to_json(const LinearizationReport& r) {
  return {{"min_order", r.min_order},
          {"max_final_error", r.max_final_error},
          {"cocycle_error", r.cocycle_error},
          {"errors", r.errors}};
}

// ---------------------------------------------------------------- Lyapunov

nlohmann::json to_json(const LyapunovSummary& s) {
  auto est = [](const LyapunovEstimate& e) {
    return nlohmann::json{{"lambda_top", finite_or_null(e.lambda_top)},
                          {"lambda_sum", finite_or_null(e.lambda_sum)},
                          {"ci_halfwidth", finite_or_null(e.ci_halfwidth)},
                          {"samples", e.samples}};
  };
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& r : s.seeds)
    seeds.push_back({{"seed", r.seed},
                     {"ok", r.ok},
                     {"error", r.error},
                     {"lambda_qr", finite_or_null(r.lambda_qr)},
                     {"lambda_qr2", finite_or_null(r.lambda_qr2)},
                     {"lambda_proj", finite_or_null(r.lambda_proj)},
                     {"lambda_sum", finite_or_null(r.lambda_sum)},
                     {"det_drift_until", finite_or_null(r.det_drift_until)},
                     {"reprojections", r.reprojections}});
  return {{"jacobian_log_norm", est(s.qr)},
          {"projective_average", est(s.proj)},
          {"lambda2", finite_or_null(s.lambda2)},
          {"joint_halfwidth", finite_or_null(s.joint_halfwidth)},
          {"paired_mean", finite_or_null(s.paired_mean)},
          {"paired_halfwidth", finite_or_null(s.paired_halfwidth)},
          {"estimators_agree", s.estimators_agree},
          {"ci_excludes_zero", s.ci_excludes_zero},
          {"ci_positive", s.ci_positive},
          {"max_abs_sum", finite_or_null(s.max_abs_sum)},
          {"max_det_drift", finite_or_null(s.max_det_drift)},
          {"seeds", seeds}};
}

std::vector<SweepRow> lyapunov_sweep(const LyapunovConfig& base, const std::vector<double>& gs,
                                     const std::vector<double>& scales, int threads) {
  std::vector<SweepRow> out;
  for (double g : gs)
    for (double sc : scales) {
      LyapunovConfig c = base;
      c.params.g = g;
      for (auto& a : c.params.alpha) a *= sc;
      LyapunovSummary s;
      for (int attempt = 0;; ++attempt) {
        s = lyapunov_top(c, threads);
        const bool cfl = std::any_of(s.seeds.begin(), s.seeds.end(), [](const LyapunovSeedResult& r) {
          return !r.ok && r.error.find("CFL") != std::string::npos;
        });
        if (!cfl || attempt == 3) break;
        c.dt *= 0.5;
        c.qr_every *= 2;
        c.sample_every *= 2;
      }
      out.push_back({g, sc, c.dt, std::move(s)});
    }
  return out;
}

// ---------------------------------------------------------------- Malliavin

MalliavinReport malliavin_probe(const MalliavinOptions& o) {
  const MalliavinConfig& c = o.base;
  MalliavinReport r;
  r.min_eig = std::numeric_limits<double>::infinity();
  int positive = 0, monotone = 0;
  const int n = c.grid.n;
  const auto dirs = default_directions(n, c.params, c.norm_s);
  std::vector<bool> low;
  for (const auto& d : dirs) low.push_back(d.low_mode);
  for (int s = 0; s < o.seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    MalliavinSeedRow row{seed, kNaN, kNaN, kNaN, kNaN};
    try {
      const BaseTrajectory base = malliavin_base(c, seed);
      const int T = base.steps();
      const GramMatrix G = malliavin_gram(base, 0, T, dirs, c.seed_every, c.norm_s, c.threads);
      row.min_eig = G.min_eig();
      row.max_entry = G.M.cwiseAbs().maxCoeff();
      row.asym = (G.M - G.M.transpose()).cwiseAbs().maxCoeff();
      SetupRng cr(c.master_seed, seed + (std::uint64_t(1) << 41));
      row.cone_probe = cone_probe(G.M, low, c.cone_alpha, c.cone_trials, cr).probe;
      if (s < o.doubled_seeds) {
        const GramMatrix G2 = malliavin_gram(base, 0, T, dirs, std::max(1, c.seed_every / 2), c.norm_s, c.threads);
        row.doubled_change = (G2.M - G.M).cwiseAbs().maxCoeff() / row.max_entry;
        r.max_doubled_change = std::max(r.max_doubled_change, row.doubled_change);
      }
      if (s < o.control_seeds) {
        const RegularizedControl rc(base, dirs, c.seed_every, c.norm_s, c.threads);
        SetupRng pr(c.master_seed, seed + (std::uint64_t(3) << 40));
        for (int d = 0; d < o.probe_directions; ++d) {
          VariationState p(n);
          double nn = 0.0;
          // low-mode p only
          std::vector<double> coef(dirs.size(), 0.0);
          for (std::size_t a = 0; a < dirs.size(); ++a) {
            if (!dirs[a].low_mode) continue;
            coef[a] = pr.normal();
            nn += coef[a] * coef[a];
          }
          for (std::size_t a = 0; a < dirs.size(); ++a) p.axpy(coef[a] / std::sqrt(nn), dirs[a].p);
          MalliavinControlRow cr2{seed, d, {}, {}, {}, true};
          for (double beta : o.betas) {
            const auto res = rc.solve(p, beta);
            if (!cr2.rho_norm.empty() && res.rho_norm > cr2.rho_norm.back()) cr2.monotone = false;
            cr2.rho_norm.push_back(res.rho_norm);
            cr2.identity_error.push_back(res.identity_error);
            cr2.control_norm.push_back(res.control_norm);
            r.max_identity_error = std::max(r.max_identity_error, res.identity_error);
          }
          monotone += cr2.monotone;
          r.controls.push_back(std::move(cr2));
        }
      }
    } catch (const Error&) {
      // recorded as NaN entries; counts as a non-positive probe
    }
    if (std::isfinite(row.min_eig)) r.min_eig = std::min(r.min_eig, row.min_eig);
    if (std::isfinite(row.asym)) r.max_asym = std::max(r.max_asym, row.asym);
    if (row.cone_probe > 0.0) ++positive;
    r.seeds.push_back(row);
  }
  r.cone_positive_fraction = o.seeds > 0 ? static_cast<double>(positive) / o.seeds : 0.0;
  r.monotone_fraction = r.controls.empty() ? 0.0 : static_cast<double>(monotone) / r.controls.size();
  return r;
}

nlohmann::json to_json(const MalliavinReport& r) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.seeds)
    seeds.push_back({{"seed", s.seed},
                     {"min_eig", finite_or_null(s.min_eig)},
                     {"max_entry", finite_or_null(s.max_entry)},
                     {"cone_probe", finite_or_null(s.cone_probe)},
                     {"asym", finite_or_null(s.asym)},
                     {"doubled_change", finite_or_null(s.doubled_change)}});
  return {{"min_eig", finite_or_null(r.min_eig)},
          {"max_asym", r.max_asym},
          {"max_doubled_change", r.max_doubled_change},
          {"cone_positive_fraction", r.cone_positive_fraction},
          {"max_identity_error", r.max_identity_error},
          {"monotone_fraction", r.monotone_fraction},
          {"seeds", seeds}};
}

// ---------------------------------------------------------------- span

SpanReport span_study(const SpanOptions& o) {
  const GridSpec grid = GridSpec::make(o.n);
  const Integrator integ(grid, o.params, o.dt);
  const long steps = std::lround(o.burn_in / o.dt);
  SpanReport r;
  std::vector<double> col[3];
  for (int s = 0; s < o.seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const CounterRng noise(o.master_seed, seed);
    SpectralState U(o.n);
    std::array<double, 4> W{};
    for (long k = 0; k < steps; ++k) {
      const NoiseIncrement inc = draw_increment(noise, static_cast<std::uint64_t>(k), o.dt);
      for (int i = 0; i < 4; ++i) W[i] += inc.dw[i];
      U = integ.step(U, inc);
    }
    const SpanField field(U, W, o.params, grid.dealias_cut);
    SetupRng g(o.master_seed, seed + (std::uint64_t(1) << 42));
    SpanState st;
    st.x(0) = g.uniform(0, kTwoPi);
    st.x(1) = g.uniform(0, kTwoPi);
    const double sep = g.uniform(0.1, std::numbers::pi), phi = g.uniform(0, kTwoPi);
    st.y = wrap_point(st.x + sep * Vec2(std::cos(phi), std::sin(phi)));
    const double tn = std::exp(g.uniform(std::log(0.1), std::log(10.0))), psi = g.uniform(0, kTwoPi);
    st.tau = tn * Vec2(std::cos(psi), std::sin(psi));
    st.A = Mat2::Identity();
    SpanRow row{seed, span_check(SpanKind::two_point, st, field, o.N),
                span_check(SpanKind::tangent, st, field, o.tangent_N),
                span_check(SpanKind::jacobian, st, field, o.N), sep, tn};
    col[0].push_back(row.two_point);
    col[1].push_back(row.tangent);
    col[2].push_back(row.jacobian);
    r.rows.push_back(row);
  }
  for (int k = 0; k < 3; ++k) {
    r.min[k] = col[k].empty() ? kNaN : *std::min_element(col[k].begin(), col[k].end());
    r.median[k] = median(col[k]);
  }
  return r;
}

nlohmann::json to_json(const SpanReport& r) {
  nlohmann::json out;
  const char* names[3] = {"two_point", "tangent", "jacobian"};
  for (int k = 0; k < 3; ++k)
    out[names[k]] = {{"min_singular", finite_or_null(r.min[k])}, {"median_singular", finite_or_null(r.median[k])}};
  out["seeds"] = r.rows.size();
  return out;
}

// ---------------------------------------------------------------- energy

EnergyAuditReport energy_audit(const EnergyAuditOptions& o) {
  EnergyAuditReport r;
  const GridSpec grid = GridSpec::make(o.n);
  {
    const Integrator integ(grid, o.params, o.dt);
    const long steps = std::lround(o.decay_horizon / o.dt);
    for (int run = 0; run < o.decay_runs; ++run) {
      SetupRng rng(o.master_seed, static_cast<std::uint64_t>(run) + (std::uint64_t(5) << 40));
      SpectralState U = random_truncated_state(o.n, 8, rng, 2.0);
      EnergyMonitor mon(o.params);
      double prev = mon.push(0.0, U).h_norm_sq;
      const NoiseIncrement none{{0, 0, 0, 0}, o.dt};
      for (long k = 1; k <= steps; ++k) {
        U = integ.step(U, none);
        const Diagnostics& d = mon.push(k * o.dt, U);
        r.max_decay_ratio = std::max(r.max_decay_ratio, d.decay_ratio);
        if (d.h_norm_sq > prev) r.monotone = false;
        prev = d.h_norm_sq;
      }
    }
  }
  // transport off: each forced temperature amplitude is an exact OU process
  const int ou_n = 16;
  const Integrator lin(GridSpec::make(ou_n), o.params, o.dt, StepOptions{false, true});
  const long steps = std::lround(o.ou_horizon / o.dt);
  const double T = steps * o.dt;
  std::array<std::vector<double>, 4> sq;
  for (int s = 0; s < o.ou_seeds; ++s) {
    const CounterRng noise(o.master_seed, static_cast<std::uint64_t>(s) + (std::uint64_t(6) << 40));
    SpectralState U(ou_n);
    for (long k = 0; k < steps; ++k) U = lin.step(U, draw_increment(noise, static_cast<std::uint64_t>(k), o.dt));
    const cplx c10 = U.theta.coeff(1, 0), c01 = U.theta.coeff(0, 1);
    const double amp[4] = {2.0 * c10.real(), -2.0 * c10.imag(), 2.0 * c01.real(), -2.0 * c01.imag()};
    for (int i = 0; i < 4; ++i) sq[i].push_back(amp[i] * amp[i]);
  }
  for (int i = 0; i < 4; ++i) {
    const auto [mean, hw] = mean_ci95(sq[i]);
    double var = 0.0;
    for (double v : sq[i]) var += (v - mean) * (v - mean) / std::max<std::size_t>(1, sq[i].size() - 1);
    const double a = o.params.alpha[i];
    r.ou_mean[i] = mean;
    r.ou_oracle[i] = a * a * -std::expm1(-2.0 * o.params.nu2 * T) / (2.0 * o.params.nu2);
    r.ou_stderr[i] = std::sqrt(var / sq[i].size());
    r.ou_z[i] = (mean - r.ou_oracle[i]) / r.ou_stderr[i];
    r.max_abs_z = std::max(r.max_abs_z, std::abs(r.ou_z[i]));
    (void)hw;
  }
  return r;
}

nlohmann::json to_json(const EnergyAuditReport& r) {
  return {{"max_decay_ratio", r.max_decay_ratio}, {"monotone", r.monotone},       {"ou_mean", r.ou_mean},
          {"ou_oracle", r.ou_oracle},             {"ou_stderr", r.ou_stderr},     {"ou_z", r.ou_z},
          {"max_abs_z", r.max_abs_z}};
}

// ---------------------------------------------------------------- control

ControlDemoReport control_demo(const ControlDemoOptions& o) {
  ControlDemoReport r;
  SetupRng rng(o.seed, 0);
  auto unit = [&] {
    const double a = rng.uniform(0, kTwoPi);
    return Vec2(std::cos(a), std::sin(a));
  };
  auto point = [&] {
    const double a = rng.uniform(0, kTwoPi);
    return Vec2(a, rng.uniform(0, kTwoPi));
  };
  for (int i = 0; i < o.plans; ++i) {
    const Vec2 x0 = point(), xt = point(), v0 = unit(), vt = unit();
    ControlPlan plan = build_steering_plan(x0, xt, v0, vt, o.params);
    plan.label = "steer-" + std::to_string(i);
    const SteeringReport s = verify_steering(plan, o.params, o.steering);
    SteeringReport& w = r.worst;
    w.position_error = std::max(w.position_error, s.position_error);
    w.angle_error = std::max(w.angle_error, s.angle_error);
    w.pde_residual = std::max(w.pde_residual, s.pde_residual);
    w.tracking_error = std::max(w.tracking_error, s.tracking_error);
    w.state_return = std::max(w.state_return, s.state_return);
    w.identity_error = std::max(w.identity_error, s.identity_error);
    w.shear_b_omega = std::max(w.shear_b_omega, s.shear_b_omega);
    w.cell_center_drift = std::max(w.cell_center_drift, s.cell_center_drift);
    w.seam_jump = std::max(w.seam_jump, s.seam_jump);
    w.steps = std::max(w.steps, s.steps);
    r.plans.push_back(std::move(plan));
    r.reports.push_back(s);
  }
  r.matrix_plan = build_matrix_plan(std::exp(o.matrix_log), point(), o.params);
  r.matrix_plan.label = "matrix";
  r.matrix = verify_steering(r.matrix_plan, o.params, o.steering);
  return r;
}

nlohmann::json to_json(const ControlDemoReport& r) {
  return {{"plans", r.plans.size()},
          {"worst", to_json(r.worst)},
          {"matrix_target", r.matrix_plan.matrix_target},
          {"matrix", to_json(r.matrix)}};
}

// ---------------------------------------------------------------- trajectories

Checkpoint initial_checkpoint(const ExperimentConfig& c, std::uint64_t stream) {
  Checkpoint k;
  k.master_seed = c.master_seed;
  k.stream = stream;
  k.dt = c.dt;
  k.params = c.params;
  SetupRng setup(c.master_seed, stream + (std::uint64_t(1) << 40));
  k.e.x(0) = setup.uniform(0, kTwoPi);
  k.e.x(1) = setup.uniform(0, kTwoPi);
  const double ang = setup.uniform(0, kTwoPi);
  k.e.v = k.e.tau = Vec2(std::cos(ang), std::sin(ang));
  const double amp = c.opt("init_amp", 0.0);
  k.U = amp > 0.0 ? random_truncated_state(c.n, 4, setup, amp) : SpectralState(c.n);
  return k;
}

SimulationResult simulate_trajectory(const ExperimentConfig& c, const Checkpoint& start, std::uint64_t total_steps,
                                     int sample_every, std::uint64_t checkpoint_step,
                                     const std::string& checkpoint_path) {
  if (start.U.n() != c.n) throw CheckpointError("checkpoint resolution does not match the configuration");
  if (sample_every < 1) throw ConfigError("sample_every must be positive");
  const Integrator integ(c.grid(), start.params, start.dt);
  const CounterRng rng(start.master_seed, start.stream);
  SimulationResult out;
  Checkpoint cur = start;
  for (std::uint64_t k = start.step;; ++k) {
    cur.step = k;
    if (checkpoint_step > 0 && k == checkpoint_step && !checkpoint_path.empty()) save_checkpoint(cur, checkpoint_path);
    if (k % static_cast<std::uint64_t>(sample_every) == 0 || k == total_steps) {
      const PhysicalFields ph = integ.physical(cur.U);
      out.rows.push_back({k, k * start.dt, weighted_norm_sq(cur.U, 0.0, start.params),
                          sobolev_norm_sq(cur.U.omega, 0.0), ph.umax, cur.e});
    }
    if (k >= total_steps) break;
    try {
      cur.e = step_extended(cur.e, cur.U, start.dt);
      cur.U = integ.step(cur.U, draw_increment(rng, k, start.dt));
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.what(), start.stream, static_cast<std::int64_t>(k));
    }
  }
  out.final_state = cur;
  return out;
}

std::string simulation_csv(const std::vector<SimulationRow>& rows) {
  std::string s = "step,t,energy,enstrophy,umax,x1,x2,tau1,tau2,A11,A12,A21,A22\n";
  for (const auto& r : rows) {
    s += std::to_string(r.step);
    for (double v : {r.t, r.energy, r.enstrophy, r.umax, r.e.x(0), r.e.x(1), r.e.tau(0), r.e.tau(1), r.e.A(0, 0),
                     r.e.A(0, 1), r.e.A(1, 0), r.e.A(1, 1)})
      s += "," + num(v);
    s += "\n";
  }
  return s;
}

// ---------------------------------------------------------------- orchestration

std::string source_revision() { return BQ_REVISION; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

LyapunovConfig lyapunov_config(const ExperimentConfig& c) {
  LyapunovConfig l;
  l.grid = c.grid();
  l.params = c.params;
  l.dt = c.dt;
  l.burn_in = c.burn_in;
  l.horizon = c.horizon;
  l.seeds = c.ensemble;
  l.master_seed = c.master_seed;
  l.qr_every = static_cast<int>(c.opt_int("qr_every", l.qr_every));
  l.sample_every = static_cast<int>(c.opt_int("sample_every", l.sample_every));
  l.det_check_until = c.opt("det_check_until", l.det_check_until);
  try {
    validate(l);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return l;
}

std::string lyapunov_csv(const LyapunovSummary& s) {
  std::string out = "seed,t,log_norm_growth,projective_average\n";
  for (const auto& r : s.seeds)
    for (const auto& x : r.series)
      out += std::to_string(r.seed) + "," + num(x.t) + "," + num(x.log_norm_growth) + "," +
             num(x.projective_average) + "\n";
  return out;
}

namespace {

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "g,alpha_scale,dt,lambda_qr,ci_qr,lambda_proj,ci_proj,paired_mean,paired_halfwidth,ci_positive,failed_seeds\n";
  for (const auto& r : rows) {
    int failed = 0;
    for (const auto& s : r.summary.seeds) failed += !s.ok;
    out += num(r.g) + "," + num(r.alpha_scale) + "," + num(r.dt) + "," + num(r.summary.qr.lambda_top) + "," +
           num(r.summary.qr.ci_halfwidth) + "," + num(r.summary.proj.lambda_top) + "," +
           num(r.summary.proj.ci_halfwidth) + "," + num(r.summary.paired_mean) + "," +
           num(r.summary.paired_halfwidth) + "," + (r.summary.ci_positive ? "1" : "0") + "," +
           std::to_string(failed) + "\n";
  }
  return out;
}

struct Outputs {
  std::filesystem::path dir;
  RunRecord& rec;
  void csv(const std::string& name, const std::string& text) {
    write_text((dir / name).string(), text);
    rec.files.push_back(name);
  }
};

SteeringOptions steering_options(const ExperimentConfig& c) {
  SteeringOptions s;
  s.n = static_cast<int>(c.opt_int("steer_n", s.n));
  s.dt = c.opt("steer_dt", s.dt);
  s.seed = c.master_seed;
  return s;
}

MalliavinConfig malliavin_config(const ExperimentConfig& c, int threads) {
  MalliavinConfig m;
  m.grid = c.grid();
  m.params = c.params;
  m.dt = c.dt;
  m.burn_in = c.burn_in;
  m.horizon = c.horizon;
  m.seed_every = static_cast<int>(c.opt_int("seed_every", m.seed_every));
  m.norm_s = c.opt("norm_s", m.norm_s);
  m.cone_alpha = c.opt("cone_alpha", m.cone_alpha);
  m.cone_trials = static_cast<int>(c.opt_int("cone_trials", m.cone_trials));
  m.threads = threads;
  m.master_seed = c.master_seed;
  return m;
}

}  // namespace

RunRecord run(const ExperimentConfig& c, const std::string& out_dir, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config_hash = config_hash(c);
  rec.revision = source_revision();
  rec.kind = to_string(c.kind);
  std::filesystem::create_directories(out_dir);
  Outputs out{out_dir, rec};
  nlohmann::json results;

  switch (c.kind) {
    case ExperimentKind::simulate: {
      const auto total = static_cast<std::uint64_t>(std::llround((c.burn_in + c.horizon) / c.dt));
      const int every = static_cast<int>(c.opt_int("sample_every", 100));
      const double ck = c.opt("checkpoint_at", 0.0);
      const auto ck_step = static_cast<std::uint64_t>(std::llround(ck / c.dt));
      std::string csv;
      nlohmann::json members = nlohmann::json::array();
      for (int s = 0; s < c.ensemble; ++s) {
        const auto seed = static_cast<std::uint64_t>(s);
        const std::string ckname = "checkpoint_" + std::to_string(s) + ".bqck";
        try {
          const auto res = simulate_trajectory(c, initial_checkpoint(c, seed), total, every, ck_step,
                                               ck_step > 0 ? (out.dir / ckname).string() : "");
          const std::string body = simulation_csv(res.rows);
          std::istringstream lines(body);
          std::string line;
          std::getline(lines, line);
          if (s == 0) csv = "seed," + line + "\n";
          while (std::getline(lines, line)) csv += std::to_string(s) + "," + line + "\n";
          const std::string fin = "final_" + std::to_string(s) + ".bqck";
          save_checkpoint(res.final_state, (out.dir / fin).string());
          rec.files.push_back(fin);
          if (ck_step > 0 && ck_step <= total) rec.files.push_back(ckname);
          members.push_back({{"seed", seed}, {"status", "ok"}, {"final_energy", res.rows.back().energy}});
        } catch (const Error& e) {
          ++rec.failed_seeds;
          members.push_back({{"seed", seed}, {"status", "failed"}, {"error", e.what()}});
        }
      }
      if (csv.empty()) csv = "seed,step,t,energy,enstrophy,umax,x1,x2,tau1,tau2,A11,A12,A21,A22\n";
      out.csv("trajectory.csv", csv);
      results["members"] = members;
      break;
    }
    case ExperimentKind::lyapunov: {
      const LyapunovConfig lc = lyapunov_config(c);
      const LyapunovSummary s = lyapunov_top(lc, threads);
      for (const auto& r : s.seeds) rec.failed_seeds += !r.ok;
      out.csv("lyapunov.csv", lyapunov_csv(s));
      results["lyapunov"] = to_json(s);
      if (c.opt_bool("sweep", false)) {
        LyapunovConfig sc = lc;
        sc.seeds = static_cast<int>(c.opt_int("sweep_seeds", lc.seeds));
        sc.horizon = c.opt("sweep_horizon", lc.horizon);
        sc.burn_in = c.opt("sweep_burn_in", lc.burn_in);
        const auto rows = lyapunov_sweep(sc, c.options.numbers("sweep_g", {1, 2, 4}),
                                         c.options.numbers("sweep_alpha_scale", {1, 2, 4}), threads);
        out.csv("lyapunov_sweep.csv", sweep_csv(rows));
        bool any = false;
        for (const auto& r : rows) any = any || r.summary.ci_positive;
        results["sweep_any_positive"] = any;
      }
      break;
    }
    case ExperimentKind::control_demo: {
      ControlDemoOptions o;
      o.params = c.params;
      o.steering = steering_options(c);
      o.plans = static_cast<int>(c.opt_int("plans", c.ensemble));
      o.matrix_log = c.opt("matrix_log", o.matrix_log);
      o.seed = c.master_seed;
      const ControlDemoReport r = control_demo(o);
      std::string csv =
          "plan,position_error,angle_error,matrix_norm,matrix_det_error,pde_residual,tracking_error,state_return,"
          "identity_error,shear_b_omega,cell_center_drift,seam_jump\n";
      auto line = [&](const std::string& label, const SteeringReport& s) {
        csv += label;
        for (double v : {s.position_error, s.angle_error, s.matrix_norm, s.matrix_det_error, s.pde_residual,
                         s.tracking_error, s.state_return, s.identity_error, s.shear_b_omega, s.cell_center_drift,
                         s.seam_jump})
          csv += "," + num(v);
        csv += "\n";
      };
      for (std::size_t i = 0; i < r.plans.size(); ++i) line(r.plans[i].label, r.reports[i]);
      line(r.matrix_plan.label, r.matrix);
      out.csv("control.csv", csv);
      nlohmann::json plans = nlohmann::json::array();
      for (const auto& p : r.plans) plans.push_back(to_json(p));
      plans.push_back(to_json(r.matrix_plan));
      write_text((out.dir / "plans.json").string(), plans.dump(2) + "\n");
      rec.files.push_back("plans.json");
      results["control"] = to_json(r);
      break;
    }
    case ExperimentKind::bracket_check: {
      BracketOptions o;
      o.n = c.n;
      o.params = c.params;
      o.jmax = static_cast<int>(c.opt_int("jmax", o.jmax));
      o.states = static_cast<int>(c.opt_int("states", o.states));
      o.seed = c.master_seed;
      o.eps = c.options.numbers("eps", o.eps);
      const BracketReport r = bracket_check(o);
      std::string csv = "j1,j2,m";
      for (std::size_t i = 0; i < o.eps.size(); ++i) csv += ",y_err_" + std::to_string(i);
      for (std::size_t i = 0; i < o.eps.size(); ++i) csv += ",z_err_" + std::to_string(i);
      csv += ",y_order,z_order\n";
      for (const auto& row : r.rows) {
        csv += std::to_string(row.j1) + "," + std::to_string(row.j2) + "," + std::to_string(row.m);
        for (double v : row.y_err) csv += "," + num(v);
        for (double v : row.z_err) csv += "," + num(v);
        csv += "," + num(row.y_order) + "," + num(row.z_order) + "\n";
      }
      out.csv("brackets.csv", csv);
      results["brackets"] = to_json(r);
      results["eps"] = o.eps;
      break;
    }
    case ExperimentKind::malliavin_probe: {
      MalliavinOptions o;
      o.base = malliavin_config(c, threads);
      o.seeds = c.ensemble;
      o.doubled_seeds = static_cast<int>(c.opt_int("doubled_seeds", o.doubled_seeds));
      o.control_seeds = static_cast<int>(c.opt_int("control_seeds", o.control_seeds));
      o.probe_directions = static_cast<int>(c.opt_int("probe_directions", o.probe_directions));
      o.betas = c.options.numbers("betas", o.betas);
      const MalliavinReport r = malliavin_probe(o);
      std::string csv = "seed,min_eig,max_entry,cone_probe,asym,doubled_change\n";
      for (const auto& s : r.seeds) {
        csv += std::to_string(s.seed);
        for (double v : {s.min_eig, s.max_entry, s.cone_probe, s.asym, s.doubled_change}) csv += "," + num(v);
        csv += "\n";
        rec.failed_seeds += !std::isfinite(s.min_eig);
      }
      out.csv("malliavin_gram.csv", csv);
      std::string cc = "seed,direction,beta,rho_norm,identity_error,control_norm\n";
      for (const auto& row : r.controls)
        for (std::size_t i = 0; i < row.rho_norm.size(); ++i)
          cc += std::to_string(row.seed) + "," + std::to_string(row.direction) + "," + num(o.betas[i]) + "," +
                num(row.rho_norm[i]) + "," + num(row.identity_error[i]) + "," + num(row.control_norm[i]) + "\n";
      out.csv("malliavin_control.csv", cc);
      results["malliavin"] = to_json(r);
      break;
    }
    case ExperimentKind::span_check: {
      SpanOptions o;
      o.n = c.n;
      o.params = c.params;
      o.dt = c.dt;
      o.burn_in = c.burn_in;
      o.seeds = c.ensemble;
      o.N = c.opt("N", o.N);
      o.tangent_N = c.opt("tangent_N", o.tangent_N);
      o.master_seed = c.master_seed;
      const SpanReport r = span_study(o);
      std::string csv = "seed,two_point,tangent,jacobian,separation,tau_norm\n";
      for (const auto& row : r.rows)
        csv += std::to_string(row.seed) + "," + num(row.two_point) + "," + num(row.tangent) + "," +
               num(row.jacobian) + "," + num(row.separation) + "," + num(row.tau_norm) + "\n";
      out.csv("span.csv", csv);
      results["span"] = to_json(r);
      break;
    }
    case ExperimentKind::energy_audit: {
      EnergyAuditOptions o;
      o.n = c.n;
      o.params = c.params;
      o.dt = c.dt;
      o.decay_horizon = c.horizon;
      o.decay_runs = static_cast<int>(c.opt_int("decay_runs", o.decay_runs));
      o.ou_seeds = static_cast<int>(c.opt_int("ou_seeds", o.ou_seeds));
      o.ou_horizon = c.opt("ou_horizon", o.ou_horizon);
      o.master_seed = c.master_seed;
      const EnergyAuditReport r = energy_audit(o);
      std::string csv = "mode,mean_sq,oracle,stderr,z\n";
      for (int i = 0; i < 4; ++i)
        csv += std::to_string(i) + "," + num(r.ou_mean[i]) + "," + num(r.ou_oracle[i]) + "," + num(r.ou_stderr[i]) +
               "," + num(r.ou_z[i]) + "\n";
      out.csv("ou_variance.csv", csv);
      results["energy"] = to_json(r);
      break;
    }
  }

  const int members = c.kind == ExperimentKind::simulate || c.kind == ExperimentKind::lyapunov ||
                              c.kind == ExperimentKind::malliavin_probe
                          ? c.ensemble
                          : 0;
  if (rec.failed_seeds > 0) rec.status = members > 0 && rec.failed_seeds >= members ? "diverged" : "partial";
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.summary = {{"config_hash", rec.config_hash},   {"revision", rec.revision},
                 {"kind", rec.kind},                 {"status", rec.status},
                 {"wall_seconds", rec.wall_seconds}, {"failed_seeds", rec.failed_seeds},
                 {"files", rec.files},               {"warnings", c.warnings},
                 {"config", canonical_text(c)},      {"results", results}};
  write_text((out.dir / "summary.json").string(), rec.summary.dump(2) + "\n");
  return rec;
}

}  // namespace bq
