#include "bq/control.hpp"

#include "bq/errors.hpp"
#include "bq/rng.hpp"

#include <Eigen/SVD>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

namespace bq {

namespace {

constexpr double kPi = std::numbers::pi;

// cos or sin of (j1 (x1 - a) + j2 (x2 - b)) times amp
ScalarField wave(int n, int j1, int j2, int m, double amp, double a, double b) {
  return trig_scalar(n, j1, j2, m, amp, j1 * a + j2 * b);
}

struct Profile {
  ScalarField omega, P, Q;  // omega = f Omega, theta_p = c P, q = c Q
};

Profile profile(const ControlStage& s, int n) {
  const double a = s.a, b = s.b;
  Profile pr{ScalarField(n), ScalarField(n), ScalarField(n)};
  switch (s.kind) {
    case StageKind::shear_x1:
      pr.omega = wave(n, 0, 1, 1, 1.0, a, b);
      pr.Q = wave(n, 0, 1, 1, 1.0, a, b);
      break;
    case StageKind::shear_x2:
      pr.omega = wave(n, 1, 0, 1, -1.0, a, b);
      pr.P = wave(n, 1, 0, 0, 1.0, a, b);
      break;
    case StageKind::cellular:
      pr.omega = wave(n, 1, 0, 0, 1.0, a, b) + wave(n, 0, 1, 0, 1.0, a, b);
      pr.P = wave(n, 1, 0, 1, 1.0, a, b);
      pr.Q = wave(n, 0, 1, 0, 1.0, a, b);
      break;
    case StageKind::cellular_matrix:
      pr.omega = wave(n, 1, 0, 0, 1.0, a, b) - wave(n, 0, 1, 0, 1.0, a, b);
      pr.P = wave(n, 1, 0, 1, 1.0, a, b);
      pr.Q = wave(n, 0, 1, 0, -1.0, a, b);
      break;
  }
  return pr;
}

const ControlStage* active_stage(const ControlPlan& plan, double t) {
  for (const auto& s : plan.stages)
    if (t > s.bump.t0() && t < s.bump.t1()) return &s;
  return nullptr;
}

struct Amplitudes {
  double f, df, c, dc, d;
};

Amplitudes amplitudes(const ControlStage& s, double t, const PhysicalParams& p) {
  Amplitudes A;
  A.f = s.bump.f(t);
  A.df = s.bump.df(t);
  const double d2f = s.bump.d2f(t);
  A.c = (A.df + p.nu1 * A.f) / p.g;
  A.dc = (d2f + p.nu1 * A.df) / p.g;
  A.d = A.dc + p.nu2 * A.c;
  return A;
}

ScalarField product(const ScalarField& a, const ScalarField& b) { return multiply_exact(a, b); }

// A = Q R with positive diagonal; A <- Q.
Mat2 factor_qr(Mat2& A) {
  Vec2 q1 = A.col(0);
  const double r11 = q1.norm();
  q1 /= r11;
  const double r12 = q1.dot(A.col(1));
  Vec2 q2 = A.col(1) - r12 * q1;
  const double r22 = q2.norm();
  q2 /= r22;
  A.col(0) = q1;
  A.col(1) = q2;
  Mat2 R;
  R << r11, r12, 0.0, r22;
  return R;
}

ScalarField transport(const VelocityField& u, const ScalarField& f) {
  return product(u.u1, partial(f, 0)) + product(u.u2, partial(f, 1));
}

}  // namespace

double Bump::unit_integral() {
  static const double I = [] {
    auto phi = [](double s) {
      const double w = s * (1.0 - s);
      return w <= 0.0 ? 0.0 : std::exp(-1.0 / w);
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(phi, 0.0, 1.0, 15, 1e-15);
  }();
  return I;
}

Bump::Bump(double t0, double t1, double integral) : t0_(t0), t1_(t1), integral_(integral) {
  if (!(t1 > t0)) throw DomainError("bump interval must be nonempty");
  K_ = integral / ((t1 - t0) * unit_integral());
}

double Bump::eval(double t, int order) const {
  if (K_ == 0.0 || t <= t0_ || t >= t1_) return 0.0;
  const double L = t1_ - t0_, s = (t - t0_) / L;
  const double w = s * (1.0 - s), dw = 1.0 - 2.0 * s;
  const double phi = std::exp(-1.0 / w);
  if (order == 0) return K_ * phi;
  const double g1 = dw / (w * w);
  if (order == 1) return K_ * phi * g1 / L;
  const double g2 = -2.0 / (w * w) - 2.0 * dw * dw / (w * w * w);
  return K_ * phi * (g1 * g1 + g2) / (L * L);
}

std::string to_string(StageKind k) {
  switch (k) {
    case StageKind::shear_x1: return "shear_x1";
    case StageKind::shear_x2: return "shear_x2";
    case StageKind::cellular: return "cellular";
    case StageKind::cellular_matrix: return "cellular_matrix";
  }
  return "?";
}

StageKind stage_kind_from_string(const std::string& s) {
  for (auto k : {StageKind::shear_x1, StageKind::shear_x2, StageKind::cellular, StageKind::cellular_matrix})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown stage kind: " + s);
}

double circle_delta(double a, double b) {
  double d = std::remainder(b - a, 2.0 * kPi);
  if (d <= -kPi) d += 2.0 * kPi;
  return d;
}

double signed_angle(const Vec2& u, const Vec2& v) {
  const double ang = std::atan2(u(0) * v(1) - u(1) * v(0), u.dot(v));
  return ang <= -kPi ? ang + 2.0 * kPi : ang;
}

ControlPlan build_position_plan(const Vec2& x0, const Vec2& target, const PhysicalParams& p) {
  p.validate();
  ControlPlan plan;
  plan.label = "position";
  plan.x0 = wrap_point(x0);
  plan.x_target = wrap_point(target);
  const double a0 = plan.x0(0), b0 = plan.x0(1), a1 = plan.x_target(0), b1 = plan.x_target(1);
  plan.stages.push_back({StageKind::shear_x1, Bump(0.0, 0.25, circle_delta(a0, a1)), 0.0, b0});
  plan.stages.push_back({StageKind::shear_x2, Bump(0.25, 0.5, circle_delta(b0, b1)), a1, 0.0});
  plan.horizon = 0.5;
  return plan;
}

ControlPlan build_direction_plan(const Vec2& v_mid, const Vec2& target, const Vec2& position, const PhysicalParams& p) {
  p.validate();
  if (std::abs(v_mid.norm() - 1.0) > 1e-12 || std::abs(target.norm() - 1.0) > 1e-12)
    throw DomainError("direction plan needs unit vectors");
  ControlPlan plan;
  plan.label = "direction";
  plan.x0 = plan.x_target = wrap_point(position);
  plan.v0 = v_mid;
  plan.v_target = target;
  plan.has_direction = true;
  plan.stages.push_back({StageKind::cellular, Bump(0.5, 1.0, signed_angle(v_mid, target)), plan.x0(0), plan.x0(1)});
  plan.horizon = 1.0;
  return plan;
}

ControlPlan build_steering_plan(const Vec2& x0, const Vec2& x_target, const Vec2& v0, const Vec2& v_target,
                                const PhysicalParams& p) {
  ControlPlan plan = build_position_plan(x0, x_target, p);
  const ControlPlan dir = build_direction_plan(v0, v_target, x_target, p);
  plan.label = "steering";
  plan.stages.push_back(dir.stages.front());
  plan.v0 = v0;
  plan.v_target = v_target;
  plan.has_direction = true;
  plan.horizon = 1.0;
  return plan;
}

ControlPlan build_matrix_plan(double M, const Vec2& position, const PhysicalParams& p) {
  p.validate();
  if (!(M >= 1.0)) throw DomainError("matrix target must be at least 1");
  ControlPlan plan;
  plan.label = "matrix";
  plan.x0 = plan.x_target = wrap_point(position);
  plan.matrix_target = M;
  plan.has_matrix = true;
  plan.stages.push_back({StageKind::cellular_matrix, Bump(0.0, 1.0, std::log(M)), plan.x0(0), plan.x0(1)});
  plan.horizon = 1.0;
  return plan;
}

ControlForcing plan_forcing(const ControlPlan& plan, double t, int n, const PhysicalParams& p) {
  ControlForcing h{ScalarField(n), ScalarField(n)};
  const ControlStage* s = active_stage(plan, t);
  if (!s) return h;
  const Amplitudes A = amplitudes(*s, t, p);
  const double fc = A.f * A.c, a = s->a, b = s->b;
  auto prod = [&](int j1, int m1, int k2, int m2) {
    // trig in (x1 - a) of index j1 times trig in (x2 - b) of index k2
    const ScalarField l = j1 ? wave(n, 1, 0, m1, 1.0, a, b) : wave(n, 0, 1, m1, 1.0, a, b);
    return product(l, wave(n, 0, k2, m2, 1.0, a, b));
  };
  switch (s->kind) {
    case StageKind::shear_x1:
      h.hp = wave(n, 0, 2, 1, 0.5 * fc, a, b);
      h.hq = wave(n, 0, 1, 1, A.d, a, b);
      break;
    case StageKind::shear_x2:
      h.hp = wave(n, 1, 0, 0, A.d, a, b);
      break;
    case StageKind::cellular:
      h.hp = wave(n, 1, 0, 1, A.d, a, b);
      h.hp.axpy(-fc, prod(1, 0, 1, 1));
      h.hp.axpy(-0.5 * fc, wave(n, 0, 2, 1, 1.0, a, b));
      h.hq = wave(n, 0, 1, 0, A.d, a, b);
      h.hq.axpy(-fc, prod(1, 1, 1, 1));
      break;
    case StageKind::cellular_matrix:
      h.hp = wave(n, 1, 0, 1, A.d, a, b);
      h.hp.axpy(fc, prod(1, 0, 1, 1));
      h.hp.axpy(-0.5 * fc, wave(n, 0, 2, 1, 1.0, a, b));
      h.hq = wave(n, 0, 1, 0, -A.d, a, b);
      h.hq.axpy(fc, prod(1, 1, 1, 1));
      break;
  }
  return h;
}

ClosedForm closed_form(const ControlPlan& plan, double t, int n, const PhysicalParams& p) {
  ClosedForm cf{AugmentedState(n), AugmentedState(n), plan_forcing(plan, t, n, p)};
  const ControlStage* s = active_stage(plan, t);
  if (!s) return cf;
  const Amplitudes A = amplitudes(*s, t, p);
  const Profile pr = profile(*s, n);
  cf.state.U.omega = A.f * pr.omega;
  cf.state.U.theta = A.c * pr.P;
  cf.state.q = A.c * pr.Q;
  cf.rate.U.omega = A.df * pr.omega;
  cf.rate.U.theta = A.dc * pr.P;
  cf.rate.q = A.dc * pr.Q;
  return cf;
}

double closed_form_residual(const ControlPlan& plan, double t, int n, const PhysicalParams& p) {
  const ClosedForm cf = closed_form(plan, t, n, p);
  const ScalarField& w = cf.state.U.omega;
  const ScalarField& th = cf.state.U.theta;
  const ScalarField& q = cf.state.q;
  const VelocityField u = biot_savart(w);
  ScalarField Rw = cf.rate.U.omega - p.nu1 * laplacian(w) + transport(u, w);
  Rw.axpy(-p.g, partial(th, 0));
  Rw.axpy(-p.g, q);
  ScalarField Rt = cf.rate.U.theta - p.nu2 * laplacian(th) + transport(u, th) + product(u.u1, q);
  Rt.axpy(-2.0 * p.nu2, partial(q, 0));
  Rt -= cf.h.hp;
  ScalarField Rq = cf.rate.q - p.nu2 * laplacian(q) + transport(u, q);
  Rq -= cf.h.hq;
  // the x1-linear ansatz also needs q independent of x1
  return std::max({Rw.max_abs(), Rt.max_abs(), Rq.max_abs(), p.g * partial(q, 0).max_abs()});
}

namespace {

struct SimOutcome {
  SteeringReport rep;
  AugmentedState final_state;
};

SimOutcome simulate(const ControlPlan& plan, const PhysicalParams& p, const SteeringOptions& opt, double scale,
                    bool diagnostics) {
  if (!(opt.dt > 0.0)) throw ConfigError("steering time step must be positive");
  const GridSpec grid = GridSpec::make(opt.n);
  const ControlledIntegrator ci(grid, p, opt.dt, ControlScheme::lawson_rk4);
  const int steps = static_cast<int>(std::llround(plan.horizon / opt.dt));
  const int n = opt.n;
  const ForcingFn h = [&](double t) {
    ControlForcing f = plan_forcing(plan, t, n, p);
    if (scale != 1.0) {
      f.hp *= scale;
      f.hq *= scale;
    }
    return f;
  };
  SimOutcome out;
  SteeringReport& r = out.rep;
  // Jacobian kept as e.A * R: e.A orthogonal, R upper triangular, det from per-step blocks
  Mat2 R = Mat2::Identity();
  double log_det = 0.0;
  AugmentedState s(n);
  ExtendedState e;
  e.x = plan.x0;
  e.v = plan.v0;
  e.tau = plan.v0;
  std::array<ScalarField, 4> stages;
  double shear_end = 0.0;
  for (const auto& st : plan.stages)
    if (st.kind == StageKind::shear_x1 || st.kind == StageKind::shear_x2) shear_end = std::max(shear_end, st.bump.t1());
  for (int k = 0; k < steps; ++k) {
    const double t = k * opt.dt;
    AugmentedState next = ci.step(s, t, h, &stages);
    const PointVelocity v0(stages[0]), v1(stages[1]), v2(stages[2]), v3(stages[3]);
    e = step_extended(e, {&v0, &v1, &v2, &v3}, opt.dt);
    const Mat2 blk = factor_qr(e.A);
    log_det += std::log(blk(0, 0) * blk(1, 1));
    R = blk * R;
    s = std::move(next);
    const double tn = (k + 1) * opt.dt;
    if (!diagnostics) continue;
    const ControlStage* st = active_stage(plan, tn - 0.5 * opt.dt);
    const bool shear = st && (st->kind == StageKind::shear_x1 || st->kind == StageKind::shear_x2);
    if (tn <= shear_end + 1e-12)
      r.identity_error = std::max(r.identity_error, (e.A * R - Mat2::Identity()).cwiseAbs().maxCoeff());
    if (st && (st->kind == StageKind::cellular || st->kind == StageKind::cellular_matrix))
      r.cell_center_drift = std::max(r.cell_center_drift, torus_delta(e.x, Vec2(st->a, st->b)).norm());
    r.seam_jump = std::max(r.seam_jump, 2.0 * kPi * s.q.max_abs());
    if ((k + 1) % opt.checkpoint_every == 0 || k + 1 == steps) {
      const ClosedForm cf = closed_form(plan, tn, n, p);
      if (shear) r.shear_b_omega = std::max(r.shear_b_omega, nonlinear_B(cf.state.U, cf.state.U, grid).omega.max_abs());
      r.tracking_error = std::max({r.tracking_error, (s.U.omega - cf.state.U.omega).max_abs(),
                                   (s.U.theta - cf.state.U.theta).max_abs(), (s.q - cf.state.q).max_abs()});
    }
  }
  r.steps = steps;
  r.matrix_norm = Eigen::JacobiSVD<Mat2>(R).singularValues()(0);
  r.matrix_det_error = std::abs(std::expm1(log_det));
  e.A = e.A * R;
  r.final_particle = e;
  out.final_state = s;
  return out;
}

}  // namespace

SteeringReport verify_steering(const ControlPlan& plan, const PhysicalParams& p, const SteeringOptions& opt) {
  p.validate();
  SimOutcome sim = simulate(plan, p, opt, 1.0, true);
  SteeringReport& r = sim.rep;
  const ExtendedState& e = r.final_particle;
  r.position_error = torus_delta(e.x, plan.x_target).norm();
  if (plan.has_direction) r.angle_error = std::abs(signed_angle(e.v, plan.v_target));
  const AugmentedState& s = sim.final_state;
  r.state_return = std::sqrt(weighted_norm_sq(s.U, 0.0, p) + sobolev_norm_sq(s.q, 0.0));
  SetupRng rng(opt.seed, 77);
  for (const auto& st : plan.stages)
    for (int i = 0; i < opt.substitution_samples; ++i) {
      const double t = rng.uniform(st.bump.t0(), st.bump.t1());
      r.pde_residual = std::max(r.pde_residual, closed_form_residual(plan, t, opt.n, p));
    }
  return r;
}

double forcing_sensitivity(const ControlPlan& plan, const PhysicalParams& p, double eps, const SteeringOptions& opt) {
  const SimOutcome a = simulate(plan, p, opt, 1.0, false);
  const SimOutcome b = simulate(plan, p, opt, 1.0 + eps, false);
  return torus_delta(a.rep.final_particle.x, b.rep.final_particle.x).norm();
}

nlohmann::json to_json(const ControlPlan& plan) {
  nlohmann::json j;
  j["label"] = plan.label;
  j["horizon"] = plan.horizon;
  j["x0"] = {plan.x0(0), plan.x0(1)};
  j["x_target"] = {plan.x_target(0), plan.x_target(1)};
  j["v0"] = {plan.v0(0), plan.v0(1)};
  j["v_target"] = {plan.v_target(0), plan.v_target(1)};
  j["matrix_target"] = plan.matrix_target;
  j["has_direction"] = plan.has_direction;
  j["has_matrix"] = plan.has_matrix;
  j["bump_unit_integral"] = Bump::unit_integral();
  for (const auto& s : plan.stages)
    j["stages"].push_back({{"kind", to_string(s.kind)},
                           {"t0", s.bump.t0()},
                           {"t1", s.bump.t1()},
                           {"integral", s.bump.integral()},
                           {"a", s.a},
                           {"b", s.b}});
  return j;
}

ControlPlan plan_from_json(const nlohmann::json& j) {
  try {
    ControlPlan plan;
    plan.label = j.at("label").get<std::string>();
    plan.horizon = j.at("horizon").get<double>();
    auto vec = [&](const char* k) { return Vec2(j.at(k).at(0).get<double>(), j.at(k).at(1).get<double>()); };
    plan.x0 = vec("x0");
    plan.x_target = vec("x_target");
    plan.v0 = vec("v0");
    plan.v_target = vec("v_target");
    plan.matrix_target = j.at("matrix_target").get<double>();
    plan.has_direction = j.at("has_direction").get<bool>();
    plan.has_matrix = j.at("has_matrix").get<bool>();
    for (const auto& s : j.at("stages"))
      plan.stages.push_back({stage_kind_from_string(s.at("kind").get<std::string>()),
                             Bump(s.at("t0").get<double>(), s.at("t1").get<double>(), s.at("integral").get<double>()),
                             s.at("a").get<double>(), s.at("b").get<double>()});
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed control plan: ") + e.what());
  }
}

nlohmann::json to_json(const SteeringReport& r) {
  return {{"position_error", r.position_error}, {"angle_error", r.angle_error},
          {"matrix_norm", r.matrix_norm},       {"matrix_det_error", r.matrix_det_error},
          {"pde_residual", r.pde_residual},     {"tracking_error", r.tracking_error},
          {"state_return", r.state_return},     {"identity_error", r.identity_error},
          {"shear_b_omega", r.shear_b_omega},   {"cell_center_drift", r.cell_center_drift},
          {"seam_jump", r.seam_jump},           {"steps", r.steps}};
}

}  // namespace bq
