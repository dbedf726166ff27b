#include "bq/linearization.hpp"

#include "bq/errors.hpp"

namespace bq {

namespace {

constexpr double kStageC[4] = {0.0, 0.5, 0.5, 1.0};
constexpr double kStageW[4] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};

void check_index(const BaseTrajectory& base, int k) {
  if (k < 0 || k >= base.steps()) throw DomainError("step index outside the stored base trajectory");
}

}  // namespace

BaseTrajectory::BaseTrajectory(const Integrator& integ, SpectralState U0, ExtendedState e0, const CounterRng& rng,
                               std::uint64_t first_step, int steps)
    : integ_(integ) {
  U_.push_back(std::move(U0));
  ext_.push_back(e0);
  for (int k = 0; k < steps; ++k) inc_.push_back(draw_increment(rng, first_step + k, integ.dt()));
  run(steps);
}

BaseTrajectory::BaseTrajectory(const Integrator& integ, SpectralState U0, ExtendedState e0,
                               std::vector<NoiseIncrement> incs, int steps)
    : integ_(integ) {
  U_.push_back(std::move(U0));
  ext_.push_back(e0);
  if (incs.empty()) incs.assign(steps, NoiseIncrement{{}, integ.dt()});
  if (static_cast<int>(incs.size()) < steps) throw DomainError("not enough noise increments for the base");
  incs.resize(steps);
  inc_ = std::move(incs);
  run(steps);
}

void BaseTrajectory::run(int steps) {
  const int cut = integ_.grid().dealias_cut;
  for (int k = 0; k < steps; ++k) {
    ph_.push_back(integ_.physical(U_[k]));
    ParticleStep rec;
    const PointVelocity pv(U_[k].omega, cut);
    ext_.push_back(step_extended(ext_[k], pv, integ_.dt(), &rec, 3));
    rec_.push_back(rec);
    U_.push_back(integ_.step(U_[k], inc_[k]));
  }
}

VariationState& VariationState::axpy(double s, const VariationState& o) {
  psi.axpy(s, o.psi);
  y += s * o.y;
  zeta += s * o.zeta;
  Bmat += s * o.Bmat;
  return *this;
}

double variation_inner(const VariationState& a, const VariationState& b, const PhysicalParams& p, double s) {
  return weighted_inner(a.psi, b.psi, s, p) + a.y.dot(b.y) + a.zeta.dot(b.zeta) + (a.Bmat.array() * b.Bmat.array()).sum();
}

double variation_norm(const VariationState& a, const PhysicalParams& p, double s) {
  return std::sqrt(variation_inner(a, a, p, s));
}

VariationState step_first_variation(const VariationState& var, const BaseTrajectory& base, int k) {
  check_index(base, k);
  const Integrator& I = base.integrator();
  const double dt = I.dt();
  const ExtendedState& e = base.ext(k);
  const ParticleStep& rec = base.particle(k);
  const PointVelocity wpv(var.psi.omega, I.grid().dealias_cut);

  VariationState out(var.psi.n());
  out.psi = I.decay(var.psi);
  out.psi += I.phi1(I.tangent_term(base.fields(k), var.psi));

  Vec2 kt = Vec2::Zero(), ky = Vec2::Zero(), kz = Vec2::Zero();
  Mat2 kA = Mat2::Zero(), kB = Mat2::Zero();
  out.y = var.y;
  out.zeta = var.zeta;
  out.Bmat = var.Bmat;
  for (int st = 0; st < 4; ++st) {
    const double h = kStageC[st] * dt;
    const Vec2 tau = e.tau + h * kt;
    const Mat2 A = e.A + h * kA;
    const Vec2 y = var.y + h * ky;
    const Vec2 z = var.zeta + h * kz;
    const Mat2 B = var.Bmat + h * kB;
    const VelocityJet& J = rec.jets[st];
    const VelocityJet W = wpv.jet(wrap_point(rec.xs[st]), 1);
    const Mat2 M = J.d2u_along(y) + W.du;
    kt = J.du * tau;
    kA = J.du * A;
    ky = J.du * y + W.u;
    kz = J.du * z + M * tau;
    kB = J.du * B + M * A;
    out.y += kStageW[st] * dt * ky;
    out.zeta += kStageW[st] * dt * kz;
    out.Bmat += kStageW[st] * dt * kB;
  }
  return out;
}

SecondVariationState step_second_variation(const SecondVariationState& sec, const VariationState& var,
                                           const BaseTrajectory& base, int k) {
  check_index(base, k);
  const Integrator& I = base.integrator();
  const GridSpec& grid = I.grid();
  const double dt = I.dt();
  const ExtendedState& e = base.ext(k);
  const ParticleStep& rec = base.particle(k);
  const PointVelocity w1(var.psi.omega, grid.dealias_cut);
  const PointVelocity w2(sec.phi.omega, grid.dealias_cut);

  SecondVariationState out(sec.phi.n());
  SpectralState src = I.tangent_term(base.fields(k), sec.phi);
  if (I.options().nonlinear) src.axpy(-2.0, nonlinear_B(var.psi, var.psi, grid));
  out.phi = I.decay(sec.phi);
  out.phi += I.phi1(src);

  Vec2 kt = Vec2::Zero(), ky = Vec2::Zero(), kzeta = Vec2::Zero(), kz = Vec2::Zero(), kxi = Vec2::Zero();
  Mat2 kA = Mat2::Zero(), kB = Mat2::Zero(), kC = Mat2::Zero();
  out.z = sec.z;
  out.xi = sec.xi;
  out.Cmat = sec.Cmat;
  for (int st = 0; st < 4; ++st) {
    const double h = kStageC[st] * dt;
    const Vec2 tau = e.tau + h * kt;
    const Mat2 A = e.A + h * kA;
    const Vec2 y = var.y + h * ky;
    const Vec2 zeta = var.zeta + h * kzeta;
    const Mat2 B = var.Bmat + h * kB;
    const Vec2 z = sec.z + h * kz;
    const Vec2 xi = sec.xi + h * kxi;
    const Mat2 C = sec.Cmat + h * kC;
    const VelocityJet& J = rec.jets[st];
    const Vec2 xs = wrap_point(rec.xs[st]);
    const VelocityJet W1 = w1.jet(xs, 2);
    const VelocityJet W2 = w2.jet(xs, 1);
    const Mat2 M1 = J.d2u_along(y) + W1.du;
    const Mat2 M2 = J.d2u_along(z) + J.d3u_along(y, y) + 2.0 * W1.d2u_along(y) + W2.du;
    kt = J.du * tau;
    kA = J.du * A;
    ky = J.du * y + W1.u;
    kzeta = J.du * zeta + M1 * tau;
    kB = J.du * B + M1 * A;
    kz = J.du * z + J.d2u_apply(y, y) + 2.0 * W1.du * y + W2.u;
    kxi = J.du * xi + 2.0 * M1 * zeta + M2 * tau;
    kC = J.du * C + 2.0 * M1 * B + M2 * A;
    out.z += kStageW[st] * dt * kz;
    out.xi += kStageW[st] * dt * kxi;
    out.Cmat += kStageW[st] * dt * kC;
  }
  return out;
}

VariationState jacobian_action(const VariationState& p, int s, int t, const BaseTrajectory& base) {
  if (s > t) throw DomainError("jacobian_action needs s <= t");
  if (t > base.steps()) throw DomainError("end time beyond the stored base trajectory");
  VariationState v = p;
  for (int k = s; k < t; ++k) v = step_first_variation(v, base, k);
  return v;
}

FlowPoint flow(const FlowPoint& start, int s, int t, const BaseTrajectory& base) {
  if (s > t || t > base.steps()) throw DomainError("flow interval outside the base trajectory");
  const Integrator& I = base.integrator();
  FlowPoint f = start;
  for (int k = s; k < t; ++k) {
    const PointVelocity pv(f.U.omega, I.grid().dealias_cut);
    f.e = step_extended(f.e, pv, I.dt());
    f.U = I.step(f.U, base.increment(k));
  }
  return f;
}

FlowPoint perturb(const FlowPoint& start, const VariationState& p, double eps) {
  FlowPoint f = start;
  f.U.axpy(eps, p.psi);
  f.e.x = wrap_point(f.e.x + eps * p.y);
  f.e.tau += eps * p.zeta;
  f.e.A += eps * p.Bmat;
  return f;
}

VariationState difference(const FlowPoint& a, const FlowPoint& b, double scale) {
  VariationState d(a.U.n());
  d.psi = a.U - b.U;
  d.psi *= 1.0 / scale;
  d.y = torus_delta(a.e.x, b.e.x) / scale;
  d.zeta = (a.e.tau - b.e.tau) / scale;
  d.Bmat = (a.e.A - b.e.A) / scale;
  return d;
}

}  // namespace bq
