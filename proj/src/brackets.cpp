#include "bq/brackets.hpp"

#include "bq/errors.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace bq {

namespace {

double sgn(int m) { return (m & 1) ? -1.0 : 1.0; }

SpectralState sigma(int n, int j1, int j2, int m) { return trig_mode(n, j1, j2, m & 1, Slot::temperature); }
SpectralState psi(int n, int j1, int j2, int m) { return trig_mode(n, j1, j2, m & 1, Slot::vorticity); }

// value of cos(j.x) (m = 0) or sin(j.x) (m = 1)
double basis_at(int j1, int j2, int m, const Vec2& x) {
  const double a = j1 * x(0) + j2 * x(1);
  return (m & 1) ? std::sin(a) : std::cos(a);
}

}  // namespace

SpectralState lie_bracket_fd(const FieldMap& X, const FieldMap& Y, const SpectralState& U, double eps,
                             FdScheme scheme) {
  if (!(eps >= 1e-10)) throw DomainError("finite-difference step below the roundoff floor");
  const SpectralState x = X(U), y = Y(U);
  auto dir = [&](const FieldMap& f, const SpectralState& v) {
    SpectralState plus = U;
    plus.axpy(eps, v);
    if (scheme == FdScheme::forward) {
      SpectralState d = f(plus) - f(U);
      d *= 1.0 / eps;
      return d;
    }
    SpectralState minus = U;
    minus.axpy(-eps, v);
    SpectralState d = f(plus) - f(minus);
    d *= 0.5 / eps;
    return d;
  };
  return dir(Y, x) - dir(X, y);
}

FieldMap constant_map(SpectralState v) {
  return [v = std::move(v)](const SpectralState&) { return v; };
}

FieldMap drift_map(const PhysicalParams& p, const GridSpec& grid) {
  return [p, grid](const SpectralState& U) { return drift(U, p, grid); };
}

SpectralState Y_field(int j1, int j2, int m, const SpectralState& U, const PhysicalParams& p, const GridSpec& grid) {
  const int n = grid.n;
  const SpectralState s = sigma(n, j1, j2, m);
  SpectralState out = nonlinear_B(U, s, grid);
  out.axpy(p.nu2 * (j1 * j1 + j2 * j2), s);
  if (j1 != 0) out.axpy(sgn(m) * p.g * j1, psi(n, j1, j2, m + 1));
  return out;
}

SpectralState Z_field(int j1, int j2, int m, const SpectralState& U, const PhysicalParams& p, const GridSpec& grid) {
  const int n = grid.n;
  const double jj = j1 * j1 + j2 * j2;
  const double c = sgn(m) * p.g * j1;
  const SpectralState s = sigma(n, j1, j2, m);
  const SpectralState ps = psi(n, j1, j2, m + 1);
  const SpectralState BUs = nonlinear_B(U, s, grid);

  SpectralState out = nonlinear_B(drift(U, p, grid), s, grid);
  out.axpy(p.nu2 * p.nu2 * jj * jj, s);
  out.axpy(c * (p.nu1 + p.nu2) * jj, ps);
  out += linear_A(BUs, p);
  out.axpy(c, nonlinear_B(ps, U, grid));
  SpectralState inner = -p.nu2 * jj * s;
  inner.axpy(-c, ps);
  out -= nonlinear_B(U, inner, grid);
  out += nonlinear_B(U, BUs, grid);
  out -= buoyancy_G(BUs, p);
  return out;
}

SpectralState Z_sigma_bracket(int j1, int j2, int m, int k1, int k2, int mk, const PhysicalParams& p,
                              const GridSpec& grid) {
  const int n = grid.n;
  SpectralState out(n);
  if (j1 != 0) out.axpy(-sgn(m) * j1 * p.g, nonlinear_B(psi(n, j1, j2, m + 1), sigma(n, k1, k2, mk), grid));
  if (k1 != 0) out.axpy(sgn(mk) * k1 * p.g, nonlinear_B(psi(n, k1, k2, mk + 1), sigma(n, j1, j2, m), grid));
  return out;
}

SpectralState H_field(int j1, int j2, int m, int k1, int k2, int mk, const SpectralState& U, const PhysicalParams& p,
                      const GridSpec& grid) {
  const SpectralState h = Z_sigma_bracket(j1, j2, m, k1, k2, mk, p, grid);
  SpectralState r = linear_A(h, p);
  r += nonlinear_B(U, h, grid);
  return SpectralState(ScalarField(grid.n), r.theta);
}

SpectralState J_jm_field(int j1, int j2, int m, const SpectralState& U, double nhat, const PhysicalParams& p,
                         const GridSpec& grid) {
  const int n = grid.n;
  const double jj = j1 * j1 + j2 * j2;
  SpectralState out(n);
  if (j1 != 0) {
    const SpectralState s = sigma(n, j1, j2, m + 1);
    out = nonlinear_B(U, s, grid);
    out.axpy(p.nu2 * jj, s);
    out *= sgn(m) / (p.g * j1);
  } else {
    const double coef = (1.0 + jj) / (p.g * p.g * std::pow(jj, 1.5));
    auto H = [&](int a, int b) { return H_field(j1 + 1, j2, a, 1, 0, b, U, p, grid); };
    if (m == 0) {
      out = H(0, 0);
      out += H(1, 1);
      out *= -coef;
    } else {
      out = H(1, 0) - H(0, 1);
      out *= coef;
    }
  }
  out.omega = project_ball(std::move(out.omega), nhat);
  out.theta = project_ball(std::move(out.theta), nhat);
  return out;
}

SpectralState remove_noise(const SpectralState& U, const std::array<double, 4>& W, const PhysicalParams& p) {
  NoiseIncrement inc;
  inc.dw = W;
  const SpectralState s = noise_map(inc, p, U.n());
  SpectralState out = U;
  out.theta -= s.theta;
  out.omega.axpy(-p.g, partial(s.theta, 0));
  return out;
}

SpanField::SpanField(const SpectralState& UT, const std::array<double, 4>& WT, const PhysicalParams& p, int band)
    : p_(p), u_(UT.omega, band), ubar_(remove_noise(UT, WT, p).omega, band) {}

SpanVector SpanField::build(int j1, int j2, int m, const Vec2& x, double s_ub, double s_u) const {
  SpanVector out;
  if (j1 == 0) return out;
  const double jj = j1 * j1 + j2 * j2;
  const Vec2 j(j1, j2), jp(-j2, j1);
  const double a = sgn(m) * p_.g * j1 / jj, b = p_.g * j1 / jj, c = (p_.nu1 + p_.nu2) * p_.g * j1;
  const VelocityJet U = u_.jet(x, 2), Ub = ubar_.jet(x, 2);
  const Vec2 w = U.u + Ub.u;
  const Mat2 Dw = U.du + Ub.du;
  const Mat2 M = s_u * U.du + s_ub * Ub.du;
  const double P = basis_at(j1, j2, m + 1, x), Q = basis_at(j1, j2, m, x);
  const Vec2 gP = sgn(m) * Q * j, gQ = -sgn(m) * P * j;
  const double jw = j.dot(w);
  const Vec2 gjw = Dw.transpose() * j;
  out.v = a * P * jw * jp - b * Q * (M * jp) - c * Q * jp;
  for (int k = 0; k < 2; ++k) {
    const Mat2 M2 = s_u * U.d2u[k] + s_ub * Ub.d2u[k];
    out.dv.col(k) = a * (gP(k) * jw + P * gjw(k)) * jp - b * (gQ(k) * (M * jp) + Q * (M2 * jp)) - c * gQ(k) * jp;
  }
  return out;
}

SpanVector SpanField::eval(int j1, int j2, int m, const Vec2& x) const { return build(j1, j2, m, x, 1.0, 1.0); }

SpanVector SpanField::eval_bracket_sign(int j1, int j2, int m, const Vec2& x) const {
  return build(j1, j2, m, x, 1.0, -1.0);
}

Vec2 span_from_definitions(int j1, int j2, int m, const SpectralState& UT, const std::array<double, 4>& WT,
                           const PhysicalParams& p, const GridSpec& grid, const Vec2& x) {
  const SpectralState Ub = remove_noise(UT, WT, p);
  const int band = grid.n / 2 - 1;
  const Vec2 z = PointVelocity(Z_field(j1, j2, m, Ub, p, grid).omega, band).jet(x, 0).u;
  const VelocityJet y = PointVelocity(Y_field(j1, j2, m, Ub, p, grid).omega, band).jet(x, 1);
  const VelocityJet u = PointVelocity(UT.omega, band).jet(x, 1);
  return z + y.du * u.u - u.du * y.u;
}

std::vector<std::array<int, 2>> span_wavevectors(double N) {
  std::vector<std::array<int, 2>> out;
  const int r = static_cast<int>(std::floor(N));
  for (int j1 = 1; j1 <= r; ++j1)
    for (int j2 = -r; j2 <= r; ++j2)
      if (j1 * j1 + j2 * j2 <= N * N + 1e-12) out.push_back({j1, j2});
  return out;
}

double span_check(SpanKind kind, const SpanState& s, const SpanField& field, double N) {
  if (kind == SpanKind::two_point && torus_delta(s.x, s.y).norm() < 1e-8)
    throw DomainError("two-point span check needs distinct points");
  const auto js = span_wavevectors(N);
  const int dim = kind == SpanKind::jacobian ? 5 : 4;
  Eigen::MatrixXd S(2 * js.size(), dim);
  int row = 0;
  for (const auto& j : js)
    for (int m = 0; m < 2; ++m) {
      const SpanVector a = field.eval(j[0], j[1], m, wrap_point(s.x));
      Eigen::VectorXd r(dim);
      r.head<2>() = a.v;
      switch (kind) {
        case SpanKind::two_point:
          r.tail<2>() = field.eval(j[0], j[1], m, wrap_point(s.y)).v;
          break;
        case SpanKind::tangent:
          r.tail<2>() = a.dv * s.tau;
          break;
        case SpanKind::jacobian: {
          const Mat2 T = a.dv - 0.5 * a.dv.trace() * Mat2::Identity();
          r(2) = T(0, 0);
          r(3) = T(0, 1);
          r(4) = T(1, 0);
          break;
        }
      }
      S.row(row++) = r.transpose();
    }
  if (row < dim) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(S).singularValues().minCoeff();
}

std::string to_string(SpanKind k) {
  switch (k) {
    case SpanKind::two_point: return "two_point";
    case SpanKind::tangent: return "tangent";
    case SpanKind::jacobian: return "jacobian";
  }
  return "?";
}

}  // namespace bq
