#include "bq/spectral.hpp"

#include "bq/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace bq {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFourPiSq = 4.0 * std::numbers::pi * std::numbers::pi;

void require_same_n(const ScalarField& a, const ScalarField& b) {
  if (a.n() != b.n()) throw DomainError("field resolutions differ");
}
}  // namespace

GridSpec GridSpec::make(int n, int cut) {
  if (n < 8 || n % 2 != 0) throw DomainError("grid size must be even and >= 8, got " + std::to_string(n));
  if (cut < 0) cut = n / 3;
  if (cut < 1 || cut > n / 2) throw DomainError("dealias cut out of range");
  return GridSpec{n, cut};
}

double PhysicalParams::kappa() const { return std::min(nu1, nu2); }
double PhysicalParams::varkappa() const { return nu1 * nu2 / (g * g); }

void PhysicalParams::validate() const {
  if (!(nu1 > 0.0) || !(nu2 > 0.0)) throw DomainError("viscosity and diffusivity must be positive");
  if (g == 0.0 || !std::isfinite(g)) throw DomainError("buoyancy coefficient must be finite and nonzero");
  for (double a : alpha)
    if (!std::isfinite(a)) throw DomainError("noise amplitudes must be finite");
}

ScalarField::ScalarField(int n) : n_(n), c_(static_cast<std::size_t>(n) * (n / 2 + 1)) {}

cplx ScalarField::coeff(int k1, int k2) const {
  const int h = n_ / 2;
  if (std::abs(k1) >= h || std::abs(k2) >= h) return 0.0;
  if (k2 < 0) return std::conj(c_[index((-k1 + n_) % n_, -k2)]);
  return c_[index((k1 + n_) % n_, k2)];
}

void ScalarField::set(int k1, int k2, cplx c) {
  const int h = n_ / 2;
  if (std::abs(k1) >= h || std::abs(k2) >= h) throw DomainError("mode outside the grid");
  if (k2 < 0) {
    k1 = -k1;
    k2 = -k2;
    c = std::conj(c);
  }
  if (k2 > 0) {
    c_[index((k1 + n_) % n_, k2)] = c;
  } else if (k1 == 0) {
    c_[0] = c.real();
  } else {
    c_[index((k1 + n_) % n_, 0)] = c;
    c_[index((-k1 + n_) % n_, 0)] = std::conj(c);
  }
}

void ScalarField::zero() { std::fill(c_.begin(), c_.end(), cplx(0.0)); }

bool ScalarField::finite() const {
  for (const auto& c : c_)
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  return true;
}

double ScalarField::max_abs() const {
  double m = 0.0;
  for (const auto& c : c_) m = std::max(m, std::abs(c));
  return m;
}

int ScalarField::support_radius() const {
  int r = 0;
  for (int i1 = 0; i1 < n_; ++i1)
    for (int i2 = 0; i2 < half(); ++i2)
      if (c_[index(i1, i2)] != 0.0) r = std::max({r, std::abs(k1_at(i1)), i2});
  return r;
}

ScalarField& ScalarField::operator+=(const ScalarField& o) {
  require_same_n(*this, o);
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& o) {
  require_same_n(*this, o);
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
  return *this;
}

ScalarField& ScalarField::operator*=(double s) {
  for (auto& c : c_) c *= s;
  return *this;
}

ScalarField& ScalarField::axpy(double s, const ScalarField& o) {
  require_same_n(*this, o);
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += s * o.c_[i];
  return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(double s, ScalarField a) { return a *= s; }

SpectralState& SpectralState::operator+=(const SpectralState& o) {
  omega += o.omega;
  theta += o.theta;
  return *this;
}
SpectralState& SpectralState::operator-=(const SpectralState& o) {
  omega -= o.omega;
  theta -= o.theta;
  return *this;
}
SpectralState& SpectralState::operator*=(double s) {
  omega *= s;
  theta *= s;
  return *this;
}
SpectralState& SpectralState::axpy(double s, const SpectralState& o) {
  omega.axpy(s, o.omega);
  theta.axpy(s, o.theta);
  return *this;
}
SpectralState operator+(SpectralState a, const SpectralState& b) { return a += b; }
SpectralState operator-(SpectralState a, const SpectralState& b) { return a -= b; }
SpectralState operator*(double s, SpectralState a) { return a *= s; }

Fft::Fft(int n) : n_(n) {
  const int h = n / 2 + 1;
  std::vector<double> r(static_cast<std::size_t>(n) * n);
  auto* c = fftw_alloc_complex(static_cast<std::size_t>(n) * h);
  fwd_ = fftw_plan_dft_r2c_2d(n, n, r.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
  bwd_ = fftw_plan_dft_c2r_2d(n, n, c, r.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(c);
  if (!fwd_ || !bwd_) throw Error("FFTW planning failed");
}

Fft::~Fft() {
  fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(bwd_));
}

void Fft::to_physical(const ScalarField& f, double* out) const {
  if (f.n() != n_) throw DomainError("field resolution does not match transform");
  std::vector<cplx> buf(f.data(), f.data() + f.size());
  const int h = n_ / 2 + 1;
  for (int i2 = 0; i2 < h; ++i2) buf[static_cast<std::size_t>(n_ / 2) * h + i2] = 0.0;
  for (int i1 = 0; i1 < n_; ++i1) buf[static_cast<std::size_t>(i1) * h + n_ / 2] = 0.0;
  fftw_execute_dft_c2r(static_cast<fftw_plan>(bwd_), reinterpret_cast<fftw_complex*>(buf.data()), out);
}

void Fft::to_spectral(const double* in, ScalarField& f) const {
  if (f.n() != n_) f = ScalarField(n_);
  std::vector<double> work(in, in + static_cast<std::size_t>(n_) * n_);
  fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), work.data(), reinterpret_cast<fftw_complex*>(f.data()));
  const int h = n_ / 2 + 1;
  const double scale = 1.0 / (static_cast<double>(n_) * n_);
  cplx* c = f.data();
  for (std::size_t i = 0; i < f.size(); ++i) c[i] *= scale;
  for (int i2 = 0; i2 < h; ++i2) c[f.index(n_ / 2, i2)] = 0.0;
  for (int i1 = 0; i1 < n_; ++i1) c[f.index(i1, n_ / 2)] = 0.0;
  c[0] = 0.0;
  for (int i1 = 1; i1 < n_ / 2; ++i1) {
    const cplx avg = 0.5 * (c[f.index(i1, 0)] + std::conj(c[f.index(n_ - i1, 0)]));
    c[f.index(i1, 0)] = avg;
    c[f.index(n_ - i1, 0)] = std::conj(avg);
  }
}

const Fft& fft_for(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<Fft>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Fft>(n);
  return *slot;
}

bool in_upper_half(int j1, int j2) { return j1 > 0 || (j1 == 0 && j2 > 0); }

ScalarField trig_scalar(int n, int j1, int j2, int m, double amp, double phase) {
  if (j1 == 0 && j2 == 0) throw DomainError("trigonometric mode needs j != 0");
  if (std::abs(j1) >= n / 2 || std::abs(j2) >= n / 2) throw DomainError("mode outside the grid");
  ScalarField f(n);
  const cplx rot = std::polar(0.5 * amp, -phase);
  f.set(j1, j2, (m % 2 == 0) ? rot : cplx(0.0, -1.0) * rot);
  return f;
}

SpectralState trig_mode(int n, int j1, int j2, int m, Slot slot) {
  if (!in_upper_half(j1, j2)) throw DomainError("basis index must lie in the upper half lattice");
  if (m != 0 && m != 1) throw DomainError("basis parity must be 0 or 1");
  SpectralState U(n);
  (slot == Slot::temperature ? U.theta : U.omega) = trig_scalar(n, j1, j2, m);
  return U;
}

VelocityField biot_savart(const ScalarField& omega) {
  if (omega.coeff(0, 0) != 0.0) throw DomainError("vorticity has a nonzero mean");
  const int n = omega.n();
  VelocityField u{ScalarField(n), ScalarField(n)};
  for (int i1 = 0; i1 < n; ++i1) {
    const double k1 = omega.k1_at(i1);
    for (int i2 = 0; i2 < omega.half(); ++i2) {
      const double k2 = i2;
      const double kk = k1 * k1 + k2 * k2;
      if (kk == 0.0) continue;
      const std::size_t idx = omega.index(i1, i2);
      const cplx w = omega.data()[idx] / kk;
      u.u1.data()[idx] = cplx(0.0, k2) * w;
      u.u2.data()[idx] = cplx(0.0, -k1) * w;
    }
  }
  return u;
}

ScalarField partial(const ScalarField& f, int axis) {
  ScalarField d(f.n());
  for (int i1 = 0; i1 < f.n(); ++i1) {
    const double k = axis == 0 ? f.k1_at(i1) : 0.0;
    for (int i2 = 0; i2 < f.half(); ++i2) {
      const std::size_t idx = f.index(i1, i2);
      d.data()[idx] = cplx(0.0, axis == 0 ? k : static_cast<double>(i2)) * f.data()[idx];
    }
  }
  return d;
}

ScalarField laplacian(const ScalarField& f) {
  ScalarField d(f.n());
  for (int i1 = 0; i1 < f.n(); ++i1) {
    const double k1 = f.k1_at(i1);
    for (int i2 = 0; i2 < f.half(); ++i2) {
      const std::size_t idx = f.index(i1, i2);
      d.data()[idx] = -(k1 * k1 + double(i2) * i2) * f.data()[idx];
    }
  }
  return d;
}

ScalarField inverse_laplacian(const ScalarField& f) {
  ScalarField d(f.n());
  for (int i1 = 0; i1 < f.n(); ++i1) {
    const double k1 = f.k1_at(i1);
    for (int i2 = 0; i2 < f.half(); ++i2) {
      const double kk = k1 * k1 + double(i2) * i2;
      if (kk == 0.0) continue;
      const std::size_t idx = f.index(i1, i2);
      d.data()[idx] = -f.data()[idx] / kk;
    }
  }
  return d;
}

ScalarField curl(const VelocityField& u) { return partial(u.u2, 0) - partial(u.u1, 1); }

ScalarField dealias(ScalarField f, int cut) {
  for (int i1 = 0; i1 < f.n(); ++i1) {
    const int k1 = std::abs(f.k1_at(i1));
    for (int i2 = 0; i2 < f.half(); ++i2)
      if (k1 > cut || i2 > cut) f.data()[f.index(i1, i2)] = 0.0;
  }
  return f;
}

ScalarField project_ball(ScalarField f, double radius) {
  const double r2 = radius * radius;
  for (int i1 = 0; i1 < f.n(); ++i1) {
    const double k1 = f.k1_at(i1);
    for (int i2 = 0; i2 < f.half(); ++i2)
      if (k1 * k1 + double(i2) * i2 > r2) f.data()[f.index(i1, i2)] = 0.0;
  }
  return f;
}

ScalarField multiply(const ScalarField& a, const ScalarField& b, const GridSpec& grid) {
  require_same_n(a, b);
  const Fft& fft = fft_for(a.n());
  const std::size_t np = static_cast<std::size_t>(a.n()) * a.n();
  std::vector<double> pa(np), pb(np);
  fft.to_physical(dealias(a, grid.dealias_cut), pa.data());
  fft.to_physical(dealias(b, grid.dealias_cut), pb.data());
  for (std::size_t i = 0; i < np; ++i) pa[i] *= pb[i];
  ScalarField out(a.n());
  fft.to_spectral(pa.data(), out);
  return dealias(std::move(out), grid.dealias_cut);
}

ScalarField multiply_exact(const ScalarField& a, const ScalarField& b) {
  require_same_n(a, b);
  const int n = a.n();
  const int h = n / 2;
  struct Term {
    int k1, k2;
    cplx c;
  };
  auto terms = [&](const ScalarField& f) {
    std::vector<Term> t;
    for (int k1 = -h + 1; k1 < h; ++k1)
      for (int k2 = -h + 1; k2 < h; ++k2) {
        const cplx c = f.coeff(k1, k2);
        if (c != 0.0) t.push_back({k1, k2, c});
      }
    return t;
  };
  const auto ta = terms(a), tb = terms(b);
  std::map<std::pair<int, int>, cplx> acc;
  for (const auto& x : ta)
    for (const auto& y : tb) acc[{x.k1 + y.k1, x.k2 + y.k2}] += x.c * y.c;
  ScalarField out(n);
  for (const auto& [k, c] : acc) {
    const auto [k1, k2] = k;
    if (std::abs(k1) >= h || std::abs(k2) >= h) continue;
    if (in_upper_half(k1, k2)) out.set(k1, k2, c);
  }
  return out;
}

ScalarField advect(const VelocityField& u, const ScalarField& f, const GridSpec& grid) {
  const int n = f.n();
  const Fft& fft = fft_for(n);
  const std::size_t np = static_cast<std::size_t>(n) * n;
  std::vector<double> u1(np), u2(np), f1(np), f2(np);
  const ScalarField fd = dealias(f, grid.dealias_cut);
  fft.to_physical(dealias(u.u1, grid.dealias_cut), u1.data());
  fft.to_physical(dealias(u.u2, grid.dealias_cut), u2.data());
  fft.to_physical(partial(fd, 0), f1.data());
  fft.to_physical(partial(fd, 1), f2.data());
  for (std::size_t i = 0; i < np; ++i) u1[i] = u1[i] * f1[i] + u2[i] * f2[i];
  ScalarField out(n);
  fft.to_spectral(u1.data(), out);
  return dealias(std::move(out), grid.dealias_cut);
}

double sobolev_inner(const ScalarField& a, const ScalarField& b, double s) {
  require_same_n(a, b);
  double sum = 0.0;
  for (int i1 = 0; i1 < a.n(); ++i1) {
    const double k1 = a.k1_at(i1);
    for (int i2 = 0; i2 < a.half(); ++i2) {
      const std::size_t idx = a.index(i1, i2);
      const cplx ca = a.data()[idx], cb = b.data()[idx];
      if (ca == 0.0 || cb == 0.0) continue;
      const double w = (i2 == 0 ? 1.0 : 2.0) * std::pow(1.0 + k1 * k1 + double(i2) * i2, s);
      sum += w * (ca.real() * cb.real() + ca.imag() * cb.imag());
    }
  }
  return kFourPiSq * sum;
}

double sobolev_norm_sq(const ScalarField& f, double s) { return sobolev_inner(f, f, s); }

double weighted_inner(const SpectralState& U, const SpectralState& V, double s, const PhysicalParams& p) {
  return p.varkappa() * sobolev_inner(U.omega, V.omega, s) + sobolev_inner(U.theta, V.theta, s);
}

double weighted_norm_sq(const SpectralState& U, double s, const PhysicalParams& p) {
  return weighted_inner(U, U, s, p);
}

double eval_physical(const ScalarField& f, const Vec2& x) {
  const int n = f.n();
  std::vector<cplx> e1(n), e2(f.half());
  for (int i1 = 0; i1 < n; ++i1) e1[i1] = std::polar(1.0, f.k1_at(i1) * x(0));
  for (int i2 = 0; i2 < f.half(); ++i2) e2[i2] = std::polar(1.0, i2 * x(1));
  double sum = 0.0;
  for (int i1 = 0; i1 < n; ++i1) {
    cplx row0 = 0.0, row = 0.0;
    row0 = f.data()[f.index(i1, 0)];
    for (int i2 = 1; i2 < f.half(); ++i2) row += f.data()[f.index(i1, i2)] * e2[i2];
    sum += (e1[i1] * (row0 + 2.0 * row)).real();
  }
  return sum;
}

Vec2 wrap_point(const Vec2& x) {
  Vec2 y;
  for (int i = 0; i < 2; ++i) {
    double v = std::fmod(x(i), kTwoPi);
    if (v < 0.0) v += kTwoPi;
    if (v >= kTwoPi) v = 0.0;
    y(i) = v;
  }
  return y;
}

Vec2 torus_delta(const Vec2& a, const Vec2& b) {
  Vec2 d;
  for (int i = 0; i < 2; ++i) {
    double v = std::remainder(a(i) - b(i), kTwoPi);
    if (v <= -std::numbers::pi) v += kTwoPi;
    d(i) = v;
  }
  return d;
}

Mat2 VelocityJet::d3u_along(const Vec2& y, const Vec2& z) const {
  Mat2 m = Mat2::Zero();
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) m += d3u[k][l] * (y(k) * z(l));
  return m;
}

PointVelocity::PointVelocity(const ScalarField& omega, int band) {
  const int n = omega.n();
  band_ = (band < 0 || band > n / 2 - 1) ? n / 2 - 1 : band;
  const int w = band_ + 1;
  coef_.assign(static_cast<std::size_t>(2 * band_ + 1) * w, 0.0);
  for (int k1 = -band_; k1 <= band_; ++k1)
    for (int k2 = 0; k2 <= band_; ++k2) {
      const double kk = double(k1) * k1 + double(k2) * k2;
      if (kk == 0.0) continue;
      const cplx c = omega.coeff(k1, k2);
      coef_[static_cast<std::size_t>(k1 + band_) * w + k2] = (k2 == 0 ? 1.0 : 2.0) * (-c / kk);
    }
}

VelocityJet PointVelocity::jet(const Vec2& x, int order) const {
  VelocityJet J;
  if (coef_.empty()) return J;
  const int top = order + 1;  // highest stream-function derivative
  const int w = band_ + 1;
  std::vector<cplx> e2(w);
  for (int k2 = 0; k2 <= band_; ++k2) e2[k2] = std::polar(1.0, k2 * x(1));
  // T[a][b] = sum_k z_k k1^a k2^b
  cplx T[5][5] = {};
  std::array<cplx, 5> row;
  for (int k1 = -band_; k1 <= band_; ++k1) {
    row.fill(0.0);
    const cplx* c = &coef_[static_cast<std::size_t>(k1 + band_) * w];
    for (int k2 = 0; k2 <= band_; ++k2) {
      if (c[k2] == 0.0) continue;
      cplx z = c[k2] * e2[k2];
      for (int b = 0; b <= top; ++b) {
        row[b] += z;
        z *= double(k2);
      }
    }
    const cplx e1 = std::polar(1.0, k1 * x(0));
    for (int b = 0; b <= top; ++b) {
      cplx r = row[b] * e1;
      for (int a = 0; a + b <= top; ++a) {
        T[a][b] += r;
        r *= double(k1);
      }
    }
  }
  static const cplx ipow[5] = {1.0, cplx(0, 1), -1.0, cplx(0, -1), 1.0};
  auto S = [&](int a, int b) { return (ipow[a + b] * T[a][b]).real(); };
  // derivative (a,b) of velocity component i
  auto D = [&](int i, int a, int b) { return i == 0 ? -S(a, b + 1) : S(a + 1, b); };
  for (int i = 0; i < 2; ++i) J.u(i) = D(i, 0, 0);
  if (order >= 1)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) J.du(i, j) = D(i, j == 0, j == 1);
  if (order >= 2)
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) J.d2u[k](i, j) = D(i, (k == 0) + (j == 0), (k == 1) + (j == 1));
  if (order >= 3)
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j)
            J.d3u[k][l](i, j) = D(i, (k == 0) + (l == 0) + (j == 0), (k == 1) + (l == 1) + (j == 1));
  return J;
}

}  // namespace bq
