#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

namespace bq {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct GridSpec {
  int n = 64;
  int dealias_cut = 21;

  // cut < 0 selects floor(n/3)
  static GridSpec make(int n, int cut = -1);
  bool operator==(const GridSpec& o) const { return n == o.n && dealias_cut == o.dealias_cut; }
};

struct PhysicalParams {
  double nu1 = 0.1;
  double nu2 = 0.1;
  double g = 1.0;
  std::array<double, 4> alpha{0.25, 0.25, 0.25, 0.25};

  double kappa() const;
  double varkappa() const;
  void validate() const;
};

// Real mean-zero field on the 2pi-periodic torus, stored as the half plane
// k2 >= 0 of its Fourier coefficients: f(x) = sum_k c_k exp(i k.x).
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(int n);

  int n() const { return n_; }
  int half() const { return n_ / 2 + 1; }
  std::size_t size() const { return c_.size(); }
  cplx* data() { return c_.data(); }
  const cplx* data() const { return c_.data(); }

  int k1_at(int i1) const { return i1 < n_ / 2 ? i1 : i1 - n_; }
  std::size_t index(int i1, int i2) const { return static_cast<std::size_t>(i1) * half() + i2; }

  // Any k with |k|_inf < n/2; coefficients for k2 < 0 come from symmetry.
  cplx coeff(int k1, int k2) const;
  // Writes c at k and conj(c) at -k.
  void set(int k1, int k2, cplx c);
  void add(int k1, int k2, cplx c) { set(k1, k2, coeff(k1, k2) + c); }

  void zero();
  bool finite() const;
  double max_abs() const;
  // Largest |k|_inf carrying a nonzero coefficient.
  int support_radius() const;

  ScalarField& operator+=(const ScalarField& o);
  ScalarField& operator-=(const ScalarField& o);
  ScalarField& operator*=(double s);
  // this += s * o
  ScalarField& axpy(double s, const ScalarField& o);

 private:
  int n_ = 0;
  std::vector<cplx> c_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(double s, ScalarField a);

struct SpectralState {
  ScalarField omega;
  ScalarField theta;

  SpectralState() = default;
  explicit SpectralState(int n) : omega(n), theta(n) {}
  SpectralState(ScalarField w, ScalarField t) : omega(std::move(w)), theta(std::move(t)) {}

  int n() const { return omega.n(); }
  bool finite() const { return omega.finite() && theta.finite(); }
  SpectralState& operator+=(const SpectralState& o);
  SpectralState& operator-=(const SpectralState& o);
  SpectralState& operator*=(double s);
  SpectralState& axpy(double s, const SpectralState& o);
};

SpectralState operator+(SpectralState a, const SpectralState& b);
SpectralState operator-(SpectralState a, const SpectralState& b);
SpectralState operator*(double s, SpectralState a);

struct VelocityField {
  ScalarField u1;
  ScalarField u2;
};

enum class Slot { temperature, vorticity };

// Wraps FFTW for one resolution. Physical layout is row-major [i1][i2] with
// x = 2pi (i1, i2) / n. to_spectral drops the mean and the Nyquist row/column.
class Fft {
 public:
  explicit Fft(int n);
  ~Fft();
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  int n() const { return n_; }
  void to_physical(const ScalarField& f, double* out) const;
  void to_spectral(const double* in, ScalarField& f) const;

 private:
  int n_;
  void* fwd_;
  void* bwd_;
};

const Fft& fft_for(int n);

// amp * cos(j.x - phase) for m = 0, amp * sin(j.x - phase) for m = 1; any nonzero j.
ScalarField trig_scalar(int n, int j1, int j2, int m, double amp = 1.0, double phase = 0.0);
// Basis element: sigma_j^m in the temperature slot, psi_j^m in the vorticity slot.
SpectralState trig_mode(int n, int j1, int j2, int m, Slot slot);
bool in_upper_half(int j1, int j2);

VelocityField biot_savart(const ScalarField& omega);
ScalarField partial(const ScalarField& f, int axis);
ScalarField laplacian(const ScalarField& f);
ScalarField inverse_laplacian(const ScalarField& f);
ScalarField curl(const VelocityField& u);

ScalarField dealias(ScalarField f, int cut);
// Zero every mode with Euclidean |k| > radius.
ScalarField project_ball(ScalarField f, double radius);

// Pseudo-spectral product with the 2/3 rule; the mean is removed.
ScalarField multiply(const ScalarField& a, const ScalarField& b, const GridSpec& grid);
// Exact coefficient convolution; the mean is removed, modes beyond the grid dropped.
ScalarField multiply_exact(const ScalarField& a, const ScalarField& b);
// u . grad f, pseudo-spectral, dealiased, mean removed.
ScalarField advect(const VelocityField& u, const ScalarField& f, const GridSpec& grid);

// Squared W^{s,2} norm with spectral weight (1+|k|^2)^s.
double sobolev_norm_sq(const ScalarField& f, double s);
double sobolev_inner(const ScalarField& a, const ScalarField& b, double s);
double weighted_norm_sq(const SpectralState& U, double s, const PhysicalParams& p);
double weighted_inner(const SpectralState& U, const SpectralState& V, double s, const PhysicalParams& p);

double eval_physical(const ScalarField& f, const Vec2& x);
Vec2 wrap_point(const Vec2& x);
// Componentwise difference a - b reduced to (-pi, pi].
Vec2 torus_delta(const Vec2& a, const Vec2& b);

// Velocity and its derivatives at a point: du(i,j) = d_j u_i,
// d2u[k](i,j) = d_k d_j u_i, d3u[k][l](i,j) = d_k d_l d_j u_i.
struct VelocityJet {
  Vec2 u = Vec2::Zero();
  Mat2 du = Mat2::Zero();
  std::array<Mat2, 2> d2u{Mat2::Zero(), Mat2::Zero()};
  std::array<std::array<Mat2, 2>, 2> d3u{{{Mat2::Zero(), Mat2::Zero()}, {Mat2::Zero(), Mat2::Zero()}}};

  // sum_k d2u[k] y_k
  Mat2 d2u_along(const Vec2& y) const { return d2u[0] * y(0) + d2u[1] * y(1); }
  // sum_{k,l} d3u[k][l] y_k z_l
  Mat2 d3u_along(const Vec2& y, const Vec2& z) const;
  // the vector sum_{k,l} d_k d_l u y_k z_l
  Vec2 d2u_apply(const Vec2& y, const Vec2& z) const { return d2u_along(y) * z; }
};

// Stream function of a vorticity field restricted to |k|_inf <= band, prepared
// for repeated direct-summation evaluation of the induced velocity.
class PointVelocity {
 public:
  PointVelocity() = default;
  PointVelocity(const ScalarField& omega, int band = -1);
  // order 0..3: highest velocity derivative filled in
  VelocityJet jet(const Vec2& x, int order) const;
  bool empty() const { return coef_.empty(); }

 private:
  int band_ = 0;
  std::vector<cplx> coef_;  // (2 band + 1) x (band + 1), weight and -1/|k|^2 folded in
};

}  // namespace bq
