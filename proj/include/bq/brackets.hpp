#pragma once

#include "bq/dynamics.hpp"
#include "bq/spectral.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bq {

using FieldMap = std::function<SpectralState(const SpectralState&)>;

enum class FdScheme { central, forward };

// [X,Y](U) = DY(U) X(U) - DX(U) Y(U) with difference quotients of step eps.
SpectralState lie_bracket_fd(const FieldMap& X, const FieldMap& Y, const SpectralState& U, double eps,
                             FdScheme scheme = FdScheme::central);

FieldMap constant_map(SpectralState v);
FieldMap drift_map(const PhysicalParams& p, const GridSpec& grid);

enum class BracketKind { Y, Z, Z_sigma, J_jm };

struct BracketField {
  SpectralState value;
  BracketKind kind;
  int j1, j2, m;
  int k1 = 0, k2 = 0, mk = 0;
};

// [F, sigma_j^m]
SpectralState Y_field(int j1, int j2, int m, const SpectralState& U, const PhysicalParams& p, const GridSpec& grid);
// [F, [F, sigma_j^m]]
SpectralState Z_field(int j1, int j2, int m, const SpectralState& U, const PhysicalParams& p, const GridSpec& grid);
// [Z_j^m, sigma_k^mk], independent of U
SpectralState Z_sigma_bracket(int j1, int j2, int m, int k1, int k2, int mk, const PhysicalParams& p,
                              const GridSpec& grid);
// theta part of [F(U), [Z_j^m, sigma_k^mk]]; affine in U
SpectralState H_field(int j1, int j2, int m, int k1, int k2, int mk, const SpectralState& U, const PhysicalParams& p,
                      const GridSpec& grid);
// Low-mode corrector J_{j,m}(U) projected onto |k| <= nhat. The j1 = 0 branch is
// built from H_field and is experimental.
SpectralState J_jm_field(int j1, int j2, int m, const SpectralState& U, double nhat, const PhysicalParams& p,
                         const GridSpec& grid);

// U_bar = U - sigma_theta W: temperature minus the accumulated forcing and vorticity
// minus its buoyancy image g d1 (sigma_theta W).
SpectralState remove_noise(const SpectralState& U, const std::array<double, 4>& W, const PhysicalParams& p);

// Velocity field V_j^m built from u_T and u_bar_T, evaluated with its gradient.
struct SpanVector {
  Vec2 v = Vec2::Zero();
  Mat2 dv = Mat2::Zero();  // dv(i,k) = d_k V_i
};

class SpanField {
 public:
  // U_T and the cumulative noise W_T (u_bar is induced by remove_noise(U_T, W_T)).
  SpanField(const SpectralState& UT, const std::array<double, 4>& WT, const PhysicalParams& p, int band);
  // Literal span field; zero for j1 = 0.
  SpanVector eval(int j1, int j2, int m, const Vec2& x) const;
  // Same construction with the x-bracket taken from [X,Y]_x = DY X - DX Y, i.e. with
  // the sign of the gradient term of the x-bracket reversed.
  SpanVector eval_bracket_sign(int j1, int j2, int m, const Vec2& x) const;

 private:
  SpanVector build(int j1, int j2, int m, const Vec2& x, double grad_sign_ubar, double grad_sign_u) const;
  PhysicalParams p_;
  PointVelocity u_, ubar_;
};

// Velocity of pi_1 Z_j^m(U_bar) plus the x-bracket [u_T, K*pi_1 Y_j^m]_x at x, both
// assembled directly from the definitions.
Vec2 span_from_definitions(int j1, int j2, int m, const SpectralState& UT, const std::array<double, 4>& WT,
                           const PhysicalParams& p, const GridSpec& grid, const Vec2& x);

enum class SpanKind { two_point, tangent, jacobian };

struct SpanState {
  Vec2 x = Vec2::Zero();
  Vec2 y = Vec2::Zero();    // second particle (two_point)
  Vec2 tau = Vec2(1, 0);    // tangent
  Mat2 A = Mat2::Identity();  // jacobian
};

// Wave vectors j in the upper half plane with 0 < |j| <= N and j1 != 0.
std::vector<std::array<int, 2>> span_wavevectors(double N);

// Smallest singular value of the stacked span vectors in the tangent space of the
// chosen process (R^4, R^4, or R^2 x sl_2).
double span_check(SpanKind kind, const SpanState& s, const SpanField& field, double N);

std::string to_string(SpanKind k);

}  // namespace bq
