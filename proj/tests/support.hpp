#pragma once

#include "bq/linearization.hpp"
#include "bq/rng.hpp"
#include "bq/spectral.hpp"

#include <cmath>

namespace bqtest {

// Random real mean-zero field on |k|_inf <= band with amplitude ~ amp / (1+|k|^2).
inline bq::ScalarField random_field(int n, int band, bq::SetupRng& rng, double amp = 1.0) {
  bq::ScalarField f(n);
  for (int k1 = -band; k1 <= band; ++k1)
    for (int k2 = -band; k2 <= band; ++k2) {
      if (!bq::in_upper_half(k1, k2)) continue;
      const double s = amp / (1.0 + k1 * k1 + k2 * k2);
      const double re = s * rng.normal();
      f.set(k1, k2, bq::cplx(re, s * rng.normal()));
    }
  return f;
}

inline bq::SpectralState random_state(int n, int band, bq::SetupRng& rng, double amp = 1.0) {
  return bq::SpectralState(random_field(n, band, rng, amp), random_field(n, band, rng, amp));
}

inline double max_coeff_diff(const bq::ScalarField& a, const bq::ScalarField& b) { return (a - b).max_abs(); }

inline double max_coeff_diff(const bq::SpectralState& a, const bq::SpectralState& b) {
  return std::max(max_coeff_diff(a.omega, b.omega), max_coeff_diff(a.theta, b.theta));
}

inline double max_coeff(const bq::SpectralState& a) { return std::max(a.omega.max_abs(), a.theta.max_abs()); }

inline bool hermitian_and_mean_zero(const bq::ScalarField& f) {
  if (f.data()[0] != 0.0) return false;
  const int n = f.n();
  for (int i1 = 1; i1 < n; ++i1)
    if (f.data()[f.index(i1, 0)] != std::conj(f.data()[f.index(n - i1, 0)])) return false;
  return true;
}

// Mixed (field, particle, tangent, matrix) direction.
inline bq::VariationState random_variation(int n, int band, bq::SetupRng& rng, double amp = 1.0) {
  bq::VariationState v(n);
  v.psi = random_state(n, band, rng, amp);
  v.y(0) = rng.normal();
  v.y(1) = rng.normal();
  v.zeta(0) = rng.normal();
  v.zeta(1) = rng.normal();
  v.Bmat << rng.normal(), rng.normal(), rng.normal(), rng.normal();
  return v;
}

}  // namespace bqtest
