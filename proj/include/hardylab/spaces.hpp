#pragma once

#include <vector>

#include "hardylab/grid.hpp"

namespace hardylab {

// C^inf transition ramp: 0 for u <= 0, 1 for u >= 1, built from exp(-1/u).
double smoothstep(double u);

// Littlewood-Paley family given by frequency-side radial profiles.
//   phi0_hat: 1 on {|xi| <= 1}, supported in {|xi| <= 2}
//   phi_hat:  supported in {1/2 <= |xi| <= 2}, equal to 1 on {3/4 <= |xi| <= 3/2}
//   phi_j_hat(xi) = phi_hat(2^{-j} xi) for j >= 1
// The profile is frozen so that norms are reproducible bit-for-bit.
class FilterBank {
 public:
  FilterBank(const Grid& g, int j_max);

  const Grid& grid() const { return grid_; }
  int j_max() const { return j_max_; }

  // profile value at |xi| = rho for band j
  static double band_profile(int j, double rho);

  // multiplier values of band j on the grid's frequency lattice
  const std::vector<Complex>& band(int j) const { return bands_[j]; }

  // spatial filter phi_j as a field (inverse transform of the profile)
  SampledField spatial_filter(int j) const;

  // phi_j * f, computed as a multiplier application (exact on the lattice)
  SampledField apply_band(const SampledField& f, int j) const;

  static int max_band_for(const Grid& g);  // Nyquist bound on j_max

 private:
  Grid grid_;
  int j_max_;
  std::vector<std::vector<Complex>> bands_;
};

FilterBank build_filter_bank(const Grid& g, int j_max);

struct LipschitzResult {
  double norm = 0.0;               // sup_j 2^{js} ||phi_j * f||_inf
  std::vector<double> profile;     // per-j values, so tails stay inspectable
  int arg_max = 0;
};

LipschitzResult lipschitz_norm(const SampledField& f, double s, const FilterBank& bank);

// Finite family of balls for the bmo sweep.
struct BallLattice {
  std::vector<Point> centers;
  std::vector<double> radii;
};

// Dyadic default: radii 2^k h up to L, centers on every 4th grid point.
BallLattice default_ball_lattice(const Grid& g);

struct BmoResult {
  double norm = 0.0;
  double large_ball_max = 0.0;   // sup_{r >= 1} average of |f|
  double small_ball_max = 0.0;   // sup_{r < 1} average of |f - f_B|
};

BmoResult bmo_norm(const SampledField& f, const BallLattice& balls);

// chi = 1 on B(x0, inner), 0 outside B(x0, outer), smooth ramp in between.
// The paper's cutoff has inner 2 and outer 3.
struct CutoffSpec {
  Point center{0.0, 0.0, 0.0};
  double inner = 2.0;
  double outer = 3.0;
};

SampledField make_cutoff(const CutoffSpec& spec, const Grid& g);

// g_{x0,alpha}(x) = (x - x0)^alpha chi(x), the Lipschitz-space test function.
SampledField make_poly_cutoff(const Point& x0, const MultiIndex& alpha, const Grid& g);

}  // namespace hardylab
