#pragma once

#include <vector>

#include "hardylab/grid.hpp"

namespace hardylab {

// Discretization of the time range (0,1) for the local maximal function.
// Default: t_k = 2^{-k/2} * (1 - 2^{-10}), k = 0..24 -- a geometric sweep
// that stays strictly inside the open interval.
struct TimeGrid {
  std::vector<double> values;  // decreasing, all in (0,1)

  static TimeGrid standard(int k_max = 24, double ratio = 0.70710678118654752440);
  void validate() const;
};

// e^{t^2 Delta} f via the spectral multiplier e^{-t^2|xi|^2}.
SampledField heat_apply(const SampledField& f, double t);

// M_Delta f = max over the time grid of |e^{t^2 Delta} f|, pointwise.
SampledField maximal(const SampledField& f, const TimeGrid& times);

// ||M_Delta f||_{L^p} for 0 < p <= 1 (computed from the p-th power sum).
double hp_quasinorm(const SampledField& f, double p, const TimeGrid& times);

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<int> annuli;          // annulus indices actually used
  std::vector<double> radii;        // 2^j r_B
  std::vector<double> annular_sup;  // sup over U_j of |f|
};

// Least-squares fit of log sup_{U_j} |f| against log(2^j r_B) over annuli
// outside 4B (j >= 3). Needs at least 3 usable annuli.
DecayFit decay_fit(const SampledField& f, const Ball& ball, int j_min, int j_max);

}  // namespace hardylab
