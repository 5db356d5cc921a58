#include "hardylab/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hardylab {

double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / u);
  const double b = std::exp(-1.0 / (1.0 - u));
  return a / (a + b);
}

// phi0_hat: 1 on [0,1], ramp to 0 on [1,2].
// phi_hat:  ramp up on [1/2,3/4], 1 on [3/4,3/2], ramp down on [3/2,2].
double FilterBank::band_profile(int j, double rho) {
  if (j == 0) {
    if (rho <= 1.0) return 1.0;
    return smoothstep(2.0 - rho);
  }
  const double r = rho * std::ldexp(1.0, -j);
  if (r < 0.75) return smoothstep((r - 0.5) * 4.0);
  if (r <= 1.5) return 1.0;
  return smoothstep((2.0 - r) * 2.0);
}

int FilterBank::max_band_for(const Grid& g) {
  // top band support 2^{j_max+1} must stay below the Nyquist frequency
  return static_cast<int>(std::floor(std::log2(g.nyquist()))) - 1;
}

FilterBank::FilterBank(const Grid& g, int j_max) : grid_(g), j_max_(j_max) {
  if (j_max < 1) throw std::invalid_argument("FilterBank: j_max must be >= 1");
  if (j_max > max_band_for(g))
    throw std::invalid_argument(
        "FilterBank: j_max too large for grid (top band exceeds Nyquist)");
  bands_.resize(j_max_ + 1);
  for (int j = 0; j <= j_max_; ++j) {
    bands_[j].resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Point xi = g.frequency(i);
      double rho = 0.0;
      for (int d = 0; d < g.dim(); ++d) rho += xi[d] * xi[d];
      bands_[j][i] = band_profile(j, std::sqrt(rho));
    }
  }
}

SampledField FilterBank::spatial_filter(int j) const {
  std::vector<Complex> c(bands_.at(j));
  return inverse_spectrum(grid_, c);
}

SampledField FilterBank::apply_band(const SampledField& f, int j) const {
  if (!(f.grid == grid_)) throw std::invalid_argument("FilterBank: grid mismatch");
  return apply_multiplier(f, bands_.at(j));
}

FilterBank build_filter_bank(const Grid& g, int j_max) { return FilterBank(g, j_max); }

LipschitzResult lipschitz_norm(const SampledField& f, double s, const FilterBank& bank) {
  if (!(s >= 0.0)) throw std::invalid_argument("lipschitz_norm: s must be nonnegative");
  LipschitzResult res;
  res.profile.resize(bank.j_max() + 1);
  for (int j = 0; j <= bank.j_max(); ++j) {
    const double sup = lq_norm(bank.apply_band(f, j), kInfinity);
    res.profile[j] = std::pow(2.0, j * s) * sup;
    if (res.profile[j] > res.norm) {
      res.norm = res.profile[j];
      res.arg_max = j;
    }
  }
  return res;
}

BallLattice default_ball_lattice(const Grid& g) {
  BallLattice bl;
  const int stride = 4;
  const int n = g.samples_per_axis();
  const int k_top = static_cast<int>(std::floor(std::log2(g.half_width() / g.spacing())));
  for (int k = 0; k <= k_top; ++k) bl.radii.push_back(std::ldexp(g.spacing(), k));
  std::array<int, 3> idx{0, 0, 0};
  const int per_axis = n / stride;
  std::size_t total = 1;
  for (int d = 0; d < g.dim(); ++d) total *= per_axis;
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rem = c;
    for (int d = g.dim() - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(rem % per_axis) * stride;
      rem /= per_axis;
    }
    bl.centers.push_back(g.point(g.flat(idx)));
  }
  return bl;
}

BmoResult bmo_norm(const SampledField& f, const BallLattice& balls) {
  if (balls.centers.empty() || balls.radii.empty())
    throw std::invalid_argument("bmo_norm: empty ball family");
  const Grid& g = f.grid;
  BmoResult res;
  for (double r : balls.radii) {
    for (const Point& c : balls.centers) {
      // gather the ball once; both regimes need the same point set
      double sum_abs = 0.0;
      Complex sum{0.0, 0.0};
      std::size_t count = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.distance(g.point(i), c) >= r) continue;
        ++count;
        sum += f.values[i];
        sum_abs += std::abs(f.values[i]);
      }
      if (count == 0) continue;
      if (r >= 1.0) {
        res.large_ball_max = std::max(res.large_ball_max, sum_abs / count);
      } else {
        const Complex mean = sum / static_cast<double>(count);
        double osc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (g.distance(g.point(i), c) >= r) continue;
          osc += std::abs(f.values[i] - mean);
        }
        res.small_ball_max = std::max(res.small_ball_max, osc / count);
      }
    }
  }
  res.norm = res.large_ball_max + res.small_ball_max;
  return res;
}

SampledField make_cutoff(const CutoffSpec& spec, const Grid& g) {
  if (!(spec.inner > 0.0) || !(spec.outer > spec.inner))
    throw std::invalid_argument("make_cutoff: need 0 < inner < outer");
  for (int d = 0; d < g.dim(); ++d)
    if (std::abs(spec.center[d]) + spec.outer > g.half_width() / 2.0)
      throw std::invalid_argument(
          "make_cutoff: outer ball does not fit the half-torus (|x0| + outer <= L/2)");
  SampledField out(g);
  const double width = spec.outer - spec.inner;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = g.distance(g.point(i), spec.center);
    out.values[i] = d <= spec.inner ? 1.0 : smoothstep((spec.outer - d) / width);
  }
  out.ensure_finite("make_cutoff");
  return out;
}

SampledField make_poly_cutoff(const Point& x0, const MultiIndex& alpha, const Grid& g) {
  CutoffSpec spec;
  spec.center = x0;
  SampledField out = make_cutoff(spec, g);
  for (std::size_t i = 0; i < g.size(); ++i)
    out.values[i] *= pow_multi(g.point(i), x0, alpha);
  out.ensure_finite("make_poly_cutoff");
  return out;
}

}  // namespace hardylab
