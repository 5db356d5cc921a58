#include "hardylab/heat.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hardylab {

TimeGrid TimeGrid::standard(int k_max, double ratio) {
  if (k_max < 0) throw std::invalid_argument("TimeGrid: k_max must be nonnegative");
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("TimeGrid: ratio must be in (0,1)");
  TimeGrid tg;
  const double top = 1.0 - std::ldexp(1.0, -10);  // stay inside the open interval (0,1)
  double t = top;
  for (int k = 0; k <= k_max; ++k) {
    tg.values.push_back(t);
    t *= ratio;
  }
  tg.validate();
  return tg;
}

void TimeGrid::validate() const {
  if (values.empty()) throw std::invalid_argument("TimeGrid: empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0 && values[i] < 1.0))
      throw std::invalid_argument("TimeGrid: times must lie strictly in (0,1)");
    if (i > 0 && !(values[i] < values[i - 1]))
      throw std::invalid_argument("TimeGrid: times must be strictly decreasing");
  }
}

SampledField heat_apply(const SampledField& f, double t) {
  if (!(t > 0.0) || t > 1.0) throw std::invalid_argument("heat_apply: t must be in (0,1]");
  const Grid& g = f.grid;
  std::vector<Complex> profile(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point xi = g.frequency(i);
    double x2 = 0.0;
    for (int d = 0; d < g.dim(); ++d) x2 += xi[d] * xi[d];
    profile[i] = std::exp(-t * t * x2);
  }
  return apply_multiplier(f, profile);
}

SampledField maximal(const SampledField& f, const TimeGrid& times) {
  times.validate();
  const Grid& g = f.grid;
  // One forward transform, one inverse per time level.
  const auto F = dft_forward(g, f.values);
  std::vector<double> best(g.size(), 0.0);
  std::vector<Complex> work(g.size());
  for (double t : times.values) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Point xi = g.frequency(i);
      double x2 = 0.0;
      for (int d = 0; d < g.dim(); ++d) x2 += xi[d] * xi[d];
      work[i] = F[i] * std::exp(-t * t * x2);
    }
    const auto u = dft_inverse(g, work);
    for (std::size_t i = 0; i < g.size(); ++i) best[i] = std::max(best[i], std::abs(u[i]));
  }
  SampledField out(g);
  for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = best[i];
  out.ensure_finite("maximal");
  return out;
}

double hp_quasinorm(const SampledField& f, double p, const TimeGrid& times) {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("hp_quasinorm: p must be in (0,1]");
  return power_quasinorm(maximal(f, times), p);
}

DecayFit decay_fit(const SampledField& f, const Ball& ball, int j_min, int j_max) {
  if (j_min < 3)
    throw std::invalid_argument("decay_fit: annuli must lie outside 4B (j >= 3)");
  const int j_cap = max_annulus_index(f.grid, ball);
  DecayFit fit;
  for (int j = j_min; j <= std::min(j_max, j_cap); ++j) {
    const Mask m = annulus_mask(f.grid, ball, j);
    if (mask_count(m) == 0) continue;
    const double sup = lq_norm(f, kInfinity, &m);
    if (!(sup > 0.0)) continue;  // log undefined; annulus unusable
    fit.annuli.push_back(j);
    fit.radii.push_back(std::ldexp(ball.radius, j));
    fit.annular_sup.push_back(sup);
  }
  const std::size_t n = fit.annuli.size();
  if (n < 3) throw std::invalid_argument("decay_fit: fewer than 3 usable annuli");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(fit.radii[i]);
    const double y = std::log(fit.annular_sup[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double ybar = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(fit.radii[i]);
    const double y = std::log(fit.annular_sup[i]);
    const double e = y - (fit.slope * x + fit.intercept);
    ss_res += e * e;
    ss_tot += (y - ybar) * (y - ybar);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

}  // namespace hardylab
