#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hardylab/grid.hpp"
#include "hardylab/rng.hpp"
#include "hardylab/spaces.hpp"

using namespace hardylab;

namespace {
SampledField constant(const Grid& g, double c) {
  return SampledField(g, std::vector<Complex>(g.size(), Complex{c, 0.0}));
}
}  // namespace

TEST_CASE("filter bank: supports, dilation structure, Nyquist bound") {
  const Grid g = make_grid(1, 8.0, 256);
  const FilterBank bank = build_filter_bank(g, 3);
  CHECK(bank.j_max() == 3);

  // profile invariants on the frequency lattice
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double rho = std::abs(g.frequency(i)[0]);
    const double p0 = bank.band(0)[i].real();
    if (rho <= 1.0) CHECK(p0 == 1.0);
    if (rho > 2.0) CHECK(p0 == 0.0);
    const double p1 = bank.band(1)[i].real();
    if (rho < 1.0 || rho > 4.0) CHECK(p1 == 0.0);
    if (rho >= 1.5 && rho <= 3.0) CHECK(p1 == 1.0);
  }
  CHECK(bank.band(1)[0].real() == 0.0);  // hat vanishes at the origin

  // phi_j(2^j) = phi(1), independent of j
  for (int j = 1; j <= 3; ++j)
    CHECK(FilterBank::band_profile(j, std::ldexp(1.0, j)) ==
          doctest::Approx(FilterBank::band_profile(1, 2.0)).epsilon(1e-15));

  // convolving the band-1 filter with a constant annihilates it
  const SampledField ones = constant(g, 1.0);
  const SampledField out = convolve(bank.spatial_filter(1), ones);
  CHECK(lq_norm(out, kInfinity) <= 1e-12);

  CHECK_THROWS_AS(build_filter_bank(g, FilterBank::max_band_for(g) + 1), std::invalid_argument);
}

TEST_CASE("filter bank covers the band with surplus") {
  const Grid g = make_grid(1, 8.0, 512);
  const FilterBank bank = build_filter_bank(g, FilterBank::max_band_for(g));
  const double covered = 1.5 * std::ldexp(1.0, bank.j_max());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double rho = std::abs(g.frequency(i)[0]);
    if (rho > covered) continue;
    double sum = 0.0;
    for (int j = 0; j <= bank.j_max(); ++j) sum += bank.band(j)[i].real();
    CHECK(sum >= 1.0 - 1e-12);
  }
}

TEST_CASE("lipschitz_norm: constants, test functions, pure modes") {
  const Grid g = make_grid(1, 16.0, 1024);
  const FilterBank bank = build_filter_bank(g, FilterBank::max_band_for(g));

  const LipschitzResult rc = lipschitz_norm(constant(g, -3.0), 1.0, bank);
  CHECK(rc.norm == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(rc.arg_max == 0);
  for (int j = 1; j <= bank.j_max(); ++j) CHECK(rc.profile[j] <= 1e-12);

  // g_{0,(1)} = x*chi lies in every Lipschitz class; profile stays bounded
  const SampledField gx = make_poly_cutoff({0.0, 0.0, 0.0}, MultiIndex{{1, 0, 0}}, g);
  const LipschitzResult rg = lipschitz_norm(gx, 1.5, bank);
  CHECK(std::isfinite(rg.norm));
  for (double v : rg.profile) CHECK(v <= rg.norm + 1e-12);

  // single top-band mode: the sup is attained at j_max with weight 2^{j_max s}
  const int jm = bank.j_max();
  SampledField mode(g);
  const double target = std::ldexp(1.0, jm);  // on the plateau of band jm
  std::size_t best = 1;
  for (std::size_t i = 1; i < g.size(); ++i)
    if (std::abs(std::abs(g.frequency(i)[0]) - target) <
        std::abs(std::abs(g.frequency(best)[0]) - target))
      best = i;
  const double amp = 0.7;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double dot = g.frequency(best)[0] * g.point(i)[0];
    mode.values[i] = amp * std::polar(1.0, dot);
  }
  const double s = 1.3;
  const LipschitzResult rm = lipschitz_norm(mode, s, bank);
  const double predicted = std::pow(2.0, jm * s) * amp;
  CHECK(rm.norm >= 0.8 * predicted);
  CHECK(rm.norm <= 1.2 * predicted);
}

TEST_CASE("lipschitz_norm: homogeneity and monotonicity of the sup in s") {
  const Grid g = make_grid(1, 8.0, 256);
  const FilterBank bank = build_filter_bank(g, FilterBank::max_band_for(g));
  Rng rng(77);
  SampledField f(g);
  for (auto& z : f.values) z = Complex{rng.normal(), rng.normal()};

  const LipschitzResult r1 = lipschitz_norm(f, 1.2, bank);
  SampledField f2(g);
  for (std::size_t i = 0; i < g.size(); ++i) f2.values[i] = Complex{-2.5, 0.0} * f.values[i];
  const LipschitzResult r2 = lipschitz_norm(f2, 1.2, bank);
  CHECK(r2.norm == doctest::Approx(2.5 * r1.norm).epsilon(1e-12));

  // per-band weights rise with s, hence so does the sup
  const LipschitzResult lo = lipschitz_norm(f, 0.7, bank);
  const LipschitzResult hi = lipschitz_norm(f, 1.9, bank);
  for (int j = 0; j <= bank.j_max(); ++j) CHECK(lo.profile[j] <= hi.profile[j] * (1 + 1e-15));
  CHECK(lo.norm <= hi.norm * (1 + 1e-15));
}

TEST_CASE("bmo_norm: constants, cutoff polynomials, explicit oscillation") {
  const Grid g = make_grid(1, 16.0, 512);
  const BallLattice balls = default_ball_lattice(g);

  const BmoResult rc = bmo_norm(constant(g, 2.0), balls);
  CHECK(rc.norm == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rc.small_ball_max <= 1e-14);

  // g_{0,alpha}: the bmo norm sits under 3x the sup of |g| (proof-style bound)
  for (int a = 0; a <= 2; ++a) {
    const SampledField gp = make_poly_cutoff({0.0, 0.0, 0.0}, MultiIndex{{a, 0, 0}}, g);
    const BmoResult rg = bmo_norm(gp, balls);
    CHECK(rg.norm <= 3.0 * lq_norm(gp, kInfinity) + 1e-12);
  }

  // f = sign(x) min(1, |x|): oscillation on centered small balls has a
  // closed-form average; compare against a direct oracle at the origin
  SampledField saw(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.point(i)[0];
    saw.values[i] = (x >= 0 ? 1.0 : -1.0) * std::min(1.0, std::abs(x));
  }
  double oracle = 0.0;
  for (double r : balls.radii) {
    if (r >= 1.0) continue;
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (std::abs(g.point(i)[0]) < r) {
        acc += std::abs(saw.values[i].real());  // mean is 0 on centered balls
        ++cnt;
      }
    }
    if (cnt) oracle = std::max(oracle, acc / cnt);
  }
  const BmoResult rs = bmo_norm(saw, balls);
  CHECK(rs.small_ball_max >= oracle - 1e-12);

  // adding a constant leaves the small-ball regime untouched
  SampledField shifted(g);
  for (std::size_t i = 0; i < g.size(); ++i) shifted.values[i] = saw.values[i] + 5.0;
  const BmoResult rshift = bmo_norm(shifted, balls);
  CHECK(rshift.small_ball_max == doctest::Approx(rs.small_ball_max).epsilon(1e-12));

  CHECK_THROWS_AS(bmo_norm(saw, BallLattice{}), std::invalid_argument);
}

TEST_CASE("make_cutoff: plateau, support, squeeze, bounded derivatives") {
  const Grid g = make_grid(1, 16.0, 1024);
  const CutoffSpec spec{{1.0, 0.0, 0.0}, 2.0, 3.0};
  const SampledField chi = make_cutoff(spec, g);

  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = std::abs(g.point(i)[0] - 1.0);
    const double v = chi.values[i].real();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (d <= 2.0) CHECK(v == 1.0);
    if (d >= 3.0) CHECK(v == 0.0);
  }
  const double q = quadrature(chi).real();
  CHECK(q >= 4.0);
  CHECK(q <= 6.0);

  // sampled first derivative stays under the documented ramp constant
  double d1 = 0.0;
  for (std::size_t i = 1; i < g.size(); ++i)
    d1 = std::max(d1, std::abs(chi.values[i].real() - chi.values[i - 1].real()) / g.spacing());
  CHECK(d1 <= 4.0);

  CHECK_THROWS_AS(make_cutoff(CutoffSpec{{14.0, 0.0, 0.0}, 2.0, 3.0}, g),
                  std::invalid_argument);
}

TEST_CASE("make_poly_cutoff: base cases and translation stability") {
  const Grid g = make_grid(1, 16.0, 1024);
  const SampledField chi = make_cutoff(CutoffSpec{}, g);
  const SampledField g0 = make_poly_cutoff({0.0, 0.0, 0.0}, MultiIndex{{0, 0, 0}}, g);
  for (std::size_t i = 0; i < g.size(); i += 41)
    CHECK(g0.values[i] == chi.values[i]);

  const SampledField g1 = make_poly_cutoff({0.5, 0.0, 0.0}, MultiIndex{{1, 0, 0}}, g);
  std::size_t at = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::abs(g.point(i)[0] - 0.5) < std::abs(g.point(at)[0] - 0.5)) at = i;
  CHECK(std::abs(g1.values[at]) <= g.spacing());

  // Lipschitz norm varies little as the center sweeps off-lattice
  const FilterBank bank = build_filter_bank(g, FilterBank::max_band_for(g));
  double mn = kInfinity, mx = 0.0;
  for (int k = 0; k < 5; ++k) {
    const double x0 = -1.0 + k * 0.5 + g.spacing() / 3.0;
    const SampledField gk = make_poly_cutoff({x0, 0.0, 0.0}, MultiIndex{{1, 0, 0}}, g);
    const double norm = lipschitz_norm(gk, 1.5, bank).norm;
    mn = std::min(mn, norm);
    mx = std::max(mx, norm);
  }
  CHECK((mx - mn) / mn <= 0.05);
}
