#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hardylab/harness.hpp"
#include "hardylab/rng.hpp"

using namespace hardylab;

namespace {
OperatorHandle identity_op(const Grid& g) {
  return OperatorHandle::from_multiplier(g, std::vector<Complex>(g.size(), Complex{1.0, 0.0}),
                                         "identity");
}
}  // namespace

TEST_CASE("TheoremConfig: exponent arithmetic and mapping-mode guards") {
  TheoremConfig tc{1, 0.8, 1.5, 1.0};
  CHECK(tc.floor_s() == 1);
  CHECK(tc.s_star() == doctest::Approx(0.5));
  CHECK(tc.mu() == doctest::Approx(0.5));
  CHECK(tc.delta() == doctest::Approx(1.75));  // 1 + 1 - (1/0.8 - 1)
  CHECK(tc.p_lower() == doctest::Approx(1.0 / 2.5));
  CHECK_NOTHROW(tc.validate_mapping_mode());

  // integer s is refused in mapping mode rather than reinterpreted
  TheoremConfig ti{1, 0.8, 2.0, 1.0};
  CHECK_THROWS_AS(ti.validate_mapping_mode(), std::invalid_argument);

  // p at or below the threshold is refused
  TheoremConfig tp{1, 0.39, 1.5, 1.0};
  CHECK_THROWS_AS(tp.validate_mapping_mode(), std::invalid_argument);
}

TEST_CASE("TheoremConfig: closed forms match a slow re-derivation, exactly") {
  Rng rng(314159);
  int checked = 0;
  auto run_case = [&](TheoremConfig tc) {
    const double mu_slow = tc.s_star() < tc.eps ? tc.s_star() : tc.eps;
    int fs_slow = 0;
    while (fs_slow + 1 <= tc.s) ++fs_slow;
    const double delta_slow = fs_slow + tc.eps - tc.n * (1.0 / tc.p - 1.0);
    const double pl_slow = tc.n / (tc.n + fs_slow + mu_slow);
    CHECK(tc.floor_s() == fs_slow);
    CHECK(tc.mu() == mu_slow);
    CHECK(tc.delta() == delta_slow);
    CHECK(tc.p_lower() == pl_slow);
    ++checked;
  };
  for (int c = 0; c < 1000; ++c) {
    TheoremConfig tc;
    tc.n = 1 + static_cast<int>(rng.uniform() * 3);
    tc.p = 0.05 + 0.95 * rng.uniform();
    tc.s = 4.0 * rng.uniform();
    tc.eps = 0.01 + 0.99 * rng.uniform();
    run_case(tc);
  }
  // floor boundary cases around integers
  const double ulp1 = std::nextafter(1.0, 2.0) - 1.0;
  for (double s : {1.0 - ulp1, 1.0, 1.0 + ulp1, 2.0 - 2 * ulp1, 2.0, 2.0 + 2 * ulp1, 0.0}) {
    TheoremConfig tc{2, 0.7, s, 0.6};
    run_case(tc);
  }
  CHECK(checked == 1007);
}

TEST_CASE("condition_1_7: identity operator reproduces the g-table") {
  const Grid g = make_grid(1, 16.0, 512);
  const FilterBank bank = build_filter_bank(g, FilterBank::max_band_for(g));
  const std::vector<Point> x0s{{-1.0, 0.0, 0.0}, {0.5, 0.0, 0.0}};
  const Condition17Report rep = condition_1_7(identity_op(g), 1.5, x0s, bank);

  CHECK(rep.entries.size() == 4);  // 2 centers x alpha in {0, 1}
  for (const auto& e : rep.entries) {
    const SampledField gf = make_poly_cutoff(e.x0, e.alpha, g);
    const LipschitzResult direct = lipschitz_norm(gf, 1.5, bank);
    CHECK(e.lambda_norm == doctest::Approx(direct.norm).epsilon(1e-12));
  }
  CHECK(rep.sup > 0.0);

  // geometry guard: B(x0, 3) must fit inside the half-torus
  const std::vector<Point> far{{14.5, 0.0, 0.0}};
  CHECK_THROWS_AS(condition_1_7(identity_op(g), 1.5, far, bank), std::invalid_argument);
}

TEST_CASE("condition_1_7: local Riesz entries are finite with decaying tails") {
  const Grid g = make_grid(1, 16.0, 1024);
  const FilterBank bank = build_filter_bank(g, FilterBank::max_band_for(g));
  const OperatorHandle r = local_riesz(0, g);
  const std::vector<Point> x0s{{-1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
  const Condition17Report rep = condition_1_7(r, 1.5, x0s, bank);
  for (const auto& e : rep.entries) {
    CHECK(std::isfinite(e.lambda_norm));
    CHECK(e.lambda_norm > 0.0);
  }
  CHECK(rep.tail_decaying);
}

TEST_CASE("atom_to_molecule_check: identity and zero operators") {
  const Grid g = make_grid(1, 16.0, 1024);
  TheoremConfig tc{1, 0.8, 1.5, 1.0};
  const std::vector<double> radii{1.0, 0.5, 0.25};

  // identity: every atom is its own molecule, margins stay at or below 1
  const AtomMapReport rid = atom_to_molecule_check(identity_op(g), tc, radii, 2, 9);
  CHECK(rid.all_finite);
  CHECK(rid.cases.size() == 6);
  CHECK(rid.fitted_constant <= 1.0 + 1e-9);

  // zero: margins identically 0
  const OperatorHandle zero =
      OperatorHandle::from_multiplier(g, std::vector<Complex>(g.size(), Complex{0.0, 0.0}));
  const AtomMapReport rz = atom_to_molecule_check(zero, tc, radii, 1, 9);
  CHECK(rz.fitted_constant <= 1e-12);
}

TEST_CASE("cancellation_budget: exact atoms give vanishing ratios") {
  const Grid g = make_grid(1, 16.0, 1024);
  TheoremConfig tc{1, 0.8, 1.5, 1.0};
  AtomSpec spec;
  spec.p = tc.p;
  spec.q = 2.0;
  spec.moments = tc.floor_s();
  spec.ball = Ball{{0.0, 0.0, 0.0}, 0.25};
  const SampledField a = generate_atom(spec, g, 5);

  const auto rows = cancellation_budget(identity_op(g), a, spec.ball, tc);
  for (const auto& row : rows) CHECK(row.ratio <= 1e-10);

  // multiplication by a cutoff that is 1 on the atom's support acts as the
  // identity there: ratios stay at zero
  const SampledField chi = make_cutoff(CutoffSpec{{0.0, 0.0, 0.0}, 2.0, 3.0}, g);
  auto mult_kernel = [&g, chi](const Point& x, const Point& y) -> Complex {
    const Point z = g.wrap_difference(x, y);
    double rho = 0.0;
    for (int d = 0; d < g.dim(); ++d) rho += z[d] * z[d];
    if (rho > 0.0) return {0.0, 0.0};
    const auto ix = static_cast<std::size_t>(std::llround((x[0] + g.half_width()) / g.spacing()));
    return chi.values[ix % g.size()] / g.cell_volume();
  };
  const OperatorHandle mult = OperatorHandle::from_kernel(g, mult_kernel);
  const auto rows2 = cancellation_budget(mult, a, spec.ball, tc);
  for (const auto& row : rows2) CHECK(row.ratio <= 1e-9);

  CHECK_THROWS_AS(cancellation_budget(identity_op(g), a, Ball{{0.0, 0.0, 0.0}, 1.5}, tc),
                  std::invalid_argument);
}

TEST_CASE("cancellation_budget: modulated kernel meets the moment envelope") {
  // a smoothly modulated truncated-Riesz kernel is still CZOI-like but not a
  // convolution, so the moments of Ta are genuinely nonzero; the proof bounds
  // them by r^{floor(s)+mu} |B|^{1-1/p}, i.e. the log-log slope of the raw
  // moment against r is at least floor(s)+mu (up to 15%)
  const Grid g = make_grid(1, 16.0, 2048);
  TheoremConfig tc{1, 0.8, 1.5, 1.0};
  const RadialProfile Phi{};
  auto kernel = [&g, Phi](const Point& x, const Point& y) -> Complex {
    const Point z = g.wrap_difference(x, y);
    const double rho = std::abs(z[0]);
    if (rho == 0.0) return {0.0, 0.0};
    const double c = 1.0 + 0.5 * std::sin(std::numbers::pi * x[0] / 16.0);
    return Complex{c * z[0] / (rho * rho) * Phi(rho), 0.0};
  };
  const OperatorHandle T = OperatorHandle::from_kernel(g, kernel);

  std::vector<double> log_r, log_m;
  double worst_ratio = 0.0;
  for (double r : {0.5, 0.25, 0.125, 0.0625}) {
    AtomSpec spec;
    spec.p = tc.p;
    spec.q = 2.0;
    spec.moments = tc.floor_s();
    spec.ball = Ball{{0.0, 0.0, 0.0}, r};
    const SampledField a = generate_atom(spec, g, 7);
    const auto rows = cancellation_budget(T, a, spec.ball, tc);
    double raw = 0.0;
    for (const auto& row : rows) {
      raw = std::max(raw, row.raw_moment);
      worst_ratio = std::max(worst_ratio, row.ratio);
    }
    REQUIRE(raw > 1e-13);
    log_r.push_back(std::log(r));
    log_m.push_back(std::log(raw));
  }
  CHECK(std::isfinite(worst_ratio));

  const std::size_t n = log_r.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += log_r[i];
    sy += log_m[i];
    sxx += log_r[i] * log_r[i];
    sxy += log_r[i] * log_m[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double target = tc.floor_s() + tc.mu();
  CHECK(slope >= target * 0.85);
}

TEST_CASE("lp_commutation_check: exact rearrangement and stable 2->inf constants") {
  const Grid g = make_grid(1, 8.0, 512);
  const FilterBank bank = build_filter_bank(g, FilterBank::max_band_for(g));
  const OperatorHandle id = identity_op(g);

  const LpCommutationReport rep = lp_commutation_check(id, 2, 1.5, bank, 50, 19);
  CHECK(rep.profile_identity_error <= 1e-14);
  CHECK(rep.prefactor_decays);  // l = 2 > s/2 + n/8 = 0.875
  CHECK(rep.prefactor_exponent == doctest::Approx(2.0 * 2 - 1.5 - 0.25));

  double mn = kInfinity, mx = 0.0;
  for (int j = 1; j < static_cast<int>(rep.two_inf_constants.size()); ++j) {
    CHECK(std::isfinite(rep.two_inf_constants[j]));
    CHECK(rep.two_inf_constants[j] > 0.0);
    mn = std::min(mn, rep.two_inf_constants[j]);
    mx = std::max(mx, rep.two_inf_constants[j]);
  }
  CHECK(mx / mn <= 4.0);  // flat in j up to the profile constant

  // l below the threshold flips the decay flag
  const LpCommutationReport low = lp_commutation_check(id, 1, 3.8, bank, 5, 19);
  CHECK_FALSE(low.prefactor_decays);
}

TEST_CASE("hp_operator_ratio: identity, dilation, and the division guard") {
  const Grid g = make_grid(1, 16.0, 512);
  const TimeGrid times = TimeGrid::standard();
  AtomSpec spec;
  spec.p = 0.9;
  spec.q = 2.0;
  spec.moments = 0;
  spec.ball = Ball{{0.0, 0.0, 0.0}, 0.5};
  std::vector<SampledField> samples;
  std::vector<std::string> labels;
  for (int i = 0; i < 3; ++i) {
    samples.push_back(generate_atom(spec, g, 40 + i));
    labels.push_back("atom" + std::to_string(i));
  }

  const HpRatioReport rid = hp_operator_ratio(identity_op(g), 0.9, times, samples, labels);
  CHECK(rid.max_ratio == doctest::Approx(1.0).epsilon(1e-10));

  const OperatorHandle twice =
      OperatorHandle::from_multiplier(g, std::vector<Complex>(g.size(), Complex{2.0, 0.0}));
  const HpRatioReport r2 = hp_operator_ratio(twice, 0.9, times, samples, labels);
  CHECK(r2.max_ratio == doctest::Approx(2.0).epsilon(1e-10));

  std::vector<SampledField> zeros{SampledField(g)};
  CHECK_THROWS_AS(hp_operator_ratio(identity_op(g), 0.9, times, zeros, {"zero"}),
                  std::invalid_argument);
}

TEST_CASE("consistency: condition (1.7) finite where the atom map passes") {
  // both sides of the criterion on the same operator and config; a joint
  // sanity check on the two directions, not a proof
  const Grid g = make_grid(1, 16.0, 1024);
  const OperatorHandle R = truncated_riesz(0, g);
  TheoremConfig tc{1, 0.8, 1.5, 1.0};
  const AtomMapReport map = atom_to_molecule_check(R, tc, {0.5, 0.25}, 1, 3);
  CHECK(map.all_finite);

  const double s_dual = 1.0 * (1.0 / tc.p - 1.0);  // s = n(1/p - 1) from the converse
  const FilterBank bank = build_filter_bank(g, FilterBank::max_band_for(g));
  const Condition17Report rep =
      condition_1_7(R, s_dual, {{-0.5, 0.0, 0.0}, {0.5, 0.0, 0.0}}, bank);
  for (const auto& e : rep.entries) CHECK(std::isfinite(e.lambda_norm));
}
