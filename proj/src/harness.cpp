#include "hardylab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hardylab/rng.hpp"

namespace hardylab {

int TheoremConfig::floor_s() const { return static_cast<int>(std::floor(s)); }
double TheoremConfig::s_star() const { return s - std::floor(s); }
double TheoremConfig::mu() const { return std::min(s_star(), eps); }
double TheoremConfig::delta() const { return floor_s() + eps - n * (1.0 / p - 1.0); }
double TheoremConfig::p_lower() const { return n / (n + floor_s() + mu()); }

void TheoremConfig::validate_mapping_mode() const {
  if (n < 1 || n > 3) throw std::invalid_argument("TheoremConfig: n must be 1..3");
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("TheoremConfig: p must be in (0,1]");
  if (!(eps > 0.0) || eps > 1.0) throw std::invalid_argument("TheoremConfig: eps must be in (0,1]");
  if (!(s > 0.0)) throw std::invalid_argument("TheoremConfig: mapping mode needs s > 0");
  if (s_star() == 0.0)
    throw std::invalid_argument("TheoremConfig: mapping mode requires fractional s (s* != 0)");
  if (!(p > p_lower()))
    throw std::invalid_argument("TheoremConfig: p must exceed n/(n + floor(s) + min(s*, eps))");
  if (!(delta() > 0.0))
    throw std::invalid_argument("TheoremConfig: delta = floor(s) + eps - n(1/p - 1) must be positive");
}

Condition17Report condition_1_7(const OperatorHandle& T, double s,
                                const std::vector<Point>& x0_lattice, const FilterBank& bank) {
  if (x0_lattice.empty()) throw std::invalid_argument("condition_1_7: empty x0 lattice");
  const Grid& g = T.grid();
  const int fs = static_cast<int>(std::floor(s));
  const OperatorHandle Ts = adjoint(T);

  Condition17Report rep;
  const auto alphas = multi_indices_up_to(g.dim(), fs);
  std::vector<double> per_alpha_min(alphas.size(), kInfinity);
  std::vector<double> per_alpha_max(alphas.size(), 0.0);

  for (const Point& x0 : x0_lattice) {
    // geometry: the outer cutoff ball must fit the half-torus
    for (int d = 0; d < g.dim(); ++d)
      if (std::abs(x0[d]) + 3.0 > g.half_width() / 2.0)
        throw std::invalid_argument("condition_1_7: B(x0,3) leaves the half-torus");
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const SampledField gfield = make_poly_cutoff(x0, alphas[a], g);
      const SampledField tg = apply(Ts, gfield);
      const LipschitzResult lr = lipschitz_norm(tg, s, bank);
      Condition17Entry e;
      e.x0 = x0;
      e.alpha = alphas[a];
      e.lambda_norm = lr.norm;
      e.profile = lr.profile;
      rep.sup = std::max(rep.sup, lr.norm);
      per_alpha_min[a] = std::min(per_alpha_min[a], lr.norm);
      per_alpha_max[a] = std::max(per_alpha_max[a], lr.norm);
      rep.entries.push_back(std::move(e));
    }
  }

  rep.spread = 0.0;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    if (per_alpha_min[a] > 0.0)
      rep.spread = std::max(rep.spread, (per_alpha_max[a] - per_alpha_min[a]) / per_alpha_min[a]);
  }

  // the "< infinity" witness: the top three bands must be strictly falling
  rep.tail_decaying = true;
  for (const auto& e : rep.entries) {
    const std::size_t nb = e.profile.size();
    if (nb < 3) {
      rep.tail_decaying = false;
      break;
    }
    for (std::size_t j = nb - 2; j < nb; ++j) {
      if (!(e.profile[j] < e.profile[j - 1])) {
        rep.tail_decaying = false;
        break;
      }
    }
  }
  return rep;
}

AtomMapReport atom_to_molecule_check(const OperatorHandle& T, const TheoremConfig& cfg,
                                     const std::vector<double>& radii, int seeds_per_radius,
                                     std::uint64_t seed) {
  cfg.validate_mapping_mode();
  const Grid& g = T.grid();
  if (g.dim() != cfg.n) throw std::invalid_argument("atom_to_molecule_check: dim mismatch");

  AtomMapReport rep;
  rep.all_finite = true;
  for (double r : radii) {
    for (int si = 0; si < seeds_per_radius; ++si) {
      const std::uint64_t case_seed =
          Rng::derive(seed, static_cast<std::uint64_t>(si) * 1315423911u + std::llround(r * 4096.0));
      AtomSpec aspec;
      aspec.p = cfg.p;
      aspec.q = 2.0;
      aspec.moments = cfg.floor_s();
      aspec.ball = Ball{{0.0, 0.0, 0.0}, r};
      const SampledField a = generate_atom(aspec, g, case_seed);
      const SampledField ta = apply(T, a);

      MoleculeSpec mspec;
      mspec.p = cfg.p;
      mspec.q = 2.0;
      mspec.delta = cfg.delta();
      mspec.s = cfg.floor_s() + cfg.mu();
      mspec.ball = aspec.ball;
      const MoleculeCertificate cert = validate_molecule(ta, mspec);

      AtomMapCase c;
      c.r = r;
      c.seed = case_seed;
      c.worst_margin = cert.worst_margin;
      c.worst_annulus = cert.worst_annulus;
      for (double mm : cert.moment_margins)
        c.worst_moment_margin = std::max(c.worst_moment_margin, mm);
      if (!std::isfinite(c.worst_margin)) rep.all_finite = false;
      rep.fitted_constant = std::max(rep.fitted_constant, c.worst_margin);
      rep.cases.push_back(c);
    }
  }
  return rep;
}

std::vector<CancellationRow> cancellation_budget(const OperatorHandle& T,
                                                 const SampledField& atom, const Ball& ball,
                                                 const TheoremConfig& cfg) {
  if (!(ball.radius < 1.0))
    throw std::invalid_argument("cancellation_budget: the moment estimate applies to r_B < 1");
  const Grid& g = atom.grid;
  const SampledField ta = apply(T, atom);
  const double budget = std::pow(ball.radius, cfg.floor_s() + cfg.mu()) *
                        std::pow(ball_measure(g.dim(), ball.radius), 1.0 - 1.0 / cfg.p);
  std::vector<CancellationRow> rows;
  for (const auto& alpha : multi_indices_up_to(g.dim(), cfg.floor_s())) {
    CancellationRow row;
    row.alpha = alpha;
    row.raw_moment = std::abs(moment(ta, ball.center, alpha));
    row.ratio = row.raw_moment / budget;
    rows.push_back(row);
  }
  return rows;
}

LpCommutationReport lp_commutation_check(const OperatorHandle& T, int ell, double s,
                                         const FilterBank& bank, int draws,
                                         std::uint64_t seed) {
  if (ell < 1) throw std::invalid_argument("lp_commutation_check: ell must be >= 1");
  (void)T;  // the factorization is a property of the filter family itself
  const Grid& g = bank.grid();

  LpCommutationReport rep;

  // profile identity: phi_j(xi) = 2^{-2lj} |xi|^{2l} [ (2^j/|xi|)^{2l} phi_j(xi) ]
  // exact on the lattice wherever phi_j != 0
  for (int j = 1; j <= bank.j_max(); ++j) {
    const auto& band = bank.band(j);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double phi = band[i].real();
      if (phi == 0.0) continue;
      const Point xi = g.frequency(i);
      double rho2 = 0.0;
      for (int d = 0; d < g.dim(); ++d) rho2 += xi[d] * xi[d];
      if (rho2 == 0.0) continue;
      const double tilde = std::pow(std::ldexp(1.0, j), 2 * ell) * std::pow(rho2, -ell) * phi;
      const double back = std::pow(std::ldexp(1.0, -j), 2 * ell) * std::pow(rho2, ell) * tilde;
      rep.profile_identity_error =
          std::max(rep.profile_identity_error, std::abs(back - phi) / std::abs(phi));
    }
  }

  // measured 2->inf constants of phi~_j(D) against the 2^{jn/2} envelope
  Rng rng(Rng::derive(seed, 0x2f));
  rep.two_inf_constants.assign(bank.j_max() + 1, 0.0);
  for (int draw = 0; draw < draws; ++draw) {
    SampledField hfield(g);
    for (auto& z : hfield.values) z = Complex{rng.normal(), rng.normal()};
    const double l2 = lq_norm(hfield, 2.0);
    const auto F = dft_forward(g, hfield.values);
    for (int j = 1; j <= bank.j_max(); ++j) {
      std::vector<Complex> work(g.size());
      const auto& band = bank.band(j);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Point xi = g.frequency(i);
        double rho2 = 0.0;
        for (int d = 0; d < g.dim(); ++d) rho2 += xi[d] * xi[d];
        work[i] = rho2 == 0.0 ? Complex{0.0, 0.0}
                              : F[i] * band[i] * std::pow(std::ldexp(1.0, j), 2 * ell) *
                                    std::pow(rho2, -ell);
      }
      SampledField u(g, dft_inverse(g, work));
      const double sup = lq_norm(u, kInfinity);
      const double envelope = std::pow(2.0, j * g.dim() / 2.0) * l2;
      rep.two_inf_constants[j] = std::max(rep.two_inf_constants[j], sup / envelope);
    }
  }

  rep.prefactor_exponent = 2.0 * ell - s - g.dim() / 4.0;
  rep.prefactor_decays = ell > s / 2.0 + g.dim() / 8.0;
  return rep;
}

HpRatioReport hp_operator_ratio(const OperatorHandle& T, double p, const TimeGrid& times,
                                const std::vector<SampledField>& samples,
                                const std::vector<std::string>& labels) {
  if (samples.size() != labels.size())
    throw std::invalid_argument("hp_operator_ratio: labels do not match samples");
  HpRatioReport rep;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    HpRatioSample rs;
    rs.label = labels[i];
    const double denom = hp_quasinorm(samples[i], p, times);
    if (denom < 1e-14) {
      rs.skipped = true;
    } else {
      rs.ratio = hp_quasinorm(apply(T, samples[i]), p, times) / denom;
      rep.max_ratio = std::max(rep.max_ratio, rs.ratio);
      ++rep.used;
    }
    rep.samples.push_back(std::move(rs));
  }
  if (rep.used == 0) throw std::invalid_argument("hp_operator_ratio: all samples below the division guard");
  return rep;
}

}  // namespace hardylab
