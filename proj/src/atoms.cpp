#include "hardylab/atoms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hardylab/rng.hpp"
#include "hardylab/spaces.hpp"

namespace hardylab {

namespace {

// ---- small dense linear algebra (bases are tiny: #alpha <= 10) -------------

using Matrix = std::vector<std::vector<double>>;

std::vector<double> lu_solve(Matrix a, std::vector<double> b, const char* who) {
  const std::size_t n = a.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) < 1e-300)
      throw std::invalid_argument(std::string(who) + ": singular moment system (ball too small for grid?)");
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t k = r + 1; k < n; ++k) acc -= a[r][k] * x[k];
    x[r] = acc / a[r][r];
  }
  return x;
}

// Condition number of a small symmetric positive matrix via cyclic Jacobi.
double sym_condition(Matrix a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 50; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = 0.5 * std::atan2(2.0 * a[p][q], a[q][q] - a[p][p]);
        const double c = std::cos(theta), s = std::sin(theta);
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  double mx = 0.0, mn = kInfinity;
  for (std::size_t i = 0; i < n; ++i) {
    mx = std::max(mx, std::abs(a[i][i]));
    mn = std::min(mn, std::abs(a[i][i]));
  }
  return mn > 0.0 ? mx / mn : kInfinity;
}

std::vector<std::size_t> mask_indices(const Mask& m) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) idx.push_back(i);
  return idx;
}

double lq_of_values(const Grid& g, const std::vector<double>& vals, double q) {
  if (q == kInfinity) {
    double mx = 0.0;
    for (double v : vals) mx = std::max(mx, std::abs(v));
    return mx;
  }
  double acc = 0.0;
  for (double v : vals) acc += std::pow(std::abs(v), q);
  return std::pow(g.cell_volume() * acc, 1.0 / q);
}

// Smooth interior bump exp(-1/(1-(d/r)^2)) on a ball.
double ball_window(double d, double r) {
  const double u = 1.0 - (d / r) * (d / r);
  return u > 0.0 ? std::exp(-1.0 / u) : 0.0;
}

// Random smooth modulation 1 + 0.5 * sum c_beta u^beta over |beta| <= 3,
// coefficients damped by order.
std::vector<double> modulation(const Grid& g, const std::vector<std::size_t>& idx,
                               const Point& center, double scale, Rng& rng) {
  const auto betas = multi_indices_up_to(g.dim(), 3);
  std::vector<double> coef(betas.size());
  for (std::size_t b = 0; b < betas.size(); ++b)
    coef[b] = rng.normal() * std::pow(0.7, betas[b].order());
  std::vector<double> out(idx.size(), 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Point x = g.point(idx[i]);
    Point u{0.0, 0.0, 0.0};
    for (int d = 0; d < g.dim(); ++d) u[d] = (x[d] - center[d]) / scale;
    double m = 0.0;
    for (std::size_t b = 0; b < betas.size(); ++b)
      m += coef[b] * pow_multi(u, Point{0.0, 0.0, 0.0}, betas[b]);
    out[i] = 1.0 + 0.5 * m;
  }
  return out;
}

// Centered moments over a masked value set: h^n sum vals * (x - c)^alpha.
double masked_moment(const Grid& g, const std::vector<std::size_t>& idx,
                     const std::vector<double>& vals, const Point& c, const MultiIndex& alpha) {
  double acc = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i)
    acc += vals[i] * pow_multi(g.point(idx[i]), c, alpha);
  return acc * g.cell_volume();
}

Complex masked_moment_c(const Grid& g, const std::vector<std::size_t>& idx,
                        const std::vector<Complex>& vals, const Point& c,
                        const MultiIndex& alpha) {
  Complex acc{0.0, 0.0};
  for (std::size_t i = 0; i < idx.size(); ++i)
    acc += vals[i] * pow_multi(g.point(idx[i]), c, alpha);
  return acc * g.cell_volume();
}

// Exact moment surgery within a masked region: returns correction coefficients
// c so that vals - sum_b c_b basis_b has centered moments `target`. basis are
// value sets on the same mask.
std::vector<double> moment_fit(const Grid& g, const std::vector<std::size_t>& idx,
                               const std::vector<std::vector<double>>& basis,
                               const std::vector<MultiIndex>& alphas, const Point& c,
                               const std::vector<double>& current,
                               const std::vector<double>& target, const char* who) {
  const std::size_t n = alphas.size();
  Matrix M(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      M[a][b] = masked_moment(g, idx, basis[b], c, alphas[a]);
  std::vector<double> rhs(n);
  for (std::size_t a = 0; a < n; ++a) rhs[a] = current[a] - target[a];
  return lu_solve(std::move(M), std::move(rhs), who);
}

}  // namespace

// ---- spec validation ---------------------------------------------------------

void AtomSpec::validate() const {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("AtomSpec: p must be in (0,1]");
  if (!(q > 1.0)) throw std::invalid_argument("AtomSpec: q must be in (1,infinity]");
  if (moments < 0) throw std::invalid_argument("AtomSpec: M must be nonnegative");
  if (!(ball.radius > 0.0)) throw std::invalid_argument("AtomSpec: ball radius must be positive");
}

bool AtomSpec::synthesis_ready(int dim) const {
  return moments >= static_cast<int>(std::floor(dim * (1.0 / p - 1.0)));
}

int MoleculeSpec::floor_s() const { return static_cast<int>(std::floor(s)); }
double MoleculeSpec::s_star() const { return s - std::floor(s); }

void MoleculeSpec::validate() const {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("MoleculeSpec: p must be in (0,1]");
  if (!(q > 1.0)) throw std::invalid_argument("MoleculeSpec: q must be in (1,infinity]");
  if (!(delta > 0.0)) throw std::invalid_argument("MoleculeSpec: delta must be positive");
  if (!(s >= 0.0)) throw std::invalid_argument("MoleculeSpec: s must be nonnegative");
  if (!(ball.radius > 0.0)) throw std::invalid_argument("MoleculeSpec: ball radius must be positive");
}

bool MoleculeSpec::decomposition_hypothesis(int dim) const {
  return delta > std::max(0.0, floor_s() - dim * (1.0 / p - 1.0));
}

// ---- annular bases -------------------------------------------------------------

AnnularBasis build_annular_basis(const Ball& ball, int j, double s, const Grid& g) {
  AnnularBasis basis;
  basis.j = j;
  basis.mask = annulus_mask(g, ball, j);
  const auto idx = mask_indices(basis.mask);
  basis.alphas = multi_indices_up_to(g.dim(), static_cast<int>(std::floor(s)));
  const std::size_t nb = basis.alphas.size();
  if (idx.size() < nb)
    throw std::invalid_argument("build_annular_basis: annulus holds fewer grid points than basis size; refine the grid");
  basis.grid_measure = g.cell_volume() * static_cast<double>(idx.size());

  const double R = std::ldexp(ball.radius, j);  // scale monomials by the outer radius
  const double inv_npts = 1.0 / static_cast<double>(idx.size());

  // scaled monomial values u^beta, u = (x - x_B)/R
  std::vector<std::vector<double>> mono(nb, std::vector<double>(idx.size()));
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Point x = g.point(idx[i]);
      Point u{0.0, 0.0, 0.0};
      for (int d = 0; d < g.dim(); ++d) u[d] = (x[d] - ball.center[d]) / R;
      mono[b][i] = pow_multi(u, Point{0.0, 0.0, 0.0}, basis.alphas[b]);
    }
  }

  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc * inv_npts;
  };

  Matrix gram(nb, std::vector<double>(nb));
  for (std::size_t a = 0; a < nb; ++a)
    for (std::size_t b = 0; b < nb; ++b) gram[a][b] = dot(mono[a], mono[b]);
  basis.gram_condition = sym_condition(gram);
  if (!(basis.gram_condition < 1e12))
    throw std::invalid_argument("build_annular_basis: monomial Gram matrix condition exceeds 1e12; refine the grid");

  // Gram-Schmidt in grlex order with one re-orthogonalization pass.
  basis.omega.assign(nb, {});
  std::vector<std::vector<double>> coef(nb, std::vector<double>(nb, 0.0));  // in scaled monomials
  for (std::size_t a = 0; a < nb; ++a) {
    std::vector<double> v = mono[a];
    std::vector<double> c(nb, 0.0);
    c[a] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t b = 0; b < a; ++b) {
        const double pr = dot(v, basis.omega[b]);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= pr * basis.omega[b][i];
        for (std::size_t k = 0; k < nb; ++k) c[k] -= pr * coef[b][k];
      }
    }
    const double nrm = std::sqrt(dot(v, v));
    if (!(nrm > 1e-150))
      throw std::invalid_argument("build_annular_basis: degenerate monomial family on annulus");
    for (auto& x : v) x /= nrm;
    for (auto& x : c) x /= nrm;
    basis.omega[a] = std::move(v);
    coef[a] = std::move(c);
  }

  // lambda in unscaled coordinates: omega_a = sum_b lambda[a][b] (x-x_B)^beta_b
  basis.lambda.assign(nb, std::vector<double>(nb, 0.0));
  for (std::size_t a = 0; a < nb; ++a)
    for (std::size_t b = 0; b < nb; ++b)
      basis.lambda[a][b] = coef[a][b] * std::pow(R, -basis.alphas[b].order());

  // dual basis: nu_a = sum_g d[g] u^g with Gram * d = R^{-|a|} e_a
  basis.nu.assign(nb, std::vector<double>(idx.size(), 0.0));
  for (std::size_t a = 0; a < nb; ++a) {
    std::vector<double> rhs(nb, 0.0);
    rhs[a] = std::pow(R, -basis.alphas[a].order());
    const auto d = lu_solve(gram, std::move(rhs), "build_annular_basis");
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < idx.size(); ++i) basis.nu[a][i] += d[b] * mono[b][i];
  }

  for (std::size_t a = 0; a < nb; ++a) {
    const double Ra = std::pow(R, basis.alphas[a].order());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      basis.omega_sup = std::max(basis.omega_sup, std::abs(basis.omega[a][i]));
      basis.nu_constant = std::max(basis.nu_constant, std::abs(basis.nu[a][i]) * Ra);
    }
    for (std::size_t b = 0; b < nb; ++b)
      basis.lambda_constant = std::max(basis.lambda_constant, std::abs(basis.lambda[a][b]) * Ra);
  }
  return basis;
}

// ---- atoms ------------------------------------------------------------------------

SampledField generate_atom(const AtomSpec& spec, const Grid& g, std::uint64_t seed) {
  spec.validate();
  max_annulus_index(g, spec.ball);  // ball must fit the half-torus
  const Mask msk = ball_mask(g, spec.ball);
  const auto idx = mask_indices(msk);
  if (idx.empty()) throw std::invalid_argument("generate_atom: ball contains no grid points");

  Rng rng(Rng::derive(seed, 0xa70));
  const double r = spec.ball.radius;
  std::vector<double> vals(idx.size());
  const auto mod = modulation(g, idx, spec.ball.center, r, rng);
  for (std::size_t i = 0; i < idx.size(); ++i)
    vals[i] = ball_window(g.distance(g.point(idx[i]), spec.ball.center), r) * mod[i];

  if (r < 1.0) {
    const auto alphas = multi_indices_up_to(g.dim(), spec.moments);
    if (idx.size() < alphas.size())
      throw std::invalid_argument("generate_atom: projection rank-deficient (ball too small for grid)");
    // moment-killing basis: (x-x_B)^beta * window
    std::vector<std::vector<double>> psi(alphas.size(), std::vector<double>(idx.size()));
    for (std::size_t b = 0; b < alphas.size(); ++b)
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const Point x = g.point(idx[i]);
        psi[b][i] = pow_multi(x, spec.ball.center, alphas[b]) *
                    ball_window(g.distance(x, spec.ball.center), r);
      }
    const std::vector<double> target(alphas.size(), 0.0);
    for (int pass = 0; pass < 2; ++pass) {  // second pass mops up roundoff
      std::vector<double> cur(alphas.size());
      for (std::size_t a = 0; a < alphas.size(); ++a)
        cur[a] = masked_moment(g, idx, vals, spec.ball.center, alphas[a]);
      const auto c = moment_fit(g, idx, psi, alphas, spec.ball.center, cur, target,
                                "generate_atom");
      for (std::size_t b = 0; b < alphas.size(); ++b)
        for (std::size_t i = 0; i < idx.size(); ++i) vals[i] -= c[b] * psi[b][i];
    }
  }

  const double lq = lq_of_values(g, vals, spec.q);
  if (!(lq > 0.0)) throw std::invalid_argument("generate_atom: degenerate draw");
  const double scale =
      std::pow(ball_measure(g.dim(), r), 1.0 / spec.q - 1.0 / spec.p) / lq;
  SampledField out(g);
  for (std::size_t i = 0; i < idx.size(); ++i) out.values[idx[i]] = vals[i] * scale;
  out.ensure_finite("generate_atom");
  return out;
}

AtomCertificate validate_atom(const SampledField& a, const AtomSpec& spec) {
  spec.validate();
  AtomCertificate cert;
  const Grid& g = a.grid;
  const Mask inside = ball_mask(g, spec.ball);
  const Mask outside = complement_mask(g, spec.ball);
  const double sup_total = lq_norm(a, kInfinity);
  const double sup_out = mask_count(outside) ? lq_norm(a, kInfinity, &outside) : 0.0;
  cert.support_leakage = sup_total > 0.0 ? sup_out / sup_total : 0.0;

  const double cap = std::pow(ball_measure(g.dim(), spec.ball.radius), 1.0 / spec.q - 1.0 / spec.p);
  cert.lq_margin = lq_norm(a, spec.q) / cap;

  cert.max_moment_residual = 0.0;
  if (spec.ball.radius < 1.0) {
    const double l1 = lq_norm(a, 1.0);
    for (const auto& alpha : multi_indices_up_to(g.dim(), spec.moments)) {
      const double m = std::abs(moment(a, spec.ball.center, alpha));
      const double scale = l1 * std::pow(std::max(1.0, spec.ball.radius), alpha.order());
      cert.max_moment_residual =
          std::max(cert.max_moment_residual, scale > 0.0 ? m / scale : 0.0);
    }
  }

  std::ostringstream os;
  cert.pass = cert.support_leakage <= 1e-12 && cert.lq_margin <= 1.0 + 1e-9 &&
              cert.max_moment_residual <= 1e-10;
  os << "leakage=" << cert.support_leakage << " lq_margin=" << cert.lq_margin
     << " moment_residual=" << cert.max_moment_residual;
  cert.detail = os.str();
  return cert;
}

// ---- molecules ---------------------------------------------------------------------

MoleculeCertificate validate_molecule(const SampledField& m, const MoleculeSpec& spec) {
  spec.validate();
  MoleculeCertificate cert;
  const Grid& g = m.grid;
  const double r = spec.ball.radius;
  const int jmax = max_annulus_index(g, spec.ball);
  cert.hypothesis_satisfied = spec.decomposition_hypothesis(g.dim());

  for (int j = 0; j <= jmax; ++j) {
    const Mask mk = annulus_mask(g, spec.ball, j);
    const double lq = mask_count(mk) ? lq_norm(m, spec.q, &mk) : 0.0;
    const double budget = std::pow(2.0, -j * spec.delta) *
                          std::pow(ball_measure(g.dim(), std::ldexp(r, j)),
                                   1.0 / spec.q - 1.0 / spec.p);
    cert.annular_margins.push_back(lq / budget);
  }
  // everything beyond the last annulus, held to the next annular budget
  {
    const Mask rest = complement_mask(g, Ball{spec.ball.center, std::ldexp(r, jmax)});
    const double lq = mask_count(rest) ? lq_norm(m, spec.q, &rest) : 0.0;
    const double budget = std::pow(2.0, -(jmax + 1) * spec.delta) *
                          std::pow(ball_measure(g.dim(), std::ldexp(r, jmax + 1)),
                                   1.0 / spec.q - 1.0 / spec.p);
    cert.tail_margin = lq / budget;
  }

  if (r < 1.0) {
    const double budget = std::pow(ball_measure(g.dim(), r), 1.0 - 1.0 / spec.p) *
                          std::pow(r, spec.s);
    for (const auto& alpha : multi_indices_up_to(g.dim(), spec.floor_s())) {
      cert.moment_margins.push_back(std::abs(moment(m, spec.ball.center, alpha)) / budget);
    }
  }

  cert.worst_margin = cert.tail_margin;
  for (std::size_t j = 0; j < cert.annular_margins.size(); ++j) {
    if (cert.annular_margins[j] >= cert.worst_margin) {
      cert.worst_margin = cert.annular_margins[j];
      cert.worst_annulus = static_cast<int>(j);
    }
  }
  for (double mm : cert.moment_margins) cert.worst_margin = std::max(cert.worst_margin, mm);
  cert.pass = cert.worst_margin <= 1.0 + 1e-9;

  std::ostringstream os;
  os << "worst_margin=" << cert.worst_margin << " worst_annulus=" << cert.worst_annulus
     << (cert.hypothesis_satisfied ? "" : " (delta below the decomposition hypothesis)");
  cert.detail = os.str();
  return cert;
}

GeneratedMolecule generate_molecule(const MoleculeSpec& spec, const Grid& g, std::uint64_t seed) {
  spec.validate();
  const double r = spec.ball.radius;
  const int jmax = max_annulus_index(g, spec.ball);
  const bool small = r < 1.0;
  const int fs = spec.floor_s();
  const auto alphas = multi_indices_up_to(g.dim(), fs);
  const double mom_budget =
      std::pow(ball_measure(g.dim(), r), 1.0 - 1.0 / spec.p) * std::pow(r, spec.s);

  GeneratedMolecule out{SampledField(g), {}, 0.9};
  std::vector<double> head_sign(alphas.size(), 1.0);

  Rng rng(Rng::derive(seed, 0x301ec41e));

  std::vector<std::vector<double>> piece_vals;
  std::vector<std::vector<std::size_t>> piece_idx;

  for (int j = 0; j <= jmax; ++j) {
    const Mask mk = annulus_mask(g, spec.ball, j);
    const auto idx = mask_indices(mk);
    if (idx.empty()) {
      piece_vals.emplace_back();
      piece_idx.emplace_back();
      continue;
    }
    const double outer = std::ldexp(r, j);
    const double inner = j == 0 ? 0.0 : outer / 2.0;
    const double pad = std::max((outer - inner) / 4.0, g.spacing());
    std::vector<double> vals(idx.size());
    const auto mod = modulation(g, idx, spec.ball.center, outer, rng);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double d = g.distance(g.point(idx[i]), spec.ball.center);
      const double win = j == 0 ? smoothstep((outer - d) / pad)
                                : smoothstep((d - inner) / pad) * smoothstep((outer - d) / pad);
      vals[i] = win * mod[i];
    }
    double lq = lq_of_values(g, vals, spec.q);
    if (!(lq > 1e-290)) {  // degenerate window on a very thin annulus
      std::fill(vals.begin(), vals.end(), 1.0);
      lq = lq_of_values(g, vals, spec.q);
    }
    const double budget = std::pow(2.0, -j * spec.delta) *
                          std::pow(ball_measure(g.dim(), outer), 1.0 / spec.q - 1.0 / spec.p);
    const double fill = small ? 0.8 : 0.9;
    for (auto& v : vals) v *= fill * budget / lq;

    if (small) {
      // pin the in-annulus moments to a decaying share of the moment budget
      const AnnularBasis basis = build_annular_basis(spec.ball, j, spec.s, g);
      std::vector<double> cur(alphas.size()), tgt(alphas.size());
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        cur[a] = masked_moment(g, idx, vals, spec.ball.center, alphas[a]);
        tgt[a] = 0.45 * mom_budget * rng.sign() * std::ldexp(1.0, -(j + 1));
      }
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        const double shift = (tgt[a] - cur[a]) / basis.grid_measure;
        for (std::size_t i = 0; i < idx.size(); ++i) vals[i] += shift * basis.nu[a][i];
      }
      const double lq2 = lq_of_values(g, vals, spec.q);
      if (lq2 > 0.9 * budget)
        for (auto& v : vals) v *= 0.9 * budget / lq2;
    }
    piece_vals.push_back(std::move(vals));
    piece_idx.push_back(idx);
  }

  if (small) {
    // head term: exact moments, evenly budgeted, added on U_0
    const AnnularBasis b0 = build_annular_basis(spec.ball, 0, spec.s, g);
    const auto idx0 = mask_indices(b0.mask);
    std::vector<double> head(idx0.size(), 0.0);
    double frac = 0.45;
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      head_sign[a] = rng.sign();
      const double target = frac * mom_budget * head_sign[a];
      for (std::size_t i = 0; i < idx0.size(); ++i)
        head[i] += (target / b0.grid_measure) * b0.nu[a][i];
    }
    const double budget0 = std::pow(ball_measure(g.dim(), r), 1.0 / spec.q - 1.0 / spec.p);
    double lq_head = lq_of_values(g, head, spec.q);
    if (lq_head > 0.85 * budget0) {
      const double shrink = 0.85 * budget0 / lq_head;
      for (auto& v : head) v *= shrink;
      frac *= shrink;
      lq_head *= shrink;
    }
    // keep the U_0 base within the remaining room (triangle inequality)
    double lq0 = lq_of_values(g, piece_vals[0], spec.q);
    const double room = std::max(0.0, 0.9 * budget0 - lq_head);
    if (lq0 > room && lq0 > 0.0)
      for (auto& v : piece_vals[0]) v *= room / lq0;
    for (std::size_t i = 0; i < idx0.size(); ++i) piece_vals[0][i] += head[i];
    for (std::size_t a = 0; a < alphas.size(); ++a)
      out.head_target_fraction[alphas[a].str()] = frac * head_sign[a];
  }

  for (std::size_t j = 0; j < piece_vals.size(); ++j)
    for (std::size_t i = 0; i < piece_idx[j].size(); ++i)
      out.field.values[piece_idx[j][i]] += piece_vals[j][i];
  out.field.ensure_finite("generate_molecule");
  return out;
}

// ---- constructive decomposition ------------------------------------------------------

DecompositionResult decompose_molecule(const SampledField& m, const MoleculeSpec& spec) {
  spec.validate();
  const Grid& g = m.grid;
  const double r = spec.ball.radius;
  const int jmax = max_annulus_index(g, spec.ball);
  const int fs = spec.floor_s();
  const double sup_m = lq_norm(m, kInfinity);

  DecompositionResult res;
  res.small_ball = r < 1.0;
  res.annuli = jmax + 1;

  std::vector<Mask> masks(jmax + 1);
  for (int j = 0; j <= jmax; ++j) masks[j] = annulus_mask(g, spec.ball, j);

  if (!res.small_ball) {
    // r >= 1: the plain annular split; each 2^{j delta} m_j is atom material.
    SampledField recon(g);
    for (int j = 0; j <= jmax; ++j) {
      SampledField mj(g);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (masks[j][i]) mj.values[i] = m.values[i];
      const double budget = std::pow(2.0, -j * spec.delta) *
                            std::pow(ball_measure(g.dim(), std::ldexp(r, j)),
                                     1.0 / spec.q - 1.0 / spec.p);
      res.c1 = std::max(res.c1, lq_norm(mj, spec.q) / budget);
      for (std::size_t i = 0; i < g.size(); ++i) recon.values[i] += mj.values[i];
      res.a_list.push_back(std::move(mj));
    }
    double resid = 0.0;
    SampledField diff(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      diff.values[i] = m.values[i] - recon.values[i];
      resid = std::max(resid, std::abs(diff.values[i]));
    }
    res.reconstruction_residual = sup_m > 0.0 ? resid / sup_m : resid;
    if (res.reconstruction_residual > 1e-8)
      throw DecompositionError("decompose_molecule: annular split does not cover the field",
                               std::move(diff));
    return res;
  }

  res.alphas = multi_indices_up_to(g.dim(), fs);
  const std::size_t na = res.alphas.size();

  std::vector<AnnularBasis> bases;
  bases.reserve(jmax + 1);
  for (int j = 0; j <= jmax; ++j) {
    bases.push_back(build_annular_basis(spec.ball, j, spec.s, g));
    res.gram_conditions.push_back(bases.back().gram_condition);
  }

  // masked values of m_j and the exact annular moments S[j][a] = int_{U_j} m y^a
  std::vector<std::vector<std::size_t>> idx(jmax + 1);
  std::vector<std::vector<Complex>> mvals(jmax + 1);
  std::vector<std::vector<Complex>> S(jmax + 1, std::vector<Complex>(na));
  for (int j = 0; j <= jmax; ++j) {
    idx[j] = mask_indices(masks[j]);
    mvals[j].resize(idx[j].size());
    for (std::size_t i = 0; i < idx[j].size(); ++i) mvals[j][i] = m.values[idx[j][i]];
    for (std::size_t a = 0; a < na; ++a)
      S[j][a] = masked_moment_c(g, idx[j], mvals[j], spec.ball.center, res.alphas[a]);
  }

  // suffix sums N_{j,a}; N_{0,a} is the full centered moment of m
  res.n_table.assign(jmax + 2, std::vector<Complex>(na, Complex{0.0, 0.0}));
  for (int j = jmax; j >= 0; --j)
    for (std::size_t a = 0; a < na; ++a) res.n_table[j][a] = res.n_table[j + 1][a] + S[j][a];

  SampledField recon(g);

  // a_j = m_j - P_j
  for (int j = 0; j <= jmax; ++j) {
    const auto& b = bases[j];
    const double inv_npts = idx[j].empty() ? 0.0 : 1.0 / static_cast<double>(idx[j].size());
    std::vector<Complex> proj(idx[j].size());
    for (std::size_t a = 0; a < na; ++a) {
      Complex pr{0.0, 0.0};
      for (std::size_t i = 0; i < idx[j].size(); ++i) pr += mvals[j][i] * b.omega[a][i];
      pr *= inv_npts;
      for (std::size_t i = 0; i < idx[j].size(); ++i) proj[i] += pr * b.omega[a][i];
    }
    SampledField aj(g);
    for (std::size_t i = 0; i < idx[j].size(); ++i)
      aj.values[idx[j][i]] = mvals[j][i] - proj[i];
    const double budget = std::pow(2.0, -j * spec.delta) *
                          std::pow(ball_measure(g.dim(), std::ldexp(r, j)),
                                   1.0 / spec.q - 1.0 / spec.p);
    res.c1 = std::max(res.c1, lq_norm(aj, spec.q) / budget);
    for (std::size_t i = 0; i < idx[j].size(); ++i) recon.values[idx[j][i]] += aj.values[idx[j][i]];
    res.a_list.push_back(std::move(aj));
  }

  // a_{j,a} = N_{j+1,a} (nu_{j+1,a}/|U_{j+1}| - nu_{j,a}/|U_j|), j = 0..jmax-1
  res.a_cross.resize(std::max(0, jmax));
  for (int j = 0; j + 1 <= jmax; ++j) {
    res.a_cross[j].reserve(na);
    for (std::size_t a = 0; a < na; ++a) {
      SampledField f(g);
      const Complex nja = res.n_table[j + 1][a];
      if (nja != Complex{0.0, 0.0}) {
        const auto& bj = bases[j];
        const auto& bj1 = bases[j + 1];
        for (std::size_t i = 0; i < idx[j + 1].size(); ++i)
          f.values[idx[j + 1][i]] += nja * bj1.nu[a][i] / bj1.grid_measure;
        for (std::size_t i = 0; i < idx[j].size(); ++i)
          f.values[idx[j][i]] -= nja * bj.nu[a][i] / bj.grid_measure;
      }
      const double budget = std::pow(2.0, -j * spec.delta) *
                            std::pow(ball_measure(g.dim(), std::ldexp(r, j)),
                                     1.0 / spec.q - 1.0 / spec.p);
      res.c2 = std::max(res.c2, lq_norm(f, spec.q) / budget);
      for (std::size_t i = 0; i < g.size(); ++i) recon.values[i] += f.values[i];
      res.a_cross[j].push_back(std::move(f));
    }
  }

  // a_a = nu_{0,a} N_{0,a} / |B|
  for (std::size_t a = 0; a < na; ++a) {
    SampledField f(g);
    const auto& b0 = bases[0];
    for (std::size_t i = 0; i < idx[0].size(); ++i)
      f.values[idx[0][i]] = res.n_table[0][a] * b0.nu[a][i] / b0.grid_measure;
    const double budget = std::pow(ball_measure(g.dim(), r), 1.0 / spec.q - 1.0 / spec.p) *
                          std::pow(r, spec.s - res.alphas[a].order());
    res.c3 = std::max(res.c3, lq_norm(f, spec.q) / budget);
    for (std::size_t i = 0; i < idx[0].size(); ++i) recon.values[idx[0][i]] += f.values[idx[0][i]];
    res.a_head.push_back(std::move(f));
  }

  // N-decay constant (the suffix-sum bound)
  for (int j = 0; j <= jmax; ++j) {
    for (std::size_t a = 0; a < na; ++a) {
      const double env = std::pow(2.0, -j * spec.delta) *
                         std::pow(std::ldexp(r, j), res.alphas[a].order()) *
                         std::pow(ball_measure(g.dim(), std::ldexp(r, j)), 1.0 - 1.0 / spec.p);
      res.n_decay_constant =
          std::max(res.n_decay_constant, std::abs(res.n_table[j][a]) / env);
    }
  }

  // vanishing-moment defects of the pieces, relative to ||piece||_1 * R^{|beta|}
  auto piece_moment_defect = [&](const SampledField& f, double radius) {
    const double l1 = lq_norm(f, 1.0);
    if (!(l1 > 0.0)) return 0.0;
    double worst = 0.0;
    for (const auto& beta : res.alphas) {
      const double mm = std::abs(moment(f, spec.ball.center, beta));
      worst = std::max(worst, mm / (l1 * std::pow(radius, beta.order())));
    }
    return worst;
  };
  for (int j = 0; j <= jmax; ++j)
    res.max_piece_moment_residual = std::max(
        res.max_piece_moment_residual, piece_moment_defect(res.a_list[j], std::ldexp(r, j)));
  for (int j = 0; j + 1 <= jmax; ++j)
    for (std::size_t a = 0; a < na; ++a)
      res.max_piece_moment_residual =
          std::max(res.max_piece_moment_residual,
                   piece_moment_defect(res.a_cross[j][a], std::ldexp(r, j + 1)));

  double resid = 0.0;
  SampledField diff(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    diff.values[i] = m.values[i] - recon.values[i];
    resid = std::max(resid, std::abs(diff.values[i]));
  }
  res.reconstruction_residual = sup_m > 0.0 ? resid / sup_m : resid;
  if (res.reconstruction_residual > 1e-8) {
    std::ostringstream os;
    os << "decompose_molecule: reconstruction residual " << res.reconstruction_residual
       << " exceeds 1e-8";
    throw DecompositionError(os.str(), std::move(diff));
  }
  return res;
}

// ---- decay witness --------------------------------------------------------------------

SampledField decay_witness(const Grid& g, const Ball& ball, double s, double p, double q,
                           double head_fraction, double mass_fraction, std::uint64_t seed) {
  if (g.dim() != 1) throw std::invalid_argument("decay_witness: 1D only");
  const int fs = static_cast<int>(std::floor(s));
  const double r = ball.radius;
  const Mask msk = ball_mask(g, ball);
  const auto idx = mask_indices(msk);
  const auto alphas = multi_indices_up_to(1, fs);
  if (idx.size() < alphas.size() + 1)
    throw std::invalid_argument("decay_witness: ball too small for grid");

  Rng rng(Rng::derive(seed, 0xdeca));
  std::vector<double> raw(idx.size());
  const auto mod = modulation(g, idx, ball.center, r, rng);
  for (std::size_t i = 0; i < idx.size(); ++i)
    raw[i] = ball_window(g.distance(g.point(idx[i]), ball.center), r) * mod[i];

  std::vector<std::vector<double>> psi(alphas.size(), std::vector<double>(idx.size()));
  for (std::size_t b = 0; b < alphas.size(); ++b)
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Point x = g.point(idx[i]);
      psi[b][i] = pow_multi(x, ball.center, alphas[b]) *
                  ball_window(g.distance(x, ball.center), r);
    }

  // kill every moment of order <= floor(s)
  std::vector<double> killed = raw;
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> cur(alphas.size());
    for (std::size_t a = 0; a < alphas.size(); ++a)
      cur[a] = masked_moment(g, idx, killed, ball.center, alphas[a]);
    const auto c = moment_fit(g, idx, psi, alphas, ball.center, cur,
                              std::vector<double>(alphas.size(), 0.0), "decay_witness");
    for (std::size_t b = 0; b < alphas.size(); ++b)
      for (std::size_t i = 0; i < idx.size(); ++i) killed[i] -= c[b] * psi[b][i];
  }

  // smooth head carrying exactly the budgeted top moment
  const double budget = std::pow(ball_measure(1, r), 1.0 - 1.0 / p) * std::pow(r, s);
  Matrix M(alphas.size(), std::vector<double>(alphas.size(), 0.0));
  for (std::size_t a = 0; a < alphas.size(); ++a)
    for (std::size_t b = 0; b < alphas.size(); ++b)
      M[a][b] = masked_moment(g, idx, psi[b], ball.center, alphas[a]);
  std::vector<double> want(alphas.size(), 0.0);
  want.back() = budget;
  const auto d = lu_solve(std::move(M), std::move(want), "decay_witness");
  std::vector<double> head(idx.size(), 0.0);
  for (std::size_t b = 0; b < alphas.size(); ++b)
    for (std::size_t i = 0; i < idx.size(); ++i) head[i] += d[b] * psi[b][i];

  const double cap = std::pow(ball_measure(1, r), 1.0 / q - 1.0 / p);
  const double lq_head1 = lq_of_values(g, head, q);
  const double frac = std::min(0.9, head_fraction * cap / lq_head1);
  for (auto& v : head) v *= frac;

  const double lq_killed = lq_of_values(g, killed, q);
  const double room = std::max(0.0, cap - frac * lq_head1);
  if (lq_killed > 0.0)
    for (auto& v : killed) v *= mass_fraction * room / lq_killed;

  SampledField out(g);
  for (std::size_t i = 0; i < idx.size(); ++i) out.values[idx[i]] = killed[i] + head[i];
  out.ensure_finite("decay_witness");
  return out;
}

}  // namespace hardylab
