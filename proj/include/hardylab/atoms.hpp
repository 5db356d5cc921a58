#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hardylab/grid.hpp"

namespace hardylab {

// (p,q,M)-atom parameters. Vanishing moments up to order M are required only
// when r_B < 1.
struct AtomSpec {
  double p = 1.0;       // 0 < p <= 1
  double q = 2.0;       // 1 < q <= infinity
  int moments = 0;      // M
  Ball ball;

  void validate() const;
  // M >= floor(n(1/p-1)), needed when the atom is used for h^p synthesis
  bool synthesis_ready(int dim) const;
};

// (p,q,delta,s)-molecule parameters.
struct MoleculeSpec {
  double p = 1.0;
  double q = 2.0;
  double delta = 1.0;   // > 0
  double s = 1.0;       // >= 0
  Ball ball;

  int floor_s() const;
  double s_star() const;  // s - floor(s)
  void validate() const;
  // delta > max{0, floor(s) - n(1/p-1)}: the molecule->h^p hypothesis.
  bool decomposition_hypothesis(int dim) const;
};

struct AtomCertificate {
  bool pass = false;
  double support_leakage = 0.0;    // sup |a| outside B, relative to sup |a|
  double lq_margin = 0.0;          // ||a||_q / |B|^{1/q-1/p}
  double max_moment_residual = 0.0;  // relative to ||a||_1 (only when r_B < 1)
  std::string detail;
};

struct MoleculeCertificate {
  bool pass = false;
  std::vector<double> annular_margins;  // ||m||_{L^q(U_j)} * 2^{j delta} |2^j B|^{1/p-1/q}
  double tail_margin = 0.0;             // mass beyond the last annulus vs the next budget
  int worst_annulus = -1;
  std::vector<double> moment_margins;   // per alpha, grlex order (r_B < 1 only)
  double worst_margin = 0.0;
  bool hypothesis_satisfied = true;     // delta > max{0, floor(s)-n(1/p-1)}
  std::string detail;
};

// Orthonormal and dual polynomial bases on one annulus U_j(B), under the
// averaged inner product <f,g>_j = (1/#pts) sum_{U_j} f g. Monomials are
// centered at x_B and Gram-Schmidt runs in graded-lex order on scaled
// variables (x-x_B)/(2^j r_B) for conditioning.
struct AnnularBasis {
  int j = 0;
  std::vector<MultiIndex> alphas;              // grlex, |alpha| <= floor(s)
  Mask mask;                                    // U_j(B)
  double grid_measure = 0.0;                    // h^n * #pts
  std::vector<std::vector<double>> omega;       // orthonormal basis values on the mask
  std::vector<std::vector<double>> nu;          // dual basis values on the mask
  std::vector<std::vector<double>> lambda;      // omega_a = sum_b lambda[a][b] (x-x_B)^b
  double gram_condition = 0.0;
  double omega_sup = 0.0;                       // max_a ||omega_a||_inf
  double lambda_constant = 0.0;                 // max |lambda_ab| (2^j r)^{|a|}
  double nu_constant = 0.0;                     // max ||nu_a||_inf (2^j r)^{|a|}
};

AnnularBasis build_annular_basis(const Ball& ball, int j, double s, const Grid& g);

// Pieces of the constructive molecule -> atoms decomposition.
struct DecompositionResult {
  bool small_ball = true;                 // r_B < 1 branch?
  std::vector<SampledField> a_list;       // a_j = m_j - P_j (or m_j when r_B >= 1)
  std::vector<MultiIndex> alphas;
  // a_cross[j][a]: the summation-by-parts atoms a_{j,alpha}, support 2^{j+1}B
  std::vector<std::vector<SampledField>> a_cross;
  std::vector<SampledField> a_head;       // a_alpha = nu_{0,alpha} N_{0,alpha} / |B|
  // N[j][a]: suffix sums N_{j,alpha}; N[0][a] = centered alpha-moment of m
  std::vector<std::vector<Complex>> n_table;
  double reconstruction_residual = 0.0;   // sup |m - sum pieces| / sup |m|
  double c1 = 0.0;                        // max_j ||a_j||_q 2^{j delta} |2^jB|^{1/p-1/q}
  double c2 = 0.0;                        // same for the a_{j,alpha}
  double c3 = 0.0;                        // max_a ||a_alpha||_q |B|^{1/p-1/q} r^{|a|-s}
  double n_decay_constant = 0.0;          // max |N_{j,a}| 2^{j delta} (2^j r)^{-|a|} |2^jB|^{1/p-1}
  double max_piece_moment_residual = 0.0; // worst vanishing-moment defect, relative
  std::vector<double> gram_conditions;
  int annuli = 0;
};

class DecompositionError : public std::runtime_error {
 public:
  DecompositionError(const std::string& msg, SampledField residual)
      : std::runtime_error(msg), residual_field(std::move(residual)) {}
  SampledField residual_field;
};

// Constructive decomposition following the molecular characterization proof:
// m_j = m * 1_{U_j}, P_j the <.,.>_j projection onto polynomials of degree
// <= floor(s), plus the summation-by-parts cross terms and head terms.
// For r_B >= 1 the plain annular split {m_j} is returned.
// Throws DecompositionError if the grid reconstruction residual exceeds 1e-8.
DecompositionResult decompose_molecule(const SampledField& m, const MoleculeSpec& spec);

SampledField generate_atom(const AtomSpec& spec, const Grid& g, std::uint64_t seed);
AtomCertificate validate_atom(const SampledField& a, const AtomSpec& spec);

struct GeneratedMolecule {
  SampledField field;
  // exact alpha-moment carried by the head term, as a fraction of the budget
  std::map<std::string, double> head_target_fraction;
  double annular_fill = 0.9;  // target fraction of each annular L^q budget
};

GeneratedMolecule generate_molecule(const MoleculeSpec& spec, const Grid& g, std::uint64_t seed);
MoleculeCertificate validate_molecule(const SampledField& m, const MoleculeSpec& spec);

// Lemma-style witness for the heat decay experiments: supported in B(0,r),
// all centered moments of order <= floor(s) killed except the top 1D moment
// alpha = floor(s), which is set exactly to head_fraction * |B|^{1-1/p} r^s.
// mass_fraction controls how much of the remaining L^q budget the moment-free
// remainder uses.
SampledField decay_witness(const Grid& g, const Ball& ball, double s, double p, double q,
                           double head_fraction, double mass_fraction, std::uint64_t seed);

}  // namespace hardylab
