#include "hardylab/runners.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <numbers>
#include <optional>

#include "hardylab/atoms.hpp"
#include "hardylab/harness.hpp"
#include "hardylab/heat.hpp"
#include "hardylab/operators.hpp"
#include "hardylab/report.hpp"
#include "hardylab/rng.hpp"
#include "hardylab/spaces.hpp"

namespace hardylab::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string out_path(const RunConfig& cfg, const std::string& file) {
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / file).string();
}

void write_json(const json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << j.dump(2) << "\n";
}

json grid_json(const RunConfig& cfg) {
  return json{{"dim", cfg.dim}, {"half_width", cfg.half_width}, {"samples", cfg.samples}};
}

Grid grid_of(const RunConfig& cfg) { return make_grid(cfg.dim, cfg.half_width, cfg.samples); }

TimeGrid times_of(const RunConfig& cfg) {
  return TimeGrid::standard(cfg.time_k_max, cfg.time_ratio);
}

FilterBank bank_of(const RunConfig& cfg, const Grid& g) {
  const int jmax = cfg.filter_j_max > 0 ? cfg.filter_j_max : FilterBank::max_band_for(g);
  return build_filter_bank(g, jmax);
}

OperatorHandle operator_of(const RunConfig& cfg, const Grid& g) {
  const std::string& kind = cfg.operator_kind;
  if (kind == "identity" || kind == "dilation") {
    const Complex c{kind == "identity" ? 1.0 : cfg.operator_scale, 0.0};
    return OperatorHandle::from_multiplier(g, std::vector<Complex>(g.size(), c), kind);
  }
  if (kind == "local_riesz") return local_riesz(cfg.operator_axis, g);
  if (kind == "truncated_riesz") return truncated_riesz(cfg.operator_axis, g);
  if (kind == "heat_multiplier") {
    std::vector<Complex> prof(g.size());
    const double t = cfg.operator_scale;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Point xi = g.frequency(i);
      double x2 = 0.0;
      for (int d = 0; d < g.dim(); ++d) x2 += xi[d] * xi[d];
      prof[i] = std::exp(-t * t * x2);
    }
    return OperatorHandle::from_multiplier(g, std::move(prof), kind);
  }
  if (kind == "riesz_amplitude") {
    const int axis = cfg.operator_axis;
    const RadialProfile phi{};
    const int dim = g.dim();
    auto sigma = [axis, phi, dim](const Point&, const Point&, const Point& xi) -> Complex {
      double rho = 0.0;
      for (int d = 0; d < dim; ++d) rho += xi[d] * xi[d];
      rho = std::sqrt(rho);
      if (rho == 0.0) return Complex{0.0, 0.0};
      return Complex{0.0, 1.0} * ((1.0 - phi(rho)) * xi[axis] / rho);
    };
    return amplitude_operator(g, sigma, kind);
  }
  throw ConfigError("config: unknown operator_kind '" + kind +
                    "' (expected identity|dilation|local_riesz|truncated_riesz|heat_multiplier|"
                    "riesz_amplitude)");
}

SampledField input_or_default(const RunConfig& cfg, const Grid& g) {
  if (!cfg.input_field.empty()) {
    SampledField f = load_field(cfg.input_field);
    if (!(f.grid == g))
      throw ConfigError("config: input field grid does not match [grid] settings");
    return f;
  }
  AtomSpec spec;
  spec.p = cfg.atom_p;
  spec.q = cfg.atom_q;
  spec.moments = cfg.atom_moments;
  spec.ball = Ball{{0.0, 0.0, 0.0}, cfg.atom_radius};
  return generate_atom(spec, g, cfg.seed);
}

std::vector<Point> x0_lattice_of(const RunConfig& cfg, const Grid& g) {
  cfg.validate_x0_sweep();
  std::vector<Point> pts;
  const int count = cfg.sweep_x0_count;
  const double span = cfg.sweep_x0_span;
  // deliberately offset from the lattice by h/3: translation invariance is
  // then witnessed up to grid alignment, not by trivially equal samplings
  const double off = g.spacing() / 3.0;
  for (int k = 0; k < count; ++k) {
    Point p{0.0, 0.0, 0.0};
    p[0] = count == 1 ? off : -span + off + 2.0 * span * k / (count - 1);
    pts.push_back(p);
  }
  return pts;
}

// Index-keyed dispatch: results land in slot i regardless of worker schedule,
// so threaded runs reproduce sequential ones exactly.
template <typename T>
std::vector<T> parallel_map(int threads, std::size_t n, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(n);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) slots[i] = fn(i);
  } else {
    std::vector<std::future<void>> jobs;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < threads; ++t) {
      jobs.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) slots[i] = fn(i);
      }));
    }
    for (auto& j : jobs) j.get();
  }
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------- subcommands

int run_maximal(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  const SampledField f = input_or_default(cfg, g);
  const SampledField m = maximal(f, times_of(cfg));
  CsvWriter csv({"flat_index", "coord0", "value"});
  for (std::size_t i = 0; i < g.size(); ++i)
    csv.row({std::to_string(i), format_double(g.point(i)[0]), format_double(m.values[i].real())});
  csv.save(out_path(cfg, "maximal.csv"));
  json j{{"subcommand", "maximal"},
         {"grid", grid_json(cfg)},
         {"sup", lq_norm(m, kInfinity)},
         {"mass", quadrature(m).real()},
         {"pass", true}};
  write_json(j, out_path(cfg, "maximal.json"));
  return 0;
}

int run_hp_norm(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  const SampledField f = input_or_default(cfg, g);
  const double v = hp_quasinorm(f, cfg.theorem_p, times_of(cfg));
  CsvWriter csv({"p", "hp_quasinorm"});
  csv.row({format_double(cfg.theorem_p), format_double(v)});
  csv.save(out_path(cfg, "hp-norm.csv"));
  write_json(json{{"subcommand", "hp-norm"},
                  {"grid", grid_json(cfg)},
                  {"p", cfg.theorem_p},
                  {"hp_quasinorm", v},
                  {"pass", std::isfinite(v)}},
             out_path(cfg, "hp-norm.json"));
  return std::isfinite(v) ? 0 : 1;
}

int run_lip_norm(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  const FilterBank bank = bank_of(cfg, g);
  SampledField f = cfg.input_field.empty()
                       ? make_poly_cutoff({0.0, 0.0, 0.0}, MultiIndex{{1, 0, 0}}, g)
                       : load_field(cfg.input_field);
  const LipschitzResult res = lipschitz_norm(f, cfg.theorem_s, bank);
  CsvWriter csv({"band", "profile"});
  for (std::size_t j = 0; j < res.profile.size(); ++j)
    csv.row({std::to_string(j), format_double(res.profile[j])});
  csv.save(out_path(cfg, "lip-norm.csv"));
  // frequency-side filter profiles, for inspection
  {
    std::vector<std::string> header{"frequency"};
    for (int j = 0; j <= bank.j_max(); ++j) header.push_back("band" + std::to_string(j));
    CsvWriter profiles(header);
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::vector<std::string> row{format_double(g.frequency(i)[0])};
      for (int j = 0; j <= bank.j_max(); ++j)
        row.push_back(format_double(bank.band(j)[i].real()));
      profiles.row(std::move(row));
    }
    profiles.save(out_path(cfg, "filter-profiles.csv"));
  }
  write_json(json{{"subcommand", "lip-norm"},
                  {"grid", grid_json(cfg)},
                  {"s", cfg.theorem_s},
                  {"norm", res.norm},
                  {"arg_max", res.arg_max},
                  {"pass", std::isfinite(res.norm)}},
             out_path(cfg, "lip-norm.json"));
  return std::isfinite(res.norm) ? 0 : 1;
}

int run_bmo_norm(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  SampledField f = cfg.input_field.empty()
                       ? make_poly_cutoff({0.0, 0.0, 0.0}, MultiIndex{{1, 0, 0}}, g)
                       : load_field(cfg.input_field);
  const BmoResult res = bmo_norm(f, default_ball_lattice(g));
  CsvWriter csv({"regime", "value"});
  csv.row({"large_ball", format_double(res.large_ball_max)});
  csv.row({"small_ball", format_double(res.small_ball_max)});
  csv.row({"norm", format_double(res.norm)});
  csv.save(out_path(cfg, "bmo-norm.csv"));
  write_json(json{{"subcommand", "bmo-norm"},
                  {"grid", grid_json(cfg)},
                  {"norm", res.norm},
                  {"large_ball_max", res.large_ball_max},
                  {"small_ball_max", res.small_ball_max},
                  {"pass", std::isfinite(res.norm)}},
             out_path(cfg, "bmo-norm.json"));
  return std::isfinite(res.norm) ? 0 : 1;
}

int run_make_atom(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  AtomSpec spec;
  spec.p = cfg.atom_p;
  spec.q = cfg.atom_q;
  spec.moments = cfg.atom_moments;
  spec.ball = Ball{{0.0, 0.0, 0.0}, cfg.atom_radius};
  const SampledField a = generate_atom(spec, g, cfg.seed);
  const AtomCertificate cert = validate_atom(a, spec);
  save_field(a, out_path(cfg, "atom.field"));
  CsvWriter csv({"metric", "value"});
  csv.row({"support_leakage", format_double(cert.support_leakage)});
  csv.row({"lq_margin", format_double(cert.lq_margin)});
  csv.row({"max_moment_residual", format_double(cert.max_moment_residual)});
  csv.save(out_path(cfg, "make-atom.csv"));
  write_json(json{{"subcommand", "make-atom"},
                  {"grid", grid_json(cfg)},
                  {"p", spec.p},
                  {"q", spec.q},
                  {"moments", spec.moments},
                  {"radius", spec.ball.radius},
                  {"seed", cfg.seed},
                  {"field", "atom.field"},
                  {"certificate", cert.detail},
                  {"pass", cert.pass}},
             out_path(cfg, "make-atom.json"));
  return cert.pass ? 0 : 1;
}

MoleculeSpec molecule_spec_of(const RunConfig& cfg) {
  MoleculeSpec spec;
  spec.p = cfg.molecule_p;
  spec.q = cfg.molecule_q;
  spec.delta = cfg.molecule_delta;
  spec.s = cfg.molecule_s;
  spec.ball = Ball{{0.0, 0.0, 0.0}, cfg.molecule_radius};
  return spec;
}

int run_make_molecule(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  const MoleculeSpec spec = molecule_spec_of(cfg);
  const GeneratedMolecule gm = generate_molecule(spec, g, cfg.seed);
  const MoleculeCertificate cert = validate_molecule(gm.field, spec);
  save_field(gm.field, out_path(cfg, "molecule.field"));
  CsvWriter csv({"annulus", "margin"});
  for (std::size_t j = 0; j < cert.annular_margins.size(); ++j)
    csv.row({std::to_string(j), format_double(cert.annular_margins[j])});
  csv.save(out_path(cfg, "make-molecule.csv"));
  json heads(json::value_t::object);
  for (const auto& [k, v] : gm.head_target_fraction) heads[k] = v;
  write_json(json{{"subcommand", "make-molecule"},
                  {"grid", grid_json(cfg)},
                  {"spec", {{"p", spec.p}, {"q", spec.q}, {"delta", spec.delta}, {"s", spec.s},
                            {"radius", spec.ball.radius}}},
                  {"seed", cfg.seed},
                  {"field", "molecule.field"},
                  {"head_target_fraction", heads},
                  {"worst_margin", cert.worst_margin},
                  {"pass", cert.pass}},
             out_path(cfg, "make-molecule.json"));
  return cert.pass ? 0 : 1;
}

int run_validate(const RunConfig& cfg) {
  if (cfg.input_field.empty())
    throw ConfigError("config: validate needs experiment_input_field");
  const SampledField f = load_field(cfg.input_field);
  // validate against both interpretations; the summary carries both verdicts
  AtomSpec aspec;
  aspec.p = cfg.atom_p;
  aspec.q = cfg.atom_q;
  aspec.moments = cfg.atom_moments;
  aspec.ball = Ball{{0.0, 0.0, 0.0}, cfg.atom_radius};
  MoleculeSpec mspec = molecule_spec_of(cfg);
  mspec.ball.radius = cfg.molecule_radius;
  const AtomCertificate ac = validate_atom(f, aspec);
  const MoleculeCertificate mc = validate_molecule(f, mspec);
  CsvWriter csv({"kind", "pass", "detail"});
  csv.row({"atom", ac.pass ? "1" : "0", ac.detail});
  csv.row({"molecule", mc.pass ? "1" : "0", mc.detail});
  csv.save(out_path(cfg, "validate.csv"));
  write_json(json{{"subcommand", "validate"},
                  {"grid", grid_json(cfg)},
                  {"atom_pass", ac.pass},
                  {"atom_detail", ac.detail},
                  {"molecule_pass", mc.pass},
                  {"molecule_detail", mc.detail},
                  {"pass", ac.pass || mc.pass}},
             out_path(cfg, "validate.json"));
  return (ac.pass || mc.pass) ? 0 : 1;
}

int run_decompose(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  const MoleculeSpec spec = molecule_spec_of(cfg);
  SampledField m = cfg.input_field.empty() ? generate_molecule(spec, g, cfg.seed).field
                                           : load_field(cfg.input_field);
  try {
    const DecompositionResult res = decompose_molecule(m, spec);
    const MoleculeCertificate cert = validate_molecule(m, spec);
    CsvWriter csv({"metric", "value"});
    csv.row({"reconstruction_residual", format_double(res.reconstruction_residual)});
    csv.row({"c1", format_double(res.c1)});
    csv.row({"c2", format_double(res.c2)});
    csv.row({"c3", format_double(res.c3)});
    csv.row({"n_decay_constant", format_double(res.n_decay_constant)});
    csv.row({"max_piece_moment_residual", format_double(res.max_piece_moment_residual)});
    csv.row({"annuli", std::to_string(res.annuli)});
    for (std::size_t j = 0; j < cert.annular_margins.size(); ++j)
      csv.row({"margin_u" + std::to_string(j), format_double(cert.annular_margins[j])});
    csv.save(out_path(cfg, "decompose.csv"));
    json conds = json::array();
    for (double c : res.gram_conditions) conds.push_back(c);
    json margins = json::array();
    for (double v : cert.annular_margins) margins.push_back(v);
    write_json(json{{"subcommand", "decompose"},
                    {"grid", grid_json(cfg)},
                    {"small_ball", res.small_ball},
                    {"reconstruction_residual", res.reconstruction_residual},
                    {"constants", {{"c1", res.c1}, {"c2", res.c2}, {"c3", res.c3},
                                   {"n_decay", res.n_decay_constant}}},
                    {"max_piece_moment_residual", res.max_piece_moment_residual},
                    {"annular_margins", margins},
                    {"gram_conditions", conds},
                    {"pass", true}},
               out_path(cfg, "decompose.json"));
    return 0;
  } catch (const DecompositionError& e) {
    save_field(e.residual_field, out_path(cfg, "decompose_residual.field"));
    write_json(json{{"subcommand", "decompose"},
                    {"grid", grid_json(cfg)},
                    {"error", e.what()},
                    {"residual_field", "decompose_residual.field"},
                    {"pass", false}},
               out_path(cfg, "decompose.json"));
    return 1;
  }
}

int run_czoi_check(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  const OperatorHandle T = operator_of(cfg, g);
  CzoiParams params;
  params.smoothness = cfg.czoi_m;
  params.epsilon = cfg.czoi_eps;
  const CzoiCertificate cert = czoi_check(T, params);
  CsvWriter csv({"metric", "value"});
  csv.row({"size_constant_near", format_double(cert.size_constant_near)});
  csv.row({"size_constant_far", format_double(cert.size_constant_far)});
  csv.row({"holder_constant", format_double(cert.holder_constant_refined)});
  csv.row({"refinement_ratio", format_double(cert.refinement_ratio)});
  csv.row({"l2_norm_estimate", format_double(cert.l2_norm_estimate)});
  csv.save(out_path(cfg, "czoi-check.csv"));
  // operator profile along axis 0, for inspection
  {
    CsvWriter profile({"coordinate", "re", "im"});
    if (T.kind() == OperatorKind::multiplier) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Complex v = T.multiplier_profile()[i];
        profile.row({format_double(g.frequency(i)[0]), format_double(v.real()),
                     format_double(v.imag())});
      }
    } else if (T.kind() == OperatorKind::explicit_kernel) {
      const Point origin{0.0, 0.0, 0.0};
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Complex v = T.kernel_sample(g.point(i), origin);
        profile.row({format_double(g.point(i)[0]), format_double(v.real()),
                     format_double(v.imag())});
      }
    }
    if (profile.size() > 0) profile.save(out_path(cfg, "operator-profile.csv"));
  }
  write_json(json{{"subcommand", "czoi-check"},
                  {"grid", grid_json(cfg)},
                  {"operator", cfg.operator_kind},
                  {"M", params.smoothness},
                  {"epsilon", params.epsilon},
                  {"detail", cert.detail},
                  {"pass", cert.pass}},
             out_path(cfg, "czoi-check.json"));
  return cert.pass ? 0 : 1;
}

int run_condition_1_7(const RunConfig& cfg) {
  const Grid g = grid_of(cfg);
  const OperatorHandle T = operator_of(cfg, g);
  const FilterBank bank = bank_of(cfg, g);
  const auto x0s = x0_lattice_of(cfg, g);
  const Condition17Report rep = condition_1_7(T, cfg.theorem_s, x0s, bank);
  CsvWriter csv({"x0", "alpha", "lambda_norm", "profile"});
  for (const auto& e : rep.entries) {
    std::string prof;
    for (std::size_t j = 0; j < e.profile.size(); ++j) {
      if (j) prof += ";";
      prof += format_double(e.profile[j]);
    }
    csv.row({format_double(e.x0[0]), e.alpha.str(), format_double(e.lambda_norm), prof});
  }
  csv.save(out_path(cfg, "condition-1-7.csv"));
  bool finite = true;
  for (const auto& e : rep.entries) finite = finite && std::isfinite(e.lambda_norm);
  const bool spread_ok = !T.is_convolution() || rep.spread <= 0.05;
  const bool pass = finite && rep.tail_decaying && spread_ok;
  write_json(json{{"subcommand", "condition-1-7"},
                  {"grid", grid_json(cfg)},
                  {"operator", cfg.operator_kind},
                  {"s", cfg.theorem_s},
                  {"sup", rep.sup},
                  {"x0_spread", rep.spread},
                  {"tail_decaying", rep.tail_decaying},
                  {"pass", pass}},
             out_path(cfg, "condition-1-7.json"));
  return pass ? 0 : 1;
}

int run_atom_map(const RunConfig& cfg) {
  cfg.validate_radius_sweep();
  const Grid g = grid_of(cfg);
  const OperatorHandle T = operator_of(cfg, g);
  TheoremConfig tc{cfg.dim, cfg.theorem_p, cfg.theorem_s, cfg.theorem_eps};
  const AtomMapReport rep =
      atom_to_molecule_check(T, tc, cfg.sweep_radii, cfg.sweep_seeds, cfg.seed);
  CsvWriter csv({"radius", "seed", "worst_margin", "worst_annulus", "worst_moment_margin"});
  for (const auto& c : rep.cases)
    csv.row({format_double(c.r), std::to_string(c.seed), format_double(c.worst_margin),
             std::to_string(c.worst_annulus), format_double(c.worst_moment_margin)});
  csv.save(out_path(cfg, "atom-map.csv"));
  write_json(json{{"subcommand", "atom-map"},
                  {"grid", grid_json(cfg)},
                  {"operator", cfg.operator_kind},
                  {"theorem", {{"p", tc.p}, {"s", tc.s}, {"eps", tc.eps},
                               {"delta", tc.delta()}, {"mu", tc.mu()}}},
                  {"fitted_constant", rep.fitted_constant},
                  {"cases", rep.cases.size()},
                  {"pass", rep.all_finite}},
             out_path(cfg, "atom-map.json"));
  return rep.all_finite ? 0 : 1;
}

int run_cancellation(const RunConfig& cfg) {
  cfg.validate_radius_sweep();
  const Grid g = grid_of(cfg);
  const OperatorHandle T = operator_of(cfg, g);
  TheoremConfig tc{cfg.dim, cfg.theorem_p, cfg.theorem_s, cfg.theorem_eps};
  CsvWriter csv({"radius", "alpha", "raw_moment", "ratio"});
  double worst_ratio = 0.0;
  std::vector<double> log_r, log_m;
  for (double r : cfg.sweep_radii) {
    if (!(r < 1.0)) continue;
    AtomSpec spec;
    spec.p = tc.p;
    spec.q = 2.0;
    spec.moments = tc.floor_s();
    spec.ball = Ball{{0.0, 0.0, 0.0}, r};
    const SampledField a = generate_atom(spec, g, cfg.seed);
    const auto rows = cancellation_budget(T, a, spec.ball, tc);
    double raw_max = 0.0;
    for (const auto& row : rows) {
      csv.row({format_double(r), row.alpha.str(), format_double(row.raw_moment),
               format_double(row.ratio)});
      worst_ratio = std::max(worst_ratio, row.ratio);
      raw_max = std::max(raw_max, row.raw_moment);
    }
    if (raw_max > 1e-13) {
      log_r.push_back(std::log(r));
      log_m.push_back(std::log(raw_max));
    }
  }
  if (csv.size() == 0)
    throw ConfigError("config: cancellation needs at least one sweep radius below 1");
  csv.save(out_path(cfg, "cancellation.csv"));
  // slope of the raw moment against r_B, when the moments rise above roundoff
  double slope = 0.0;
  bool slope_valid = log_r.size() >= 2;
  if (slope_valid) {
    const std::size_t n = log_r.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += log_r[i];
      sy += log_m[i];
      sxx += log_r[i] * log_r[i];
      sxy += log_r[i] * log_m[i];
    }
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  const bool pass = std::isfinite(worst_ratio);
  write_json(json{{"subcommand", "cancellation"},
                  {"grid", grid_json(cfg)},
                  {"operator", cfg.operator_kind},
                  {"max_ratio", worst_ratio},
                  {"raw_moment_slope", slope},
                  {"slope_valid", slope_valid},
                  {"budget_exponent", tc.floor_s() + tc.mu()},
                  {"pass", pass}},
             out_path(cfg, "cancellation.json"));
  return pass ? 0 : 1;
}

int run_hp_ratio(const RunConfig& cfg) {
  cfg.validate_radius_sweep();
  const Grid g = grid_of(cfg);
  const OperatorHandle T = operator_of(cfg, g);
  const TimeGrid times = times_of(cfg);

  struct Case {
    bool molecule = false;
    double r = 0.0;
    int si = 0;
  };
  std::vector<Case> plan;
  for (double r : cfg.sweep_radii)
    for (int si = 0; si < cfg.sweep_seeds; ++si) plan.push_back({false, r, si});
  for (int si = 0; si < cfg.sweep_seeds; ++si) plan.push_back({true, cfg.molecule_radius, si});

  std::vector<std::string> labels;
  for (const auto& c : plan)
    labels.push_back((c.molecule ? "molecule_s" + std::to_string(c.si)
                                 : "atom_r" + format_double(c.r) + "_s" + std::to_string(c.si)));
  // sweep cases are independent; generation may run on the worker pool
  const std::vector<SampledField> samples = parallel_map<SampledField>(
      cfg.threads, plan.size(), [&](std::size_t i) {
        const Case& c = plan[i];
        const std::uint64_t s = Rng::derive(cfg.seed, 9000 + i);
        if (c.molecule) {
          MoleculeSpec mspec = molecule_spec_of(cfg);
          mspec.p = cfg.theorem_p;
          return generate_molecule(mspec, g, s).field;
        }
        AtomSpec spec;
        spec.p = cfg.theorem_p;
        spec.q = 2.0;
        spec.moments = static_cast<int>(std::floor(cfg.dim * (1.0 / cfg.theorem_p - 1.0)));
        spec.ball = Ball{{0.0, 0.0, 0.0}, c.r};
        return generate_atom(spec, g, s);
      });
  const HpRatioReport rep = hp_operator_ratio(T, cfg.theorem_p, times, samples, labels);
  CsvWriter csv({"label", "ratio", "skipped"});
  for (const auto& s : rep.samples)
    csv.row({s.label, format_double(s.ratio), s.skipped ? "1" : "0"});
  csv.save(out_path(cfg, "hp-ratio.csv"));
  write_json(json{{"subcommand", "hp-ratio"},
                  {"grid", grid_json(cfg)},
                  {"operator", cfg.operator_kind},
                  {"p", cfg.theorem_p},
                  {"max_ratio", rep.max_ratio},
                  {"samples_used", rep.used},
                  {"pass", std::isfinite(rep.max_ratio)}},
             out_path(cfg, "hp-ratio.json"));
  return std::isfinite(rep.max_ratio) ? 0 : 1;
}

// ----------------------------------------------------------------- selftest

struct SelfCheck {
  std::string module;
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
};

SampledField random_field(const Grid& g, std::uint64_t seed) {
  Rng rng(seed);
  SampledField f(g);
  for (auto& z : f.values) z = Complex{rng.normal(), rng.normal()};
  return f;
}

int run_selftest(const RunConfig& cfg) {
  std::vector<SelfCheck> checks;
  auto add = [&](const std::string& module, const std::string& name, double measured,
                 double threshold) {
    checks.push_back({module, name, measured <= threshold, measured, threshold});
  };

  const Grid g1 = make_grid(1, 8.0, 256);
  const SampledField f = random_field(g1, Rng::derive(cfg.seed, 1));
  const SampledField w = random_field(g1, Rng::derive(cfg.seed, 2));
  const double h = g1.spacing();

  // --- grid_core
  {
    double l2 = lq_norm(f, 2.0);
    const auto F = dft_forward(g1, f.values);
    double acc = 0.0;
    for (const auto& z : F) acc += std::norm(z);
    acc *= g1.cell_volume() / static_cast<double>(g1.size());
    add("grid_core", "parseval", std::abs(acc - l2 * l2) / (l2 * l2), 1e-12);

    const SampledField conv_delta = convolve(f, discrete_delta(g1));
    double err = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i)
      err = std::max(err, std::abs(conv_delta.values[i] - f.values[i]));
    add("grid_core", "convolve_delta_identity", err / lq_norm(f, kInfinity), 1e-12);

    const SampledField fg = convolve(f, w), gf = convolve(w, f);
    double comm = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i)
      comm = std::max(comm, std::abs(fg.values[i] - gf.values[i]));
    add("grid_core", "convolve_commutes", comm / lq_norm(fg, kInfinity), 1e-12);

    const Ball b{{0.0, 0.0, 0.0}, 0.75};
    const int jm = max_annulus_index(g1, b);
    std::vector<int> cover(g1.size(), 0);
    for (int j = 0; j <= jm; ++j) {
      const Mask m = annulus_mask(g1, b, j);
      for (std::size_t i = 0; i < g1.size(); ++i) cover[i] += m[i];
    }
    const Mask big = ball_mask(g1, Ball{b.center, std::ldexp(b.radius, jm)});
    double bad = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i)
      if (cover[i] != (big[i] ? 1 : 0)) bad += 1.0;
    add("grid_core", "annulus_partition", bad, 0.0);

    // translation consistency on a lattice vector (support clear of the wrap)
    SampledField bump(g1);
    for (std::size_t i = 0; i < g1.size(); ++i) {
      const double x = g1.point(i)[0];
      if (x > -4.0 && x < -1.0) bump.values[i] = std::cos(3.0 * x);
    }
    SampledField shifted(g1);
    const int shift = 32;
    for (std::size_t i = 0; i < g1.size(); ++i)
      shifted.values[(i + shift) % g1.size()] = bump.values[i];
    const MultiIndex a2{{2, 0, 0}};
    const Complex m0 = moment(bump, {0.25, 0.0, 0.0}, a2);
    const Complex m1 = moment(shifted, {0.25 + shift * h, 0.0, 0.0}, a2);
    add("grid_core", "moment_translation", std::abs(m0 - m1) / std::abs(m0), 1e-10);
  }

  // --- heat_maximal
  {
    const double mass0 = std::abs(quadrature(f));
    for (double t : {0.1, 0.3, 0.9}) {
      const SampledField u = heat_apply(f, t);
      add("heat_maximal", "mass_conservation_t" + format_double(t),
          std::abs(quadrature(u) - quadrature(f)) / mass0, 1e-10);
      add("heat_maximal", "contractivity_t" + format_double(t),
          std::max(0.0, lq_norm(u, kInfinity) / lq_norm(f, kInfinity) - 1.0), 1e-12);
    }
    const SampledField two_step = heat_apply(heat_apply(f, 0.3), 0.4);
    const SampledField one_step = heat_apply(f, 0.5);
    double semi = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i)
      semi = std::max(semi, std::abs(two_step.values[i] - one_step.values[i]));
    add("heat_maximal", "semigroup", semi / lq_norm(one_step, kInfinity), 1e-10);

    // spectral vs direct Gaussian quadrature at t = 0.3
    const double t = 0.3;
    SampledField kernel(g1);
    for (std::size_t i = 0; i < g1.size(); ++i) {
      const double z = g1.point(i)[0];
      kernel.values[i] = std::exp(-z * z / (4 * t * t)) / std::sqrt(4 * std::numbers::pi * t * t);
    }
    const SampledField direct = convolve(f, kernel);
    const SampledField spectral = heat_apply(f, t);
    double err = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i)
      err = std::max(err, std::abs(direct.values[i] - spectral.values[i]));
    add("heat_maximal", "gaussian_oracle", err / lq_norm(spectral, kInfinity), 1e-6);

    const SampledField coarse = maximal(f, TimeGrid::standard(12));
    const SampledField fine = maximal(f, TimeGrid::standard(24));
    double mono = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i)
      mono = std::max(mono, coarse.values[i].real() - fine.values[i].real());
    add("heat_maximal", "monotone_refinement", std::max(0.0, mono), 1e-15);
  }

  // --- function_spaces
  {
    const FilterBank bank = build_filter_bank(g1, FilterBank::max_band_for(g1));
    double min_surplus = kInfinity;
    const double covered = 1.5 * std::ldexp(1.0, bank.j_max());
    for (std::size_t i = 0; i < g1.size(); ++i) {
      const Point xi = g1.frequency(i);
      const double rho = std::abs(xi[0]);
      if (rho > covered) continue;
      double sum = 0.0;
      for (int j = 0; j <= bank.j_max(); ++j) sum += bank.band(j)[i].real();
      min_surplus = std::min(min_surplus, sum);
    }
    add("function_spaces", "partition_surplus", std::max(0.0, 1.0 - min_surplus), 1e-12);

    SampledField cf(g1, std::vector<Complex>(g1.size(), Complex{3.25, 0.0}));
    const LipschitzResult lc = lipschitz_norm(cf, 1.0, bank);
    add("function_spaces", "lip_constant_field", std::abs(lc.norm - 3.25) / 3.25, 1e-12);

    const SampledField gpoly = make_poly_cutoff({0.0, 0.0, 0.0}, MultiIndex{{1, 0, 0}}, g1);
    const LipschitzResult l1r = lipschitz_norm(gpoly, 1.5, bank);
    SampledField g2x(g1);
    for (std::size_t i = 0; i < g1.size(); ++i) g2x.values[i] = 2.0 * gpoly.values[i];
    const LipschitzResult l2r = lipschitz_norm(g2x, 1.5, bank);
    add("function_spaces", "lip_homogeneity", std::abs(l2r.norm - 2.0 * l1r.norm) / l2r.norm,
        1e-12);

    SampledField c2(g1, std::vector<Complex>(g1.size(), Complex{-1.5, 0.0}));
    const BmoResult bc = bmo_norm(c2, default_ball_lattice(g1));
    add("function_spaces", "bmo_constant_field", std::abs(bc.norm - 1.5) / 1.5, 1e-12);

    const SampledField chi = make_cutoff(CutoffSpec{}, make_grid(1, 16.0, 512));
    const double qv = quadrature(chi).real();
    add("function_spaces", "cutoff_squeeze",
        qv >= 4.0 && qv <= 6.0 ? 0.0 : 1.0, 0.0);
  }

  // --- atoms_molecules
  {
    AtomSpec aspec;
    aspec.p = 0.8;
    aspec.q = 2.0;
    aspec.moments = 1;
    aspec.ball = Ball{{0.0, 0.0, 0.0}, 0.5};
    const Grid ga = make_grid(1, 8.0, 1024);
    double worst = 0.0;
    for (int si = 0; si < 3; ++si) {
      const SampledField a = generate_atom(aspec, ga, Rng::derive(cfg.seed, 100 + si));
      const AtomCertificate cert = validate_atom(a, aspec);
      worst = std::max(worst, cert.pass ? 0.0 : 1.0);
    }
    add("atoms_molecules", "atom_roundtrip", worst, 0.0);

    MoleculeSpec mspec;
    mspec.p = 0.8;
    mspec.q = 2.0;
    mspec.delta = 1.0;
    mspec.s = 1.2;
    mspec.ball = Ball{{0.0, 0.0, 0.0}, 0.5};
    double worst_margin = 0.0;
    for (int si = 0; si < 3; ++si) {
      const GeneratedMolecule gm = generate_molecule(mspec, ga, Rng::derive(cfg.seed, 200 + si));
      const MoleculeCertificate cert = validate_molecule(gm.field, mspec);
      worst_margin = std::max(worst_margin, cert.worst_margin);
    }
    add("atoms_molecules", "molecule_roundtrip_margin", worst_margin, 0.9 + 1e-9);

    const AnnularBasis basis = build_annular_basis(mspec.ball, 2, mspec.s, ga);
    double dual_err = 0.0;
    const auto idx = [&] {
      std::vector<std::size_t> v;
      for (std::size_t i = 0; i < basis.mask.size(); ++i)
        if (basis.mask[i]) v.push_back(i);
      return v;
    }();
    for (std::size_t a = 0; a < basis.alphas.size(); ++a) {
      for (std::size_t b = 0; b < basis.alphas.size(); ++b) {
        double ip = 0.0;
        for (std::size_t i = 0; i < idx.size(); ++i)
          ip += basis.nu[a][i] *
                pow_multi(ga.point(idx[i]), mspec.ball.center, basis.alphas[b]);
        ip /= static_cast<double>(idx.size());
        dual_err = std::max(dual_err, std::abs(ip - (a == b ? 1.0 : 0.0)));
      }
    }
    add("atoms_molecules", "dual_basis_identity", dual_err, 1e-10);

    const GeneratedMolecule gm1 = generate_molecule(mspec, ga, Rng::derive(cfg.seed, 301));
    const GeneratedMolecule gm2 = generate_molecule(mspec, ga, Rng::derive(cfg.seed, 302));
    const DecompositionResult d1 = decompose_molecule(gm1.field, mspec);
    const DecompositionResult d2 = decompose_molecule(gm2.field, mspec);
    add("atoms_molecules", "decomposition_residual",
        std::max(d1.reconstruction_residual, d2.reconstruction_residual), 1e-8);
    add("atoms_molecules", "decomposition_moments",
        std::max(d1.max_piece_moment_residual, d2.max_piece_moment_residual), 1e-10);

    SampledField msum(ga);
    for (std::size_t i = 0; i < ga.size(); ++i)
      msum.values[i] = gm1.field.values[i] + gm2.field.values[i];
    const DecompositionResult dsum = decompose_molecule(msum, mspec);
    double lin = 0.0;
    double scale = 0.0;
    for (std::size_t j = 0; j < dsum.a_list.size(); ++j) {
      for (std::size_t i = 0; i < ga.size(); ++i) {
        lin = std::max(lin, std::abs(dsum.a_list[j].values[i] - d1.a_list[j].values[i] -
                                     d2.a_list[j].values[i]));
        scale = std::max(scale, std::abs(dsum.a_list[j].values[i]));
      }
    }
    add("atoms_molecules", "decomposition_linearity", lin / scale, 1e-10);
  }

  // --- cz_operators
  {
    const OperatorHandle id = OperatorHandle::from_multiplier(
        g1, std::vector<Complex>(g1.size(), Complex{1.0, 0.0}), "identity");
    const SampledField idf = apply(id, f);
    double err = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i)
      err = std::max(err, std::abs(idf.values[i] - f.values[i]));
    add("cz_operators", "multiplier_identity", err / lq_norm(f, kInfinity), 1e-12);

    const OperatorHandle R = truncated_riesz(0, g1);
    const SampledField rf = apply(R, f);
    const SampledField rsf = apply(adjoint(R), w);
    Complex lhs{0.0, 0.0}, rhs{0.0, 0.0};
    for (std::size_t i = 0; i < g1.size(); ++i) {
      lhs += rf.values[i] * std::conj(w.values[i]);
      rhs += f.values[i] * std::conj(rsf.values[i]);
    }
    lhs *= g1.cell_volume();
    rhs *= g1.cell_volume();
    add("cz_operators", "adjoint_pairing",
        std::abs(lhs - rhs) / (lq_norm(f, 2.0) * lq_norm(w, 2.0)), 1e-9);

    const OperatorHandle r1 = local_riesz(0, g1);
    double sup_m = 0.0;
    for (const auto& z : r1.multiplier_profile()) sup_m = std::max(sup_m, std::abs(z));
    add("cz_operators", "local_riesz_symbol_bound", std::max(0.0, sup_m - 1.0), 1e-12);

    SampledField ones(g1, std::vector<Complex>(g1.size(), Complex{1.0, 0.0}));
    const SampledField r_ones = apply(R, ones);
    add("cz_operators", "pv_annihilates_constants", lq_norm(r_ones, kInfinity), 1e-10);
  }

  // --- theorem_harness
  {
    Rng rng(Rng::derive(cfg.seed, 55));
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
      TheoremConfig tc;
      tc.n = 1 + static_cast<int>(rng.uniform() * 3);
      tc.p = 0.05 + 0.95 * rng.uniform();
      tc.s = 4.0 * rng.uniform();
      tc.eps = 0.01 + 0.99 * rng.uniform();
      const double mu_slow = tc.s_star() < tc.eps ? tc.s_star() : tc.eps;
      int fs_slow = 0;
      while (fs_slow + 1 <= tc.s) ++fs_slow;
      const double delta_slow = fs_slow + tc.eps - tc.n * (1.0 / tc.p - 1.0);
      const double pl_slow = tc.n / (tc.n + fs_slow + mu_slow);
      if (tc.mu() != mu_slow || tc.floor_s() != fs_slow || tc.delta() != delta_slow ||
          tc.p_lower() != pl_slow)
        worst = 1.0;
    }
    add("theorem_harness", "exponent_arithmetic", worst, 0.0);

    const Grid gc = make_grid(1, 16.0, 512);
    const FilterBank bank = build_filter_bank(gc, FilterBank::max_band_for(gc));
    const OperatorHandle id = OperatorHandle::from_multiplier(
        gc, std::vector<Complex>(gc.size(), Complex{1.0, 0.0}), "identity");
    const std::vector<Point> x0s{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
    const Condition17Report rep = condition_1_7(id, 1.5, x0s, bank);
    double err = 0.0;
    for (const auto& e : rep.entries) {
      const SampledField gf = make_poly_cutoff(e.x0, e.alpha, gc);
      const LipschitzResult direct = lipschitz_norm(gf, 1.5, bank);
      err = std::max(err, std::abs(direct.norm - e.lambda_norm) / direct.norm);
    }
    add("theorem_harness", "condition17_identity_operator", err, 1e-12);

    const TimeGrid times = TimeGrid::standard(cfg.time_k_max, cfg.time_ratio);
    AtomSpec aspec;
    aspec.p = 0.9;
    aspec.q = 2.0;
    aspec.moments = 0;
    aspec.ball = Ball{{0.0, 0.0, 0.0}, 0.5};
    const SampledField at = generate_atom(aspec, gc, Rng::derive(cfg.seed, 77));
    const HpRatioReport hr = hp_operator_ratio(id, 0.9, times, {at}, {"atom"});
    add("theorem_harness", "hp_ratio_identity", std::abs(hr.max_ratio - 1.0), 1e-10);
  }

  CsvWriter csv({"module", "check", "pass", "measured", "threshold"});
  bool all = true;
  for (const auto& c : checks) {
    all = all && c.pass;
    csv.row({c.module, c.name, c.pass ? "1" : "0", format_double(c.measured),
             format_double(c.threshold)});
  }
  csv.save(out_path(cfg, "selftest.csv"));
  json modules(json::value_t::object);
  for (const auto& c : checks) {
    if (!modules.contains(c.module)) modules[c.module] = json{{"checks", 0}, {"failed", 0}};
    modules[c.module]["checks"] = modules[c.module]["checks"].get<int>() + 1;
    if (!c.pass) modules[c.module]["failed"] = modules[c.module]["failed"].get<int>() + 1;
  }
  write_json(json{{"subcommand", "selftest"},
                  {"seed", cfg.seed},
                  {"modules", modules},
                  {"total_checks", checks.size()},
                  {"pass", all}},
             out_path(cfg, "selftest.json"));
  if (!all) {
    for (const auto& c : checks)
      if (!c.pass)
        std::fprintf(stderr, "selftest failure: %s/%s measured=%.17g threshold=%.17g\n",
                     c.module.c_str(), c.name.c_str(), c.measured, c.threshold);
  }
  return all ? 0 : 1;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{
      "maximal",   "hp-norm",   "lip-norm",      "bmo-norm",  "make-atom",
      "make-molecule", "validate", "decompose",  "czoi-check", "condition-1-7",
      "atom-map",  "cancellation", "hp-ratio",   "selftest"};
  return names;
}

int run_subcommand(const std::string& name, const RunConfig& cfg) {
  if (name == "maximal") return run_maximal(cfg);
  if (name == "hp-norm") return run_hp_norm(cfg);
  if (name == "lip-norm") return run_lip_norm(cfg);
  if (name == "bmo-norm") return run_bmo_norm(cfg);
  if (name == "make-atom") return run_make_atom(cfg);
  if (name == "make-molecule") return run_make_molecule(cfg);
  if (name == "validate") return run_validate(cfg);
  if (name == "decompose") return run_decompose(cfg);
  if (name == "czoi-check") return run_czoi_check(cfg);
  if (name == "condition-1-7") return run_condition_1_7(cfg);
  if (name == "atom-map") return run_atom_map(cfg);
  if (name == "cancellation") return run_cancellation(cfg);
  if (name == "hp-ratio") return run_hp_ratio(cfg);
  if (name == "selftest") return run_selftest(cfg);
  throw ConfigError("unknown subcommand: " + name);
}

}  // namespace hardylab::cli
