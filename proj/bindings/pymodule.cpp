// Python bindings for the core operations: grids and fields (numpy-backed),
// heat maximal machinery, Lipschitz/bmo norms, atoms, molecules, the
// constructive decomposition, and the operator/theorem checks.

#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hardylab/atoms.hpp"
#include "hardylab/harness.hpp"
#include "hardylab/heat.hpp"
#include "hardylab/operators.hpp"
#include "hardylab/spaces.hpp"

namespace py = pybind11;
using namespace hardylab;

namespace {

MultiIndex to_alpha(const std::vector<int>& a) {
  MultiIndex m;
  for (std::size_t d = 0; d < a.size() && d < 3; ++d) m.k[d] = a[d];
  return m;
}

Point to_point(const std::vector<double>& p) {
  Point out{0.0, 0.0, 0.0};
  for (std::size_t d = 0; d < p.size() && d < 3; ++d) out[d] = p[d];
  return out;
}

py::array_t<std::complex<double>> field_values(const SampledField& f) {
  const int dim = f.grid.dim();
  const int n = f.grid.samples_per_axis();
  std::vector<py::ssize_t> shape(dim, n);
  py::array_t<std::complex<double>> arr(shape);
  std::copy(f.values.begin(), f.values.end(), arr.mutable_data());
  return arr;
}

SampledField field_from(const Grid& g, py::array_t<std::complex<double>, py::array::c_style |
                                                                              py::array::forcecast>
                                           values) {
  if (static_cast<std::size_t>(values.size()) != g.size())
    throw std::invalid_argument("value count does not match grid");
  std::vector<Complex> v(values.data(), values.data() + values.size());
  return SampledField(g, std::move(v));
}

py::array_t<bool> mask_to_numpy(const Grid& g, const Mask& m) {
  const int dim = g.dim();
  const int n = g.samples_per_axis();
  std::vector<py::ssize_t> shape(dim, n);
  py::array_t<bool> arr(shape);
  for (std::size_t i = 0; i < m.size(); ++i) arr.mutable_data()[i] = m[i] != 0;
  return arr;
}

py::dict molecule_cert_dict(const MoleculeCertificate& c) {
  py::dict d;
  d["pass"] = c.pass;
  d["annular_margins"] = c.annular_margins;
  d["tail_margin"] = c.tail_margin;
  d["worst_annulus"] = c.worst_annulus;
  d["moment_margins"] = c.moment_margins;
  d["worst_margin"] = c.worst_margin;
  d["hypothesis_satisfied"] = c.hypothesis_satisfied;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "local Hardy space laboratory: periodic grids, heat maximal functions, "
            "atoms, molecules and Calderon-Zygmund operator checks";

  py::class_<Grid>(m, "Grid")
      .def(py::init<int, double, int>(), py::arg("dim"), py::arg("half_width"),
           py::arg("samples_per_axis"))
      .def_property_readonly("dim", &Grid::dim)
      .def_property_readonly("half_width", &Grid::half_width)
      .def_property_readonly("samples_per_axis", &Grid::samples_per_axis)
      .def_property_readonly("spacing", &Grid::spacing)
      .def_property_readonly("size", &Grid::size)
      .def("point", [](const Grid& g, std::size_t i) { return g.point(i); })
      .def("frequency", [](const Grid& g, std::size_t i) { return g.frequency(i); })
      .def("points",
           [](const Grid& g) {
             py::array_t<double> arr({static_cast<py::ssize_t>(g.size()),
                                      static_cast<py::ssize_t>(g.dim())});
             auto* out = arr.mutable_data();
             for (std::size_t i = 0; i < g.size(); ++i) {
               const Point p = g.point(i);
               for (int d = 0; d < g.dim(); ++d) out[i * g.dim() + d] = p[d];
             }
             return arr;
           })
      .def("__repr__", [](const Grid& g) {
        return "Grid(dim=" + std::to_string(g.dim()) +
               ", half_width=" + std::to_string(g.half_width()) +
               ", samples_per_axis=" + std::to_string(g.samples_per_axis()) + ")";
      });

  py::class_<Ball>(m, "Ball")
      .def(py::init([](const std::vector<double>& center, double radius) {
             return Ball{to_point(center), radius};
           }),
           py::arg("center"), py::arg("radius"))
      .def_readwrite("radius", &Ball::radius);

  py::class_<SampledField>(m, "SampledField")
      .def(py::init(&field_from), py::arg("grid"), py::arg("values"))
      .def_property_readonly("grid", [](const SampledField& f) { return f.grid; })
      .def_property_readonly("values", &field_values);

  m.def("make_grid", &make_grid, py::arg("dim"), py::arg("half_width"),
        py::arg("samples_per_axis"));
  m.def("quadrature", [](const SampledField& f) { return quadrature(f); });
  m.def("lq_norm", [](const SampledField& f, double q) { return lq_norm(f, q); }, py::arg("field"),
        py::arg("q"));
  m.def("moment",
        [](const SampledField& f, const std::vector<double>& center, const std::vector<int>& a) {
          return moment(f, to_point(center), to_alpha(a));
        },
        py::arg("field"), py::arg("center"), py::arg("alpha"));
  m.def("convolve", &convolve, py::arg("f"), py::arg("g"));
  m.def("discrete_delta",
        [](const Grid& g, const std::vector<double>& at) {
          return discrete_delta(g, to_point(at));
        },
        py::arg("grid"), py::arg("at") = std::vector<double>{0.0, 0.0, 0.0});
  m.def("annulus_mask",
        [](const Grid& g, const Ball& b, int j) { return mask_to_numpy(g, annulus_mask(g, b, j)); },
        py::arg("grid"), py::arg("ball"), py::arg("j"));

  py::class_<TimeGrid>(m, "TimeGrid")
      .def_static("standard", &TimeGrid::standard, py::arg("k_max") = 24,
                  py::arg("ratio") = 0.70710678118654752440)
      .def_readonly("values", &TimeGrid::values);

  m.def("heat_apply", &heat_apply, py::arg("field"), py::arg("t"));
  m.def("maximal", &maximal, py::arg("field"), py::arg("times"));
  m.def("hp_quasinorm", &hp_quasinorm, py::arg("field"), py::arg("p"), py::arg("times"));
  m.def("decay_fit",
        [](const SampledField& f, const Ball& b, int j_min, int j_max) {
          const DecayFit fit = decay_fit(f, b, j_min, j_max);
          py::dict d;
          d["slope"] = fit.slope;
          d["intercept"] = fit.intercept;
          d["r2"] = fit.r2;
          d["annuli"] = fit.annuli;
          d["radii"] = fit.radii;
          d["annular_sup"] = fit.annular_sup;
          return d;
        },
        py::arg("field"), py::arg("ball"), py::arg("j_min") = 3, py::arg("j_max") = 30);

  py::class_<FilterBank>(m, "FilterBank")
      .def_property_readonly("j_max", &FilterBank::j_max)
      .def("apply_band", &FilterBank::apply_band, py::arg("field"), py::arg("j"))
      .def("spatial_filter", &FilterBank::spatial_filter, py::arg("j"))
      .def_static("max_band_for", &FilterBank::max_band_for, py::arg("grid"));
  m.def("build_filter_bank", &build_filter_bank, py::arg("grid"), py::arg("j_max"));
  m.def("lipschitz_norm",
        [](const SampledField& f, double s, const FilterBank& bank) {
          const LipschitzResult r = lipschitz_norm(f, s, bank);
          py::dict d;
          d["norm"] = r.norm;
          d["profile"] = r.profile;
          d["arg_max"] = r.arg_max;
          return d;
        },
        py::arg("field"), py::arg("s"), py::arg("bank"));
  m.def("bmo_norm",
        [](const SampledField& f) {
          const BmoResult r = bmo_norm(f, default_ball_lattice(f.grid));
          py::dict d;
          d["norm"] = r.norm;
          d["large_ball_max"] = r.large_ball_max;
          d["small_ball_max"] = r.small_ball_max;
          return d;
        },
        py::arg("field"));
  m.def("make_cutoff",
        [](const std::vector<double>& center, const Grid& g) {
          CutoffSpec spec;
          spec.center = to_point(center);
          return make_cutoff(spec, g);
        },
        py::arg("center"), py::arg("grid"));
  m.def("make_poly_cutoff",
        [](const std::vector<double>& x0, const std::vector<int>& alpha, const Grid& g) {
          return make_poly_cutoff(to_point(x0), to_alpha(alpha), g);
        },
        py::arg("x0"), py::arg("alpha"), py::arg("grid"));

  py::class_<AtomSpec>(m, "AtomSpec")
      .def(py::init([](double p, double q, int moments, const Ball& ball) {
             AtomSpec s;
             s.p = p;
             s.q = q;
             s.moments = moments;
             s.ball = ball;
             return s;
           }),
           py::arg("p"), py::arg("q"), py::arg("moments"), py::arg("ball"));
  py::class_<MoleculeSpec>(m, "MoleculeSpec")
      .def(py::init([](double p, double q, double delta, double s, const Ball& ball) {
             MoleculeSpec ms;
             ms.p = p;
             ms.q = q;
             ms.delta = delta;
             ms.s = s;
             ms.ball = ball;
             return ms;
           }),
           py::arg("p"), py::arg("q"), py::arg("delta"), py::arg("s"), py::arg("ball"));

  m.def("generate_atom", &generate_atom, py::arg("spec"), py::arg("grid"), py::arg("seed"));
  m.def("validate_atom",
        [](const SampledField& a, const AtomSpec& spec) {
          const AtomCertificate c = validate_atom(a, spec);
          py::dict d;
          d["pass"] = c.pass;
          d["support_leakage"] = c.support_leakage;
          d["lq_margin"] = c.lq_margin;
          d["max_moment_residual"] = c.max_moment_residual;
          return d;
        },
        py::arg("field"), py::arg("spec"));
  m.def("generate_molecule",
        [](const MoleculeSpec& spec, const Grid& g, std::uint64_t seed) {
          const GeneratedMolecule gm = generate_molecule(spec, g, seed);
          return py::make_tuple(gm.field, gm.head_target_fraction);
        },
        py::arg("spec"), py::arg("grid"), py::arg("seed"));
  m.def("validate_molecule",
        [](const SampledField& f, const MoleculeSpec& spec) {
          return molecule_cert_dict(validate_molecule(f, spec));
        },
        py::arg("field"), py::arg("spec"));
  m.def("decompose_molecule",
        [](const SampledField& f, const MoleculeSpec& spec) {
          const DecompositionResult r = decompose_molecule(f, spec);
          py::dict d;
          d["small_ball"] = r.small_ball;
          d["reconstruction_residual"] = r.reconstruction_residual;
          d["c1"] = r.c1;
          d["c2"] = r.c2;
          d["c3"] = r.c3;
          d["n_decay_constant"] = r.n_decay_constant;
          d["max_piece_moment_residual"] = r.max_piece_moment_residual;
          d["annuli"] = r.annuli;
          py::list pieces;
          for (const auto& a : r.a_list) pieces.append(a);
          d["a_list"] = pieces;
          return d;
        },
        py::arg("field"), py::arg("spec"));

  py::class_<OperatorHandle>(m, "OperatorHandle")
      .def_property_readonly("name", &OperatorHandle::name)
      .def_property_readonly("is_convolution", &OperatorHandle::is_convolution);
  m.def("local_riesz", [](int axis, const Grid& g) { return local_riesz(axis, g); },
        py::arg("axis"), py::arg("grid"));
  m.def("truncated_riesz", [](int axis, const Grid& g) { return truncated_riesz(axis, g); },
        py::arg("axis"), py::arg("grid"));
  m.def("multiplier_operator",
        [](const Grid& g, py::array_t<std::complex<double>, py::array::c_style |
                                                                py::array::forcecast>
               profile) {
          std::vector<Complex> v(profile.data(), profile.data() + profile.size());
          return OperatorHandle::from_multiplier(g, std::move(v));
        },
        py::arg("grid"), py::arg("profile"));
  m.def("op_apply", [](const OperatorHandle& T, const SampledField& f) { return apply(T, f); },
        py::arg("operator"), py::arg("field"));
  m.def("op_adjoint", [](const OperatorHandle& T) { return adjoint(T); }, py::arg("operator"));
  m.def("czoi_check",
        [](const OperatorHandle& T, int smoothness, double epsilon) {
          const CzoiCertificate c = czoi_check(T, CzoiParams{smoothness, epsilon});
          py::dict d;
          d["pass"] = c.pass;
          d["size_constant_near"] = c.size_constant_near;
          d["size_constant_far"] = c.size_constant_far;
          d["holder_constant"] = c.holder_constant_refined;
          d["l2_norm_estimate"] = c.l2_norm_estimate;
          return d;
        },
        py::arg("operator"), py::arg("M"), py::arg("epsilon"));

  py::class_<TheoremConfig>(m, "TheoremConfig")
      .def(py::init([](int n, double p, double s, double eps) {
             return TheoremConfig{n, p, s, eps};
           }),
           py::arg("n"), py::arg("p"), py::arg("s"), py::arg("eps"))
      .def_property_readonly("floor_s", &TheoremConfig::floor_s)
      .def_property_readonly("mu", &TheoremConfig::mu)
      .def_property_readonly("delta", &TheoremConfig::delta)
      .def_property_readonly("p_lower", &TheoremConfig::p_lower);
  m.def("atom_to_molecule_check",
        [](const OperatorHandle& T, const TheoremConfig& cfg, const std::vector<double>& radii,
           int seeds, std::uint64_t seed) {
          const AtomMapReport r = atom_to_molecule_check(T, cfg, radii, seeds, seed);
          py::dict d;
          d["fitted_constant"] = r.fitted_constant;
          d["all_finite"] = r.all_finite;
          d["cases"] = r.cases.size();
          return d;
        },
        py::arg("operator"), py::arg("config"), py::arg("radii"), py::arg("seeds_per_radius"),
        py::arg("seed"));
  m.def("condition_1_7",
        [](const OperatorHandle& T, double s, const std::vector<std::vector<double>>& x0s,
           const FilterBank& bank) {
          std::vector<Point> pts;
          for (const auto& p : x0s) pts.push_back(to_point(p));
          const Condition17Report r = condition_1_7(T, s, pts, bank);
          py::dict d;
          d["sup"] = r.sup;
          d["spread"] = r.spread;
          d["tail_decaying"] = r.tail_decaying;
          py::list norms;
          for (const auto& e : r.entries) norms.append(e.lambda_norm);
          d["norms"] = norms;
          return d;
        },
        py::arg("operator"), py::arg("s"), py::arg("x0_lattice"), py::arg("bank"));
}
