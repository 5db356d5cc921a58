#include "hardylab/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace hardylab {

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
// Plans are cached per (dim, N, sign) and created with FFTW_UNALIGNED so they
// can run on any std::vector storage via the new-array interface.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache c;
    return c;
  }

  fftw_plan get(int dim, int n, int sign) {
    std::scoped_lock lock(mutex_);
    const auto key = std::tuple{dim, n, sign};
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;

    std::vector<Complex> scratch(static_cast<std::size_t>(std::pow(n, dim)));
    int dims[3] = {n, n, n};
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan p = fftw_plan_dft(dim, dims, buf, buf, sign,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) throw std::runtime_error("fftw plan creation failed");
    plans_.emplace(key, p);
    return p;
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

std::vector<Complex> run_dft(const Grid& g, const std::vector<Complex>& v, int sign) {
  if (v.size() != g.size()) throw std::invalid_argument("dft: value count does not match grid");
  std::vector<Complex> out(v);
  fftw_plan p = PlanCache::instance().get(g.dim(), g.samples_per_axis(), sign);
  auto* buf = reinterpret_cast<fftw_complex*>(out.data());
  fftw_execute_dft(p, buf, buf);
  return out;
}

}  // namespace

Grid::Grid(int dim, double half_width, int samples_per_axis)
    : dim_(dim), half_width_(half_width), n_(samples_per_axis) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("Grid: dim must be 1, 2 or 3");
  if (!(half_width > 0.0)) throw std::invalid_argument("Grid: half_width must be positive");
  if (samples_per_axis < 8) throw std::invalid_argument("Grid: need at least 8 samples per axis");
  if (samples_per_axis % 2 != 0)
    throw std::invalid_argument("Grid: samples_per_axis must be even (frequency lattice symmetry)");
  spacing_ = 2.0 * half_width_ / n_;
  size_ = 1;
  for (int d = 0; d < dim_; ++d) size_ *= static_cast<std::size_t>(n_);
  cell_volume_ = std::pow(spacing_, dim_);
}

std::array<int, 3> Grid::coords(std::size_t flat) const {
  std::array<int, 3> k{0, 0, 0};
  for (int d = dim_ - 1; d >= 0; --d) {
    k[d] = static_cast<int>(flat % n_);
    flat /= n_;
  }
  return k;
}

std::size_t Grid::flat(const std::array<int, 3>& k) const {
  std::size_t idx = 0;
  for (int d = 0; d < dim_; ++d) idx = idx * n_ + static_cast<std::size_t>(k[d]);
  return idx;
}

Point Grid::point(std::size_t flat) const {
  const auto k = coords(flat);
  Point x{0.0, 0.0, 0.0};
  for (int d = 0; d < dim_; ++d) x[d] = -half_width_ + spacing_ * k[d];
  return x;
}

Point Grid::frequency(std::size_t flat) const {
  const auto k = coords(flat);
  Point xi{0.0, 0.0, 0.0};
  const double unit = std::numbers::pi / half_width_;
  for (int d = 0; d < dim_; ++d) xi[d] = unit * freq_index(k[d]);
  return xi;
}

double Grid::distance(const Point& a, const Point& b) const {
  double acc = 0.0;
  for (int d = 0; d < dim_; ++d) acc += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(acc);
}

Point Grid::wrap_difference(const Point& a, const Point& b) const {
  Point z{0.0, 0.0, 0.0};
  const double period = 2.0 * half_width_;
  for (int d = 0; d < dim_; ++d) {
    double v = a[d] - b[d];
    v = std::fmod(v + half_width_, period);
    if (v < 0) v += period;
    z[d] = v - half_width_;
  }
  return z;
}

double Grid::nyquist() const { return std::numbers::pi * n_ / (2.0 * half_width_); }

Grid make_grid(int dim, double half_width, int samples_per_axis) {
  return Grid(dim, half_width, samples_per_axis);
}

SampledField::SampledField(const Grid& g, std::vector<Complex> v) : grid(g), values(std::move(v)) {
  if (values.size() != grid.size())
    throw std::invalid_argument("SampledField: value count does not match grid");
}

void SampledField::ensure_finite(const char* where) const {
  for (const auto& v : values) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw std::runtime_error(std::string("non-finite field value after ") + where);
  }
}

bool SampledField::is_real(double tol) const {
  for (const auto& v : values)
    if (std::abs(v.imag()) > tol) return false;
  return true;
}

SampledField SampledField::real_part() const {
  SampledField out(grid);
  for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = values[i].real();
  return out;
}

// --- transforms -------------------------------------------------------------

std::vector<Complex> dft_forward(const Grid& g, const std::vector<Complex>& v) {
  return run_dft(g, v, FFTW_FORWARD);
}

std::vector<Complex> dft_inverse(const Grid& g, const std::vector<Complex>& v) {
  auto out = run_dft(g, v, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(g.size());
  for (auto& z : out) z *= scale;
  return out;
}

namespace {
// e^{-i xi_m x_k} picks up a (-1)^{m1+...+mn} phase relative to the raw DFT
// because the spatial origin sits at index N/2.
double lattice_phase(const Grid& g, std::size_t flat) {
  const auto k = g.coords(flat);
  int s = 0;
  for (int d = 0; d < g.dim(); ++d) s += g.freq_index(k[d]);
  return (s & 1) ? -1.0 : 1.0;
}
}  // namespace

std::vector<Complex> spectrum(const SampledField& f) {
  auto F = dft_forward(f.grid, f.values);
  const double w = f.grid.cell_volume();
  for (std::size_t i = 0; i < F.size(); ++i) F[i] *= w * lattice_phase(f.grid, i);
  return F;
}

SampledField inverse_spectrum(const Grid& g, const std::vector<Complex>& c) {
  std::vector<Complex> tmp(c);
  const double w = 1.0 / g.cell_volume();
  for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] *= w * lattice_phase(g, i);
  SampledField out(g, dft_inverse(g, tmp));
  out.ensure_finite("inverse_spectrum");
  return out;
}

SampledField apply_multiplier(const SampledField& f, const std::vector<Complex>& profile) {
  if (profile.size() != f.grid.size())
    throw std::invalid_argument("apply_multiplier: profile size mismatch");
  auto F = dft_forward(f.grid, f.values);
  for (std::size_t i = 0; i < F.size(); ++i) F[i] *= profile[i];
  SampledField out(f.grid, dft_inverse(f.grid, F));
  out.ensure_finite("apply_multiplier");
  return out;
}

// --- quadrature and norms ---------------------------------------------------

Complex quadrature(const SampledField& f) {
  Complex acc{0.0, 0.0};
  for (const auto& v : f.values) acc += v;
  return acc * f.grid.cell_volume();
}

namespace {
double masked_power_sum(const SampledField& f, double q, const Mask* region, double* sup) {
  if (region && region->size() != f.grid.size())
    throw std::invalid_argument("norm: mask size mismatch");
  double acc = 0.0;
  double mx = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    if (region && !(*region)[i]) continue;
    ++count;
    const double a = std::abs(f.values[i]);
    mx = std::max(mx, a);
    acc += std::pow(a, q);
  }
  if (region && count == 0) throw std::invalid_argument("norm: empty mask");
  if (sup) *sup = mx;
  return acc;
}
}  // namespace

double lq_norm(const SampledField& f, double q, const Mask* region) {
  if (q == kInfinity) {
    double sup = 0.0;
    masked_power_sum(f, 1.0, region, &sup);
    return sup;
  }
  if (!(q >= 1.0)) throw std::invalid_argument("lq_norm: q must be >= 1 or infinity");
  const double acc = masked_power_sum(f, q, region, nullptr);
  return std::pow(f.grid.cell_volume() * acc, 1.0 / q);
}

double power_quasinorm(const SampledField& f, double p, const Mask* region) {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("power_quasinorm: p must be in (0,1]");
  const double acc = masked_power_sum(f, p, region, nullptr);
  return std::pow(f.grid.cell_volume() * acc, 1.0 / p);
}

Complex moment(const SampledField& f, const Point& center, const MultiIndex& alpha) {
  if (alpha.order() > 8)
    throw std::invalid_argument("moment: |alpha| > 8 risks float overflow on large grids");
  for (int d = 0; d < 3; ++d)
    if (alpha.k[d] < 0) throw std::invalid_argument("moment: negative multi-index");
  Complex acc{0.0, 0.0};
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    acc += f.values[i] * pow_multi(f.grid.point(i), center, alpha);
  }
  return acc * f.grid.cell_volume();
}

SampledField convolve(const SampledField& f, const SampledField& g) {
  if (!(f.grid == g.grid)) throw std::invalid_argument("convolve: grid mismatch");
  auto F = dft_forward(f.grid, f.values);
  const auto G = dft_forward(g.grid, g.values);
  // (-1)^m shift phase: g is sampled on x = -L + kh while circular convolution
  // indexes offsets from k = 0.
  for (std::size_t i = 0; i < F.size(); ++i) F[i] *= G[i] * lattice_phase(f.grid, i);
  auto vals = dft_inverse(f.grid, F);
  const double w = f.grid.cell_volume();
  for (auto& z : vals) z *= w;
  SampledField out(f.grid, std::move(vals));
  out.ensure_finite("convolve");
  return out;
}

SampledField discrete_delta(const Grid& g, const Point& at) {
  SampledField out(g);
  std::array<int, 3> k{0, 0, 0};
  for (int d = 0; d < g.dim(); ++d) {
    const double idx = (at[d] + g.half_width()) / g.spacing();
    k[d] = static_cast<int>(std::llround(idx));
    if (k[d] < 0 || k[d] >= g.samples_per_axis())
      throw std::invalid_argument("discrete_delta: point outside the torus");
  }
  out.values[g.flat(k)] = Complex{1.0 / g.cell_volume(), 0.0};
  return out;
}

// --- balls and annuli ---------------------------------------------------------

int max_annulus_index(const Grid& g, const Ball& ball) {
  if (!(ball.radius > 0.0)) throw std::invalid_argument("Ball: radius must be positive");
  int j = 0;
  while (std::ldexp(ball.radius, j + 1) <= g.half_width() / 2.0) ++j;
  if (std::ldexp(ball.radius, j) > g.half_width() / 2.0)
    throw std::invalid_argument("Ball: ball does not fit the half-torus");
  return j;
}

Mask annulus_mask(const Grid& g, const Ball& ball, int j) {
  if (j < 0) throw std::invalid_argument("annulus_mask: j must be nonnegative");
  const double outer = std::ldexp(ball.radius, j);
  if (outer > g.half_width() / 2.0)
    throw std::invalid_argument("annulus_mask: 2^j r_B exceeds L/2, annulus would wrap");
  const double inner = j == 0 ? 0.0 : std::ldexp(ball.radius, j - 1);
  Mask m(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = g.distance(g.point(i), ball.center);
    if (d < outer && (j == 0 || d >= inner)) m[i] = 1;
  }
  return m;
}

Mask ball_mask(const Grid& g, const Ball& ball) {
  Mask m(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.distance(g.point(i), ball.center) < ball.radius) m[i] = 1;
  return m;
}

Mask complement_mask(const Grid& g, const Ball& ball) {
  Mask m(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.distance(g.point(i), ball.center) >= ball.radius) m[i] = 1;
  return m;
}

std::size_t mask_count(const Mask& m) {
  std::size_t c = 0;
  for (auto v : m) c += v ? 1 : 0;
  return c;
}

double ball_measure(int dim, double radius) {
  switch (dim) {
    case 1: return 2.0 * radius;
    case 2: return std::numbers::pi * radius * radius;
    case 3: return 4.0 / 3.0 * std::numbers::pi * radius * radius * radius;
    default: throw std::invalid_argument("ball_measure: dim must be 1..3");
  }
}

double mask_measure(const Grid& g, const Mask& m) {
  return g.cell_volume() * static_cast<double>(mask_count(m));
}

// --- serialization ------------------------------------------------------------

namespace {
std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void save_field(const SampledField& f, std::ostream& os) {
  const bool real = f.is_real();
  os << "hardylab-field,1\n";
  os << f.grid.dim() << "," << f.grid.samples_per_axis() << "," << fmt17(f.grid.half_width())
     << "," << (real ? "real" : "complex") << "\n";
  for (const auto& v : f.values) {
    os << fmt17(v.real());
    if (!real) os << "," << fmt17(v.imag());
    os << "\n";
  }
}

void save_field(const SampledField& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_field: cannot open " + path);
  save_field(f, os);
}

SampledField load_field(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("hardylab-field,1", 0) != 0)
    throw std::runtime_error("load_field: bad magic line");
  if (!std::getline(is, line)) throw std::runtime_error("load_field: missing header");
  std::replace(line.begin(), line.end(), ',', ' ');
  std::istringstream hdr(line);
  int dim = 0, n = 0;
  double L = 0.0;
  std::string kind;
  if (!(hdr >> dim >> n >> L >> kind)) throw std::runtime_error("load_field: malformed header");
  const bool complex_values = kind == "complex";
  if (!complex_values && kind != "real")
    throw std::runtime_error("load_field: kind must be real or complex");
  Grid g = make_grid(dim, L, n);
  std::vector<Complex> vals;
  vals.reserve(g.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double re = 0.0, im = 0.0;
    if (!(row >> re)) throw std::runtime_error("load_field: malformed value row");
    if (complex_values && !(row >> im)) throw std::runtime_error("load_field: missing imag part");
    vals.emplace_back(re, im);
  }
  if (vals.size() != g.size())
    throw std::runtime_error("load_field: value count does not match grid");
  SampledField f(g, std::move(vals));
  f.ensure_finite("load_field");
  return f;
}

SampledField load_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_field: cannot open " + path);
  return load_field(is);
}

}  // namespace hardylab
