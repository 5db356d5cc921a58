#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hardylab/multiindex.hpp"

namespace hardylab {

using Complex = std::complex<double>;
using Point = std::array<double, 3>;  // coordinates beyond `dim` are zero

// Uniform periodic grid on the torus [-L, L)^n.
//
// Spatial lattice:    x = -L + k*h per axis, k = 0..N-1, h = 2L/N.
// Frequency lattice:  xi = (pi/L)*m per axis, m = -N/2..N/2-1, stored in
//                     standard DFT wrap order (m = k for k < N/2, else k - N).
// The torus is a stand-in for R^n: experiments must be sized so that all
// supports and annuli fit inside the half-torus and never interact across
// the boundary.
class Grid {
 public:
  Grid(int dim, double half_width, int samples_per_axis);

  int dim() const { return dim_; }
  double half_width() const { return half_width_; }
  int samples_per_axis() const { return n_; }
  double spacing() const { return spacing_; }
  std::size_t size() const { return size_; }  // N^n
  double cell_volume() const { return cell_volume_; }  // h^n

  // flat index <-> per-axis indices (row-major, axis 0 slowest)
  std::array<int, 3> coords(std::size_t flat) const;
  std::size_t flat(const std::array<int, 3>& k) const;

  Point point(std::size_t flat) const;
  Point frequency(std::size_t flat) const;  // xi at the same flat index
  int freq_index(int k) const { return k < n_ / 2 ? k : k - n_; }

  // Euclidean distance of representatives in [-L, L)^n (no periodization).
  double distance(const Point& a, const Point& b) const;
  // representative of a-b in [-L, L)^n, applied per axis
  Point wrap_difference(const Point& a, const Point& b) const;

  double nyquist() const;  // pi*N/(2L)

  bool operator==(const Grid& o) const {
    return dim_ == o.dim_ && half_width_ == o.half_width_ && n_ == o.n_;
  }

 private:
  int dim_;
  double half_width_;
  int n_;
  double spacing_;
  std::size_t size_;
  double cell_volume_;
};

Grid make_grid(int dim, double half_width, int samples_per_axis);

// A complex-valued function sampled on a Grid. The universal carrier for
// fields, kernels and multiplier profiles. Values must stay finite; public
// operations check this on their results.
struct SampledField {
  Grid grid;
  std::vector<Complex> values;

  explicit SampledField(const Grid& g, Complex fill = Complex{0.0, 0.0})
      : grid(g), values(g.size(), fill) {}
  SampledField(const Grid& g, std::vector<Complex> v);

  Complex& operator[](std::size_t i) { return values[i]; }
  const Complex& operator[](std::size_t i) const { return values[i]; }

  void ensure_finite(const char* where) const;
  bool is_real(double tol = 0.0) const;
  SampledField real_part() const;
};

struct Ball {
  Point center{0.0, 0.0, 0.0};
  double radius = 1.0;
};

using Mask = std::vector<std::uint8_t>;

constexpr double kInfinity = std::numeric_limits<double>::infinity();

// --- transforms -----------------------------------------------------------

// Unnormalized DFT of the value array (FFTW sign conventions); inverse
// divides by N^n. Exposed for multiplier work; quadrature-normalized
// spectra are spectrum()/inverse_spectrum().
std::vector<Complex> dft_forward(const Grid& g, const std::vector<Complex>& v);
std::vector<Complex> dft_inverse(const Grid& g, const std::vector<Complex>& v);

// Continuum-normalized Fourier coefficients: c(xi_m) = h^n sum_k f(x_k) e^{-i xi_m x_k}.
std::vector<Complex> spectrum(const SampledField& f);
SampledField inverse_spectrum(const Grid& g, const std::vector<Complex>& c);

// Apply a frequency multiplier profile given on the wrapped frequency lattice.
SampledField apply_multiplier(const SampledField& f, const std::vector<Complex>& profile);

// --- quadrature and norms -------------------------------------------------

// Rectangle rule with uniform weight h^n; exact for the trigonometric
// polynomials the grid represents.
Complex quadrature(const SampledField& f);

// (h^n sum_mask |f|^q)^{1/q}; q = infinity gives the max over the mask.
// Requires q >= 1. An empty mask is an error.
double lq_norm(const SampledField& f, double q, const Mask* region = nullptr);

// (h^n sum |f|^p)^{1/p} for 0 < p <= 1; the quasinorm power sum used by h^p.
double power_quasinorm(const SampledField& f, double p, const Mask* region = nullptr);

// quadrature of (x - center)^alpha f(x); |alpha| <= 8.
Complex moment(const SampledField& f, const Point& center, const MultiIndex& alpha);

// Periodic convolution with weight h^n: (f*g)(x) = h^n sum_y f(y) g(x-y).
// Realized spectrally; equals the direct double sum up to roundoff.
SampledField convolve(const SampledField& f, const SampledField& g);

// Discrete unit mass: value 1/h^n at the lattice point closest to `at` (origin
// by default), so that convolve(f, delta) == f exactly.
SampledField discrete_delta(const Grid& g, const Point& at = {0.0, 0.0, 0.0});

// --- balls and annuli -------------------------------------------------------

// U_0 = B, U_j = 2^j B \ 2^{j-1} B for j >= 1 (strict upper, closed lower).
// Requires 2^j r_B <= L/2 so the annulus cannot wrap.
Mask annulus_mask(const Grid& g, const Ball& ball, int j);
Mask ball_mask(const Grid& g, const Ball& ball);  // |x - c| < r
Mask complement_mask(const Grid& g, const Ball& ball);  // |x - c| >= r

// Largest j with 2^j r_B <= L/2.
int max_annulus_index(const Grid& g, const Ball& ball);

std::size_t mask_count(const Mask& m);

// Lebesgue measure of the ball in R^n (2r, pi r^2, 4/3 pi r^3).
double ball_measure(int dim, double radius);

// Grid measure h^n * #points of a mask; the measure the annular inner
// products are exact against.
double mask_measure(const Grid& g, const Mask& m);

// --- serialization ----------------------------------------------------------

// CSV field format, stable across versions:
//   line 1:  hardylab-field,1
//   line 2:  dim,N,L,kind          (kind: real | complex)
//   line 3+: value rows, row-major; "re" for real, "re,im" for complex
void save_field(const SampledField& f, std::ostream& os);
void save_field(const SampledField& f, const std::string& path);
SampledField load_field(std::istream& is);
SampledField load_field(const std::string& path);

}  // namespace hardylab
