#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hardylab/grid.hpp"

namespace hardylab {

// K(x, y); arguments are torus representatives.
using KernelSampler = std::function<Complex(const Point&, const Point&)>;
// sigma(x, y, xi)
using AmplitudeSampler = std::function<Complex(const Point&, const Point&, const Point&)>;

enum class OperatorKind { explicit_kernel, multiplier, amplitude };

// One apply/adjoint/kernel-sample contract over the three operator families.
//  - explicit_kernel: T f(x) = h^n sum_y K(x,y) f(y)
//  - multiplier:      transform, multiply by m(xi), inverse transform
//  - amplitude:       (2pi)^{-n} sum_xi sum_y sigma(x,y,xi) e^{i<x-y,xi>} f(y) h^n dxi
// Amplitude evaluation costs O(N^{3n}); apply() refuses it above N = 256 in
// 1D (64 per axis in 2D) unless force_amplitude is set.
class OperatorHandle {
 public:
  static OperatorHandle from_kernel(const Grid& g, KernelSampler k,
                                    bool convolution = false, std::string name = "kernel");
  static OperatorHandle from_multiplier(const Grid& g, std::vector<Complex> profile,
                                        std::string name = "multiplier");
  static OperatorHandle from_amplitude(const Grid& g, AmplitudeSampler sigma,
                                       std::string name = "amplitude");

  OperatorKind kind() const { return kind_; }
  const Grid& grid() const { return grid_; }
  const std::string& name() const { return name_; }
  bool is_convolution() const { return convolution_; }

  const std::vector<Complex>& multiplier_profile() const;
  Complex kernel_sample(const Point& x, const Point& y) const;
  Complex amplitude_sample(const Point& x, const Point& y, const Point& xi) const;

  bool force_amplitude = false;

 private:
  OperatorHandle(const Grid& g) : grid_(g) {}
  friend SampledField apply(const OperatorHandle&, const SampledField&);
  friend OperatorHandle adjoint(const OperatorHandle&);

  OperatorKind kind_ = OperatorKind::multiplier;
  Grid grid_;
  std::string name_;
  KernelSampler kernel_;
  bool convolution_ = false;
  std::vector<Complex> profile_;
  AmplitudeSampler sigma_;
};

SampledField apply(const OperatorHandle& T, const SampledField& f);
OperatorHandle adjoint(const OperatorHandle& T);

// Kernel column K(., y) reconstructed as T(delta_y); exact on the grid.
SampledField kernel_column(const OperatorHandle& T, const Point& y);

// Smooth compactly supported radial profile, identically 1 near the origin:
// 1 on [0, plateau], smooth ramp down to 0 at `support`.
struct RadialProfile {
  double plateau = 1.0;
  double support = 2.0;
  double operator()(double rho) const;
};

// Local Riesz transform r_j: multiplier i (1 - phi(xi)) xi_j / |xi|, zero at xi = 0.
OperatorHandle local_riesz(int axis, const Grid& g, const RadialProfile& phi = {});

// Truncated Riesz transform: convolution with z_j / |z|^{n+1} Phi(z); Phi = 1 on
// B(0,1), supported in B(0,2). The diagonal cell z = 0 is set to zero, which
// realizes the principal value on a symmetric grid (the kernel is odd).
OperatorHandle truncated_riesz(int axis, const Grid& g, const RadialProfile& Phi = {});

OperatorHandle amplitude_operator(const Grid& g, AmplitudeSampler sigma,
                                  std::string name = "amplitude");

// Amplitude class A^0_{1,0}: |d^a_xi d^b_x d^c_y sigma| <= C (1+|xi|)^{-|a|}.
struct AmplitudeClassEntry {
  MultiIndex a, b, c;
  double constant = 0.0;        // max over samples of |FD derivative| (1+|xi|)^{|a|}
  double refined_constant = 0.0;  // same with halved stencils
  double ratio = 0.0;
  bool stable = false;
};

struct AmplitudeClassCertificate {
  bool pass = false;
  std::vector<AmplitudeClassEntry> entries;
};

AmplitudeClassCertificate amplitude_class_check(const OperatorHandle& T, int max_order);

struct CzoiParams {
  int smoothness = 0;   // M
  double epsilon = 1.0; // in (0,1]
  void validate() const;
};

struct CzoiProbe {
  int anchor_count = 5;      // x anchors on a coarse sublattice
  int shells = 0;            // 0: all dyadic shells up to L/2
  std::vector<int> diff_steps{1, 2, 4};  // |y-y'| in grid cells
  double stability_ratio = 1.1;
  int power_iterations = 40;
};

struct CzoiCertificate {
  bool pass = false;
  double size_constant_near = 0.0;   // |K| |x-y|^n <x-y>^{M+eps}, |x-y| < 1
  double size_constant_far = 0.0;    // same, |x-y| >= 1
  double holder_constant = 0.0;      // |D^g K(x,y)-D^g K(x,y')| |x-y|^{n+M+eps} / |y-y'|^eps
  double holder_constant_refined = 0.0;
  double refinement_ratio = 0.0;
  double l2_norm_estimate = 0.0;     // power iteration on T*T
  std::string detail;
};

// Definition-style kernel checker: size and Holder-smoothness constants over a
// documented probe set (dyadic |x-y| shells x |y-y'| in {h,2h,4h}), plus an L^2
// norm estimate. Constants are reported; pass/fail is stability-based.
CzoiCertificate czoi_check(const OperatorHandle& T, const CzoiParams& params,
                           const CzoiProbe& probe = {});

}  // namespace hardylab
