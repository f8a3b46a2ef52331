#pragma once

#include "gbsim/types.hpp"

namespace gbsim {

enum class DistKind { none, wrapped_gaussian, uniform };

/// Input phase-noise model: no noise, a wrapped Gaussian of width sigma, or
/// the uniform (fully dephasing) distribution. The mean phase is fixed to 0.
struct PhaseDistribution {
  DistKind kind = DistKind::none;
  double sigma = 0.0;   // std-dev of the unwrapped Gaussian, radians
  double theta0 = 0.0;  // mean phase; fixed to 0

  static PhaseDistribution none() { return {DistKind::none, 0.0, 0.0}; }
  static PhaseDistribution wrapped(double sigma) {
    return {DistKind::wrapped_gaussian, sigma, 0.0};
  }
  static PhaseDistribution uniform() { return {DistKind::uniform, 0.0, 0.0}; }
};

const char* dist_name(DistKind k);

/// Number-basis amplitudes of a single-mode squeezed vacuum, truncated at d.
/// Convention: amp[2n] = (cosh r)^{-1/2} (-tanh r)^n sqrt((2n)!)/(2^n n!),
/// odd entries exactly zero, amp[0] real positive.
Vec squeezed_vacuum_amplitudes(double r, Index d);

/// Wrapped Gaussian density on [-pi, pi); wrap sum truncated at
/// |k| <= ceil(6 sigma / 2 pi) + 2.
double wrapped_gaussian_pdf(double theta, const PhaseDistribution& dist);

/// Damping factor of the (m,n) density matrix element under the channel:
/// 1 for no noise, exp(-sigma^2 (m-n)^2 / 2) for wrapped Gaussian,
/// delta_{mn} for uniform.
double decoherence_factor(const PhaseDistribution& dist, Index m, Index n);

/// Elementwise application of the dephasing channel to a local density
/// matrix in the number basis. The diagonal is untouched.
Mat dephase_local(const Mat& rho, const PhaseDistribution& dist);

Mat density_from_amplitudes(const Vec& amps);

/// Smallest local dimension keeping squeezed-vacuum cutoff leakage below
/// the budget.
Index suggested_local_dim(double r, double leakage_budget = 1e-4);

struct DensityCheck {
  double hermiticity_error = 0.0;
  double trace = 0.0;
  double min_eigenvalue = 0.0;
};
DensityCheck check_density(const Mat& rho);

}  // namespace gbsim
