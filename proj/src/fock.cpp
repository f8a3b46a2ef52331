#include "gbsim/fock.hpp"

#include <cmath>
#include <stdexcept>

namespace gbsim {

const char* dist_name(DistKind k) {
  switch (k) {
    case DistKind::none: return "none";
    case DistKind::wrapped_gaussian: return "wrapped";
    case DistKind::uniform: return "uniform";
  }
  return "?";
}

Vec squeezed_vacuum_amplitudes(double r, Index d) {
  if (d < 1) throw std::invalid_argument("cutoff must be >= 1");
  if (r < 0) throw std::invalid_argument("squeezing must be >= 0");
  Vec amps = Vec::Zero(d);
  double t = std::tanh(r);
  double a = 1.0 / std::sqrt(std::cosh(r));
  amps[0] = a;
  for (Index n = 1; 2 * n < d; n++) {
    a *= -t * std::sqrt((2.0 * n - 1.0) / (2.0 * n));
    amps[2 * n] = a;
  }
  return amps;
}

double wrapped_gaussian_pdf(double theta, const PhaseDistribution& dist) {
  if (dist.kind != DistKind::wrapped_gaussian)
    throw std::invalid_argument("pdf requires a wrapped Gaussian distribution");
  if (!(dist.sigma > 0))
    throw std::invalid_argument("wrapped Gaussian needs sigma > 0");
  const double s2 = dist.sigma * dist.sigma;
  const long kmax =
      static_cast<long>(std::ceil(6.0 * dist.sigma / (2.0 * M_PI))) + 2;
  double sum = 0.0;
  for (long k = -kmax; k <= kmax; k++) {
    double x = theta - dist.theta0 + 2.0 * M_PI * k;
    sum += std::exp(-x * x / (2.0 * s2));
  }
  return sum / std::sqrt(2.0 * M_PI * s2);
}

double decoherence_factor(const PhaseDistribution& dist, Index m, Index n) {
  if (m < 0 || n < 0) throw std::invalid_argument("negative photon number");
  switch (dist.kind) {
    case DistKind::none:
      return 1.0;
    case DistKind::wrapped_gaussian: {
      double diff = static_cast<double>(m - n);
      return std::exp(-dist.sigma * dist.sigma * diff * diff / 2.0);
    }
    case DistKind::uniform:
      return m == n ? 1.0 : 0.0;
  }
  return 1.0;
}

Mat dephase_local(const Mat& rho, const PhaseDistribution& dist) {
  if (rho.rows() != rho.cols())
    throw std::invalid_argument("density matrix must be square");
  Mat out = rho;
  for (Index m = 0; m < rho.rows(); m++)
    for (Index n = 0; n < rho.cols(); n++)
      out(m, n) *= decoherence_factor(dist, m, n);
  return out;
}

Mat density_from_amplitudes(const Vec& amps) {
  return amps * amps.adjoint();
}

Index suggested_local_dim(double r, double leakage_budget) {
  const Index probe = 200;
  Vec amps = squeezed_vacuum_amplitudes(r, probe);
  double total = amps.squaredNorm();
  double acc = 0.0;
  for (Index d = 1; d <= probe; d++) {
    acc += std::norm(amps[d - 1]);
    // leakage relative to the untruncated state; the probe tail is
    // negligible for the r range this simulator targets
    if (1.0 - acc < leakage_budget && acc <= total + 1e-15) return d;
  }
  return probe;
}

DensityCheck check_density(const Mat& rho) {
  DensityCheck c;
  c.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  c.trace = rho.trace().real();
  Eigen::SelfAdjointEigenSolver<Mat> es((rho + Mat(rho.adjoint())) / 2.0);
  c.min_eigenvalue = es.eigenvalues().minCoeff();
  return c;
}

}  // namespace gbsim
