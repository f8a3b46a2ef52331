#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "gbsim/fock.hpp"

using namespace gbsim;

namespace {

// Simpson quadrature of f over [-pi, pi)
template <typename F>
double quad(F f, int n = 20000) {
  double h = 2.0 * M_PI / n;
  double s = f(-M_PI) + f(-M_PI + n * h);
  for (int i = 1; i < n; i++) s += (i % 2 ? 4.0 : 2.0) * f(-M_PI + i * h);
  return s * h / 3.0;
}

// squeezed vacuum by exponentiating the truncated generator (r/2)(a+a+ - aa)
Vec squeeze_matrix_exponential_oracle(double r, Index cutoff) {
  Mat a = Mat::Zero(cutoff, cutoff);
  for (Index n = 1; n < cutoff; n++) a(n - 1, n) = std::sqrt(double(n));
  Mat adag = a.adjoint();
  Mat gen = 0.5 * r * (adag * adag - a * a);
  Mat s = gen.exp();
  return s.col(0);
}

}  // namespace

TEST_CASE("squeezed vacuum at r = 0 is the vacuum") {
  Vec a = squeezed_vacuum_amplitudes(0.0, 4);
  CHECK(a[0].real() == doctest::Approx(1.0));
  CHECK(a[0].imag() == 0.0);
  for (Index i = 1; i < 4; i++) CHECK(std::abs(a[i]) == 0.0);
}

TEST_CASE("squeezed vacuum amplitudes match the matrix-exponential oracle") {
  const double r = 0.4;
  Vec oracle = squeeze_matrix_exponential_oracle(r, 40);
  Vec amps = squeezed_vacuum_amplitudes(r, 10);
  // truncation leakage at d = 10 is 1.645e-5 (the oracle's partial sum
  // agrees); the norm is close to but not exactly 1
  CHECK(std::abs(amps.squaredNorm() - oracle.head(10).squaredNorm()) < 1e-12);
  CHECK(std::abs(amps.squaredNorm() - 1.0) < 1e-4);
  // magnitudes agree entrywise (the oracle generator has the opposite
  // squeezing-phase convention, so compare moduli)
  for (Index n = 0; n < 10; n++)
    CHECK(std::abs(std::abs(amps[n]) - std::abs(oracle[n])) < 1e-10);
  // engine sign convention: amp[2]/amp[0] = -tanh(r)/sqrt(2)
  double ratio = (amps[2] / amps[0]).real();
  CHECK(ratio == doctest::Approx(-std::tanh(r) / std::sqrt(2.0)).epsilon(1e-12));
  // odd entries exactly zero; leading entry real positive
  for (Index n = 1; n < 10; n += 2) CHECK(std::abs(amps[n]) == 0.0);
  CHECK(amps[0].real() > 0);
  CHECK(amps[0].imag() == 0.0);
}

TEST_CASE("cutoff leakage decreases monotonically with d") {
  for (double r : {0.2, 0.4, 0.8}) {
    double prev = 1.0;
    for (Index d = 1; d <= 14; d++) {
      double leak = 1.0 - squeezed_vacuum_amplitudes(r, d).squaredNorm();
      CHECK(leak <= prev + 1e-15);
      prev = leak;
    }
  }
}

TEST_CASE("suggested_local_dim meets the leakage budget") {
  for (double r : {0.2, 0.4, 0.6}) {
    Index d = suggested_local_dim(r, 1e-4);
    CHECK(1.0 - squeezed_vacuum_amplitudes(r, d).squaredNorm() < 1e-4);
    if (d > 1)
      CHECK(1.0 - squeezed_vacuum_amplitudes(r, d - 1).squaredNorm() >= 1e-4);
  }
}

TEST_CASE("wrapped Gaussian pdf normalizes to 1") {
  for (double sigma : {0.3, 0.5, 1.0, 2.0, 5.0}) {
    auto dist = PhaseDistribution::wrapped(sigma);
    double z = quad([&](double t) { return wrapped_gaussian_pdf(t, dist); });
    CHECK(std::abs(z - 1.0) < 1e-10);
  }
}

TEST_CASE("wrapped Gaussian tends to the uniform density for large sigma") {
  auto dist = PhaseDistribution::wrapped(50.0);
  for (double t : {-3.0, -1.0, 0.0, 0.7, 3.0})
    CHECK(std::abs(wrapped_gaussian_pdf(t, dist) - 1.0 / (2.0 * M_PI)) <
          1e-10);
}

TEST_CASE("wrapped Gaussian matches the brute-force wrap sum") {
  const double sigma = 0.5;
  auto dist = PhaseDistribution::wrapped(sigma);
  auto brute = [&](double theta) {
    double s = 0;
    for (int k = -100; k <= 100; k++) {
      double x = theta + 2.0 * M_PI * k;
      s += std::exp(-x * x / (2.0 * sigma * sigma));
    }
    return s / std::sqrt(2.0 * M_PI * sigma * sigma);
  };
  for (double t : {0.0, 0.3, -1.2, 3.0})
    CHECK(std::abs(wrapped_gaussian_pdf(t, dist) - brute(t)) < 1e-13);
}

TEST_CASE("circular variance equals 1 - exp(-sigma^2/2)") {
  for (double sigma : {0.3, 1.0, 2.0}) {
    auto dist = PhaseDistribution::wrapped(sigma);
    double re = quad([&](double t) {
      return wrapped_gaussian_pdf(t, dist) * std::cos(t);
    });
    double im = quad([&](double t) {
      return wrapped_gaussian_pdf(t, dist) * std::sin(t);
    });
    double circ_var = 1.0 - std::hypot(re, im);
    CHECK(std::abs(circ_var - (1.0 - std::exp(-sigma * sigma / 2.0))) < 1e-8);
  }
}

TEST_CASE("pdf rejects non-wrapped distributions") {
  CHECK_THROWS_AS(wrapped_gaussian_pdf(0.0, PhaseDistribution::none()),
                  std::invalid_argument);
  CHECK_THROWS_AS(wrapped_gaussian_pdf(0.0, PhaseDistribution::uniform()),
                  std::invalid_argument);
}

TEST_CASE("decoherence factors: closed forms and limits") {
  auto wg = PhaseDistribution::wrapped(1.0);
  CHECK(decoherence_factor(wg, 0, 2) == doctest::Approx(std::exp(-2.0)));
  for (auto dist : {PhaseDistribution::none(), PhaseDistribution::wrapped(0.7),
                    PhaseDistribution::uniform()})
    for (Index m = 0; m < 5; m++) CHECK(decoherence_factor(dist, m, m) == 1.0);
  CHECK(decoherence_factor(PhaseDistribution::uniform(), 0, 3) == 0.0);
  CHECK(decoherence_factor(PhaseDistribution::none(), 1, 4) == 1.0);
  CHECK_THROWS_AS(decoherence_factor(wg, -1, 0), std::invalid_argument);
}

TEST_CASE("decoherence factor equals the quadrature of the pdf") {
  auto dist = PhaseDistribution::wrapped(0.7);
  const Index m = 1, n = 4;
  double re = quad([&](double t) {
    return wrapped_gaussian_pdf(t, dist) * std::cos(t * double(m - n));
  });
  double im = quad([&](double t) {
    return wrapped_gaussian_pdf(t, dist) * std::sin(t * double(m - n));
  });
  CHECK(std::abs(std::hypot(re, im) - decoherence_factor(dist, m, n)) < 1e-8);
  CHECK(std::abs(im) < 1e-8);  // theta0 = 0: factor is real
}

TEST_CASE("decoherence factor is symmetric and depends only on |m-n|") {
  auto dist = PhaseDistribution::wrapped(0.9);
  for (Index m = 0; m < 6; m++)
    for (Index n = 0; n < 6; n++) {
      CHECK(decoherence_factor(dist, m, n) == decoherence_factor(dist, n, m));
      CHECK(decoherence_factor(dist, m, n) ==
            decoherence_factor(dist, 0, std::abs(m - n)));
      CHECK(decoherence_factor(dist, m, n) <= 1.0);
      CHECK(decoherence_factor(dist, m, n) >= 0.0);
    }
}

TEST_CASE("dephase_local: identity for none, diagonal for uniform") {
  Mat rho = density_from_amplitudes(squeezed_vacuum_amplitudes(0.4, 8));
  Mat none = dephase_local(rho, PhaseDistribution::none());
  CHECK((none - rho).cwiseAbs().maxCoeff() == 0.0);
  Mat uni = dephase_local(rho, PhaseDistribution::uniform());
  for (Index m = 0; m < 8; m++)
    for (Index n = 0; n < 8; n++) {
      if (m == n)
        CHECK(uni(m, n) == rho(m, n));
      else
        CHECK(std::abs(uni(m, n)) == 0.0);
    }
}

TEST_CASE("dephase_local matches the Monte-Carlo phase average") {
  const double sigma = 0.5;
  Mat rho = density_from_amplitudes(squeezed_vacuum_amplitudes(0.4, 10));
  Mat expect = dephase_local(rho, PhaseDistribution::wrapped(sigma));
  // MC average of U(theta) rho U(theta)^+ multiplies rho_{mn} by the sample
  // mean of e^{-i theta (m-n)}; averaging that factor per difference is the
  // identical sum, computed once per |m-n|.
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0.0, sigma);
  const long samples = 1000000;
  std::vector<cplx> factor(10, 0.0);
  for (long s = 0; s < samples; s++) {
    double th = gauss(rng);
    th = th - 2.0 * M_PI * std::floor((th + M_PI) / (2.0 * M_PI));
    for (int diff = 0; diff < 10; diff++)
      factor[diff] += std::exp(cplx(0, -th * diff));
  }
  for (auto& f : factor) f /= double(samples);
  Mat mc = rho;
  for (Index m = 0; m < 10; m++)
    for (Index n = 0; n < 10; n++)
      mc(m, n) *= (m >= n) ? factor[m - n] : std::conj(factor[n - m]);
  CHECK((mc - expect).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("diagonal (photon-number distribution) is channel-invariant") {
  Mat rho = density_from_amplitudes(squeezed_vacuum_amplitudes(0.5, 8));
  for (auto dist : {PhaseDistribution::none(), PhaseDistribution::wrapped(0.8),
                    PhaseDistribution::uniform()}) {
    Mat out = dephase_local(rho, dist);
    for (Index n = 0; n < 8; n++) CHECK(out(n, n) == rho(n, n));
  }
}

TEST_CASE("composition: sigma1 then sigma2 equals sqrt(s1^2 + s2^2)") {
  Mat rho = density_from_amplitudes(squeezed_vacuum_amplitudes(0.4, 8));
  double s1 = 0.6, s2 = 0.45;
  Mat twice = dephase_local(dephase_local(rho, PhaseDistribution::wrapped(s1)),
                            PhaseDistribution::wrapped(s2));
  Mat once = dephase_local(
      rho, PhaseDistribution::wrapped(std::sqrt(s1 * s1 + s2 * s2)));
  CHECK((twice - once).cwiseAbs().maxCoeff() < 1e-14);
  // uniform dephasing is idempotent
  Mat u1 = dephase_local(rho, PhaseDistribution::uniform());
  Mat u2 = dephase_local(u1, PhaseDistribution::uniform());
  CHECK((u1 - u2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dephased densities stay Hermitian, trace-preserving, PSD") {
  Mat rho = density_from_amplitudes(squeezed_vacuum_amplitudes(0.4, 8));
  for (double sigma : {0.2, 0.5, 1.5}) {
    Mat out = dephase_local(rho, PhaseDistribution::wrapped(sigma));
    DensityCheck c = check_density(out);
    CHECK(c.hermiticity_error < 1e-12);
    CHECK(c.trace == doctest::Approx(rho.trace().real()).epsilon(1e-12));
    CHECK(c.min_eigenvalue > -1e-10);
  }
}
