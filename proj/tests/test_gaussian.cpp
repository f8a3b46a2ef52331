#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gbsim/fock.hpp"
#include "gbsim/gaussian.hpp"
#include "gbsim/interferometer.hpp"
#include "support/test_helpers.hpp"

using namespace gbsim;
using namespace gbsim::testing;

namespace {

// Independent covariance route: symplectic quadrature construction
// sigma_quad = S D S^T, mapped to the complex (a, a^+) basis.
Mat sigma_q_symplectic_oracle(const RVec& r, const Mat& u) {
  const int M = static_cast<int>(u.rows());
  RMat S(2 * M, 2 * M);
  RMat A = u.real(), B = u.imag();
  S << A, -B, B, A;
  RVec D(2 * M);
  for (int j = 0; j < M; j++) {
    D[j] = std::exp(-2.0 * r[j]) / 2.0;
    D[M + j] = std::exp(2.0 * r[j]) / 2.0;
  }
  RMat sigma_quad = S * D.asDiagonal() * S.transpose();
  Mat W(2 * M, 2 * M);
  W.setZero();
  for (int j = 0; j < M; j++) {
    W(j, j) = 1.0 / std::sqrt(2.0);
    W(j, M + j) = cplx(0, 1.0 / std::sqrt(2.0));
    W(M + j, j) = 1.0 / std::sqrt(2.0);
    W(M + j, M + j) = cplx(0, -1.0 / std::sqrt(2.0));
  }
  return W * sigma_quad.cast<cplx>() * W.adjoint() +
         0.5 * Mat::Identity(2 * M, 2 * M);
}

cplx hafnian_brute_3x3_permanent(const Mat& w) {
  // direct 3x3 permanent for validating the Ryser oracle itself
  return w(0, 0) * w(1, 1) * w(2, 2) + w(0, 0) * w(1, 2) * w(2, 1) +
         w(0, 1) * w(1, 0) * w(2, 2) + w(0, 1) * w(1, 2) * w(2, 0) +
         w(0, 2) * w(1, 0) * w(2, 1) + w(0, 2) * w(1, 1) * w(2, 0);
}

Mat random_matrix(Index n, std::mt19937_64& rng) {
  Mat m(n, n);
  for (Index i = 0; i < n; i++)
    for (Index j = 0; j < n; j++) m(i, j) = random_cplx(rng);
  return m;
}

Mat random_symmetric(Index n, std::mt19937_64& rng) {
  Mat m = random_matrix(n, rng);
  return (m + Mat(m.transpose())) / 2.0;
}

}  // namespace

TEST_CASE("vacuum covariance is the identity; A(vacuum) = 0") {
  const int M = 3;
  GaussianCovariance c =
      covariance_from_circuit(RVec::Zero(M), Mat::Identity(M, M));
  CHECK((c.sigma_q - Mat::Identity(2 * M, 2 * M)).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(build_A(c).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("covariance matches the symplectic quadrature oracle") {
  // single mode, no interferometer: quadrature eigenvalues e^{+-2r}
  RVec r1(1);
  r1[0] = 0.4;
  GaussianCovariance c1 = covariance_from_circuit(r1, Mat::Identity(1, 1));
  CHECK((c1.sigma_q - sigma_q_symplectic_oracle(r1, Mat::Identity(1, 1)))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Mat> es(c1.sigma_q -
                                        Mat::Identity(2, 2) / 1.0);
  // 2 sigma_quad eigenvalues are e^{+-0.8}: recover from sigma_q spectrum
  Eigen::SelfAdjointEigenSolver<Mat> eq(2.0 * (c1.sigma_q -
                                               0.5 * Mat::Identity(2, 2)));
  RVec ev = eq.eigenvalues();
  CHECK(ev.minCoeff() == doctest::Approx(std::exp(-0.8)).epsilon(1e-10));
  CHECK(ev.maxCoeff() == doctest::Approx(std::exp(0.8)).epsilon(1e-10));
  // multimode with a random interferometer
  std::mt19937_64 rng(4);
  const int M = 4;
  Mat u = compose_circuit(sample_haar_layers(M, 808));
  RVec r = RVec::Zero(M);
  r[0] = 0.5;
  r[1] = 0.3;
  GaussianCovariance c = covariance_from_circuit(r, u);
  CHECK((c.sigma_q - sigma_q_symplectic_oracle(r, u)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((c.sigma_q - Mat(c.sigma_q.adjoint())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mean photon number from the covariance equals sum sinh^2 r") {
  const int M = 3;
  Mat u = compose_circuit(sample_haar_layers(M, 909));
  RVec r(M);
  r << 0.4, 0.25, 0.0;
  GaussianCovariance c = covariance_from_circuit(r, u);
  double expect = 0;
  for (int j = 0; j < M; j++) expect += std::sinh(r[j]) * std::sinh(r[j]);
  CHECK(std::abs(mean_photons(c) - expect) < 1e-10);
}

TEST_CASE("covariance_from_circuit rejects non-unitary matrices") {
  Mat bad = 2.0 * Mat::Identity(2, 2);
  CHECK_THROWS_AS(covariance_from_circuit(RVec::Zero(2), bad),
                  std::invalid_argument);
}

TEST_CASE("A is symmetric with C = 0 for pure squeezed, C != 0 with loss") {
  const int M = 3;
  Mat u = compose_circuit(sample_haar_layers(M, 111));
  RVec r(M);
  r << 0.4, 0.4, 0.0;
  GaussianCovariance c = covariance_from_circuit(r, u);
  Mat A = build_A(c);
  CHECK((A - Mat(A.transpose())).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(A.block(0, M, M, M).cwiseAbs().maxCoeff() < 1e-12);  // C block
  // diagonal blocks are the squeezed-shortcut B matrix and its conjugate
  Mat B = squeezed_b_matrix(r, u);
  CHECK((A.block(0, 0, M, M) - B.conjugate()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((A.block(M, M, M, M) - B).cwiseAbs().maxCoeff() < 1e-10);
  GaussianCovariance lossy = apply_uniform_loss(c, 0.5);
  Mat Al = build_A(lossy);
  CHECK((Al - Mat(Al.transpose())).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Al.block(0, M, M, M).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("pattern reduction follows the delete-and-repeat rule") {
  const int M = 4;
  Mat A(2 * M, 2 * M);
  for (Index i = 0; i < 2 * M; i++)
    for (Index j = 0; j < 2 * M; j++)
      A(i, j) = cplx(double(i), double(j));
  Mat r1 = reduce_pattern(A, {{0, 0, 1, 1}});
  REQUIRE(r1.rows() == 4);
  // kept indices (0-based): {2, 3, 6, 7}
  std::vector<int> keep{2, 3, 6, 7};
  for (size_t a = 0; a < keep.size(); a++)
    for (size_t b = 0; b < keep.size(); b++)
      CHECK(r1(a, b) == A(keep[a], keep[b]));
  Mat r0 = reduce_pattern(A, {{0, 0, 0, 0}});
  CHECK(r0.rows() == 0);
  Mat r2 = reduce_pattern(A, {{2, 0, 0, 0}});
  REQUIRE(r2.rows() == 4);
  std::vector<int> keep2{0, 0, 4, 4};
  for (size_t a = 0; a < keep2.size(); a++)
    for (size_t b = 0; b < keep2.size(); b++)
      CHECK(r2(a, b) == A(keep2[a], keep2[b]));
}

TEST_CASE("hafnian basics: 2x2, empty matrix, odd/asymmetric rejection") {
  Mat m(2, 2);
  m << 1.5, cplx(2.0, 1.0), cplx(2.0, 1.0), -0.5;
  CHECK(hafnian(m) == cplx(2.0, 1.0));
  CHECK(hafnian(Mat(0, 0)) == cplx(1.0));
  CHECK_THROWS_AS(hafnian(Mat::Zero(3, 3)), std::invalid_argument);
  Mat asym(2, 2);
  asym << 0.0, 1.0, 2.0, 0.0;
  CHECK_THROWS_AS(hafnian(asym), std::invalid_argument);
}

TEST_CASE("Ryser permanent oracle agrees with direct expansion at 3x3") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 5; t++) {
    Mat w = random_matrix(3, rng);
    CHECK(std::abs(permanent_ryser(w) - hafnian_brute_3x3_permanent(w)) <
          1e-12);
  }
}

TEST_CASE("Haf([[0,W],[W^T,0]]) equals the permanent of W") {
  std::mt19937_64 rng(33);
  for (Index n : {2, 3, 4}) {
    for (int t = 0; t < 5; t++) {
      Mat w = random_matrix(n, rng);
      Mat block = Mat::Zero(2 * n, 2 * n);
      block.block(0, n, n, n) = w;
      block.block(n, 0, n, n) = w.transpose();
      cplx haf = hafnian(block);
      cplx perm = permanent_ryser(w);
      CHECK(std::abs(haf - perm) < 1e-9 * std::max(1.0, std::abs(perm)));
    }
  }
}

TEST_CASE("matching enumeration and recursive elimination agree to 8x8") {
  std::mt19937_64 rng(55);
  for (Index n : {2, 4, 6, 8}) {
    for (int t = 0; t < 4; t++) {
      Mat m = random_symmetric(n, rng);
      cplx a = hafnian(m), b = hafnian_recursive(m);
      CHECK(std::abs(a - b) < 1e-9 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST_CASE("vacuum pattern probability is exactly 1/sqrt(det sigma_q)") {
  const int M = 2;
  Mat u = compose_circuit(sample_haar_layers(M, 2222));
  RVec r(M);
  r << 0.4, 0.4;
  GaussianCovariance c = covariance_from_circuit(r, u);
  double det = std::sqrt(std::abs(c.sigma_q.determinant().real()));
  CHECK(gbs_probability(c, {{0, 0}}) * det == doctest::Approx(1.0).epsilon(1e-12));
  // pure squeezed: sqrt|sigma_q| = prod cosh r
  CHECK(det == doctest::Approx(std::cosh(0.4) * std::cosh(0.4)).epsilon(1e-10));
  // vacuum input: probability of the empty pattern is 1
  GaussianCovariance v =
      covariance_from_circuit(RVec::Zero(M), Mat::Identity(M, M));
  CHECK(gbs_probability(v, {{0, 0}}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single-mode probabilities match the Fock amplitude squares") {
  RVec r(1);
  r[0] = 0.4;
  GaussianCovariance c = covariance_from_circuit(r, Mat::Identity(1, 1));
  Vec amps = squeezed_vacuum_amplitudes(0.4, 12);
  for (int n : {0, 2, 4, 6}) {
    double expect = std::norm(amps[n]);
    CHECK(std::abs(gbs_probability(c, {{n}}) - expect) < 1e-10);
  }
  // odd patterns are impossible
  CHECK(std::abs(gbs_probability(c, {{1}})) < 1e-14);
  CHECK(std::abs(gbs_probability(c, {{3}})) < 1e-14);
}

TEST_CASE("single-mode probabilities sum close to 1 (enumeration)") {
  RVec r(1);
  r[0] = 0.4;
  GaussianCovariance c = covariance_from_circuit(r, Mat::Identity(1, 1));
  double total = 0;
  for (int n = 0; n <= 8; n++) total += gbs_probability(c, {{n}});
  CHECK(total < 1.0 + 1e-12);
  CHECK(1.0 - total < 1e-4);
}

TEST_CASE("hafnian path and squeezed B-form path agree (property)") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 3; trial++) {
    const int M = 3;
    Mat u = compose_circuit(sample_haar_layers(M, derive_seed(7171, trial)));
    RVec r(M);
    r << 0.4, 0.55, 0.0;
    GaussianCovariance c = covariance_from_circuit(r, u);
    for (int n1 = 0; n1 <= 2; n1++)
      for (int n2 = 0; n2 <= 1; n2++)
        for (int n3 = 0; n3 <= 1; n3++) {
          PhotonPattern p{{n1, n2, n3}};
          double a = gbs_probability(c, p);
          double b = squeezed_b_probability(r, u, p);
          CHECK(std::abs(a - b) < 1e-10);
        }
  }
}

TEST_CASE("dephased probability with dist = none equals gbs_probability") {
  const int M = 2;
  LayeredCircuit circ = sample_haar_layers(M, 515);
  Mat u = compose_circuit(circ);
  RVec r(M);
  r << 0.4, 0.4;
  GaussianCovariance c = covariance_from_circuit(r, u);
  for (auto pat : {PhotonPattern{{1, 1}}, PhotonPattern{{2, 0}}}) {
    McEstimate e =
        dephased_probability(r, circ, PhaseDistribution::none(), pat, 10, 1);
    CHECK(e.mean == gbs_probability(c, pat));
    CHECK(e.std_error == 0.0);
  }
}

TEST_CASE("uniform dephasing at M = 1 reproduces the diagonal density") {
  LayeredCircuit circ = sample_haar_layers(1, 9);
  RVec r(1);
  r[0] = 0.4;
  Mat rho = dephase_local(
      density_from_amplitudes(squeezed_vacuum_amplitudes(0.4, 16)),
      PhaseDistribution::uniform());
  McEstimate e = dephased_probability(r, circ, PhaseDistribution::uniform(),
                                      {{2}}, 20000, 31);
  CHECK(std::abs(e.mean - rho(2, 2).real()) <
        std::max(3.0 * e.std_error, 1e-10));
}

TEST_CASE("dephased probability matches the dense channel-evolve oracle") {
  const int M = 2;
  const Index d = 16;
  LayeredCircuit circ = sample_haar_layers(M, 616);
  RVec r(M);
  r << 0.4, 0.4;
  PhaseDistribution dist = PhaseDistribution::wrapped(0.5);
  Mat local = dephase_local(
      density_from_amplitudes(squeezed_vacuum_amplitudes(0.4, d)), dist);
  Mat rho = dense_evolve({local, local}, circ, d);
  for (auto pat : {PhotonPattern{{1, 1}}, PhotonPattern{{2, 0}},
                   PhotonPattern{{0, 2}}}) {
    McEstimate e = dephased_probability(r, circ, dist, pat, 100000, 424242);
    Index idx = pat.counts[0] * d + pat.counts[1];
    double dense = rho(idx, idx).real();
    CHECK(std::abs(e.mean - dense) < 3.0 * e.std_error + 1e-9);
  }
}

TEST_CASE("wrapped dephasing converges to uniform for large sigma") {
  const int M = 2;
  LayeredCircuit circ = sample_haar_layers(M, 717);
  RVec r(M);
  r << 0.4, 0.4;
  PhotonPattern pat{{1, 1}};
  McEstimate wide = dephased_probability(
      r, circ, PhaseDistribution::wrapped(8.0), pat, 60000, 5);
  McEstimate uni = dephased_probability(r, circ, PhaseDistribution::uniform(),
                                        pat, 60000, 6);
  CHECK(std::abs(wide.mean - uni.mean) <
        3.0 * (wide.std_error + uni.std_error) + 1e-9);
}

TEST_CASE("dense evolution: identity circuit, purity, size limit") {
  const Index d = 3;
  LayeredCircuit idc;
  idc.num_modes = 3;
  idc.layers = {{{0.0, 0.0, 0}}, {{0.0, 0.0, 1}}, {{0.0, 0.0, 0}}};
  Vec amp = squeezed_vacuum_amplitudes(0.3, d);
  Mat local = density_from_amplitudes(amp);
  std::vector<Mat> locals(3, local);
  Mat rho = dense_evolve(locals, idc, d);
  Mat kron_expect = Mat::Ones(1, 1);
  for (int j = 0; j < 3; j++) {
    Mat next(kron_expect.rows() * d, kron_expect.cols() * d);
    for (Index a = 0; a < kron_expect.rows(); a++)
      for (Index b = 0; b < kron_expect.cols(); b++)
        next.block(a * d, b * d, d, d) = kron_expect(a, b) * local;
    kron_expect = next;
  }
  CHECK((rho - kron_expect).cwiseAbs().maxCoeff() < 1e-14);
  // unitary circuit on a pure input keeps purity 1 (within cutoff leakage)
  LayeredCircuit c = sample_haar_layers(3, 99);
  std::vector<Vec> amps(3, amp / amp.norm());
  Vec psi = dense_evolve_pure(amps, c, d);
  std::vector<Mat> pls(3, density_from_amplitudes(amp / amp.norm()));
  Mat rho2 = dense_evolve(pls, c, d);
  double purity = (rho2 * rho2).trace().real();
  double tr = rho2.trace().real();
  CHECK(std::abs(purity - tr * tr) < 1e-10);
  CHECK((rho2 - Mat(psi * psi.adjoint())).cwiseAbs().maxCoeff() < 1e-12);
  // size limit
  LayeredCircuit big = sample_haar_layers(8, 1);
  std::vector<Mat> biglocals(8, local);
  CHECK_THROWS_AS(dense_evolve(biglocals, big, 3, 128), std::invalid_argument);
}

TEST_CASE("dense operator-Schmidt: product state and pure-state structure") {
  const Index d = 3;
  Mat l1 = density_from_amplitudes(squeezed_vacuum_amplitudes(0.4, d));
  Mat l2 = density_from_amplitudes(squeezed_vacuum_amplitudes(0.2, d));
  Mat prod(d * d, d * d);
  for (Index a = 0; a < d; a++)
    for (Index b = 0; b < d; b++)
      prod.block(a * d, b * d, d, d) = l1(a, b) * l2;
  RVec s = dense_operator_schmidt(prod, 1, d, 2);
  CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (Index i = 1; i < s.size(); i++) CHECK(s[i] < 1e-12);

  // pure entangled state: operator spectrum = outer square of state spectrum
  LayeredCircuit c = sample_haar_layers(2, 77);
  Vec a0 = squeezed_vacuum_amplitudes(0.4, d);
  Vec psi = dense_evolve_pure({a0, Vec(Vec::Unit(d, 0))}, c, d);
  psi /= psi.norm();
  RVec state = dense_state_schmidt(psi, 1, d, 2);
  Mat rho = psi * psi.adjoint();
  RVec op = dense_operator_schmidt(rho, 1, d, 2);
  std::vector<double> outer;
  for (Index i = 0; i < state.size(); i++)
    for (Index j = 0; j < state.size(); j++)
      outer.push_back(state[i] * state[j]);
  std::sort(outer.begin(), outer.end(), std::greater<>());
  for (Index i = 0; i < op.size() && i < static_cast<Index>(outer.size()); i++)
    CHECK(std::abs(op[i] - outer[i]) < 1e-10);
}
