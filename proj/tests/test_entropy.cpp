#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gbsim/entropy.hpp"
#include "gbsim/fock.hpp"
#include "gbsim/gaussian.hpp"
#include "gbsim/interferometer.hpp"
#include "gbsim/tn_state.hpp"

using namespace gbsim;

namespace {

RVec random_spectrum(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  RVec v(n);
  for (Index i = 0; i < n; i++) v[i] = u(rng);
  return v / v.norm();
}

// extended-precision reference sum
double renyi_oracle(const RVec& s, double alpha) {
  long double acc = 0;
  for (Index i = 0; i < s.size(); i++) {
    long double p = static_cast<long double>(s[i]) * s[i];
    if (p > 0) acc += std::pow(p, static_cast<long double>(alpha));
  }
  return static_cast<double>(std::log(acc) / (1.0L - alpha));
}

}  // namespace

TEST_CASE("single Schmidt value means zero entropy for every order") {
  RVec one(1);
  one << 1.0;
  CHECK(von_neumann_entropy(one) == 0.0);
  for (double a : {0.5, 2.0, 3.0}) CHECK(renyi_entropy(one, a) == 0.0);
}

TEST_CASE("flat spectra give log of the rank") {
  RVec half(2);
  half << std::sqrt(0.5), std::sqrt(0.5);
  CHECK(renyi_entropy(half, 2.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  RVec quarter = RVec::Constant(4, 0.5);
  CHECK(von_neumann_entropy(quarter) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("Renyi entropy matches the extended-precision oracle") {
  std::mt19937_64 rng(17);
  RVec s = random_spectrum(8, rng);
  CHECK(std::abs(renyi_entropy(s, 0.5) - renyi_oracle(s, 0.5)) < 1e-12);
  CHECK(std::abs(renyi_entropy(s, 2.0) - renyi_oracle(s, 2.0)) < 1e-12);
}

TEST_CASE("von Neumann is the alpha -> 1 limit of the Renyi family") {
  std::mt19937_64 rng(23);
  RVec s = random_spectrum(10, rng);
  double lo = renyi_entropy(s, 1.0 - 1e-4);
  double hi = renyi_entropy(s, 1.0 + 1e-4);
  CHECK(std::abs((lo + hi) / 2.0 - von_neumann_entropy(s)) < 1e-6);
}

TEST_CASE("invalid orders and unnormalized spectra are rejected") {
  RVec ok(2);
  ok << std::sqrt(0.5), std::sqrt(0.5);
  CHECK_THROWS_AS(renyi_entropy(ok, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(renyi_entropy(ok, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(renyi_entropy(ok, -2.0), std::invalid_argument);
  RVec bad(2);
  bad << 1.0, 1.0;
  CHECK_THROWS_AS(renyi_entropy(bad, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(von_neumann_entropy(bad), std::invalid_argument);
}

TEST_CASE("S_alpha is nonincreasing in alpha (property)") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 10; t++) {
    RVec s = random_spectrum(6, rng);
    double prev = renyi_entropy(s, 0.3);
    for (double a : {0.6, 0.9, 1.0, 1.4, 2.0, 4.0}) {
      double cur = spectrum_entropy(s, a);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("entropies are invariant under permutation and zero padding") {
  std::mt19937_64 rng(37);
  RVec s = random_spectrum(5, rng);
  RVec shuffled = s;
  std::shuffle(shuffled.data(), shuffled.data() + 5, rng);
  RVec padded(8);
  padded << s, 0.0, 0.0, 0.0;
  for (double a : {0.5, 1.0, 2.0}) {
    CHECK(spectrum_entropy(shuffled, a) ==
          doctest::Approx(spectrum_entropy(s, a)).epsilon(1e-13));
    CHECK(spectrum_entropy(padded, a) ==
          doctest::Approx(spectrum_entropy(s, a)).epsilon(1e-13));
  }
}

TEST_CASE("entropy stays below log(spectrum length)") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 5; t++) {
    RVec s = random_spectrum(7, rng);
    CHECK(von_neumann_entropy(s) <= std::log(7.0) + 1e-12);
    CHECK(von_neumann_entropy(s) >= 0.0);
  }
}

TEST_CASE("max_entropy: product history, monotone growth, tie breaking") {
  RVec one(1);
  one << 1.0;
  std::vector<LayerSpectra> product(3, LayerSpectra(2, one));
  EntropyRecord rec = max_entropy(product, 1.0);
  CHECK(rec.value == 0.0);
  CHECK(rec.layer == 1);
  CHECK(rec.bond == 1);

  auto flat = [](Index n) {
    return RVec(RVec::Constant(n, 1.0 / std::sqrt(double(n))));
  };
  std::vector<LayerSpectra> growing{
      {flat(1), flat(2)}, {flat(2), flat(3)}, {flat(3), flat(4)}};
  rec = max_entropy(growing, 1.0);
  CHECK(rec.layer == 3);
  CHECK(rec.bond == 2);
  CHECK(rec.value == doctest::Approx(std::log(4.0)));

  // exact tie: earliest layer, lowest bond wins
  std::vector<LayerSpectra> tied{{flat(2), flat(2)}, {flat(2), flat(2)}};
  rec = max_entropy(tied, 2.0);
  CHECK(rec.layer == 1);
  CHECK(rec.bond == 1);
  CHECK_THROWS_AS(max_entropy({}, 1.0), std::invalid_argument);
}

TEST_CASE("max over layers and bonds matches the dense exhaustive oracle") {
  const Index d = 3;
  const int M = 3;
  LayeredCircuit c = sample_haar_layers(M, 777);
  Mat local = dephase_local(
      density_from_amplitudes(squeezed_vacuum_amplitudes(0.4, d)),
      PhaseDistribution::wrapped(0.5));
  std::vector<Mat> locals(2, local);
  TnState s = init_mixed(locals, M, d, {});

  std::vector<Mat> all = locals;
  all.push_back([&] {
    Mat v = Mat::Zero(d, d);
    v(0, 0) = 1.0;
    return v;
  }());
  // dense per-layer evolution alongside the chain
  std::vector<LayerSpectra> tn_history, dense_history;
  Mat rho = Mat::Ones(1, 1);
  {
    // rebuild the initial dense state
    rho = Mat::Ones(1, 1);
    for (const auto& l : all) {
      Mat next(rho.rows() * d, rho.cols() * d);
      for (Index i = 0; i < rho.rows(); i++)
        for (Index j = 0; j < rho.cols(); j++)
          next.block(i * d, j * d, d, d) = rho(i, j) * l;
      rho = std::move(next);
    }
  }
  for (int l = 0; l < M; l++) {
    // evolve the dense state and the chain through this layer in lockstep
    for (const auto& g : c.layers[l]) {
      Mat g2 = fock_beamsplitter_gate(g, d);
      Index left = 1;
      for (int i = 0; i < g.site; i++) left *= d;
      Index right = rho.rows() / (left * d * d);
      Mat emb = Mat::Zero(rho.rows(), rho.cols());
      for (Index L = 0; L < left; L++)
        for (Index R = 0; R < right; R++)
          for (Index m = 0; m < d * d; m++)
            for (Index n = 0; n < d * d; n++)
              emb(L * d * d * right + m * right + R,
                  L * d * d * right + n * right + R) = g2(m, n);
      rho = emb * rho * emb.adjoint();
      apply_two_site_gate(s, g.site, g2);
    }
    LayerSpectra tn_sp = all_bond_spectra(s), dense_sp;
    for (int cut = 1; cut < M; cut++)
      dense_sp.push_back(dense_operator_schmidt(rho, cut, d, M));
    tn_history.push_back(tn_sp);
    dense_history.push_back(dense_sp);
  }
  for (double alpha : {1.0, 2.0}) {
    EntropyRecord a = max_entropy(tn_history, alpha);
    EntropyRecord b = max_entropy(dense_history, alpha);
    CHECK(std::abs(a.value - b.value) < 1e-10);
    CHECK(a.layer == b.layer);
    CHECK(a.bond == b.bond);
  }
}
