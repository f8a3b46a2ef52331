#include "gbsim/interferometer.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <random>
#include <stdexcept>

namespace gbsim {

void validate_circuit(const LayeredCircuit& c) {
  if (c.num_modes < 1) throw std::invalid_argument("circuit needs >= 1 mode");
  if (static_cast<int>(c.layers.size()) != c.num_modes)
    throw std::invalid_argument("circuit must have exactly M layers");
  for (size_t l = 0; l < c.layers.size(); l++) {
    std::vector<bool> used(c.num_modes, false);
    for (const auto& g : c.layers[l]) {
      if (g.site < 0 || g.site + 1 >= c.num_modes)
        throw std::invalid_argument("gate site out of range");
      if ((g.site % 2) != static_cast<int>(l % 2))
        throw std::invalid_argument("gate does not match brickwork parity");
      if (used[g.site] || used[g.site + 1])
        throw std::invalid_argument("two gates share a mode within a layer");
      used[g.site] = used[g.site + 1] = true;
      if (g.theta < 0 || g.theta > M_PI / 2 + 1e-12)
        throw std::invalid_argument("theta out of [0, pi/2]");
    }
  }
  if (!c.output_phases.empty() &&
      static_cast<int>(c.output_phases.size()) != c.num_modes)
    throw std::invalid_argument("output phase count mismatch");
}

LayeredCircuit sample_haar_layers(int M, uint64_t seed) {
  if (M < 1) throw std::invalid_argument("M must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  LayeredCircuit c;
  c.num_modes = M;
  c.layers.resize(M);
  for (int l = 1; l <= M; l++) {
    for (int s = (l % 2 == 1) ? 1 : 2; s + 1 <= M; s += 2) {
      int k = std::min(std::min(2 * l - 1, 2 * s),
                       std::min(2 * (M - l) + 1, 2 * (M - s)));
      // cos^2 theta ~ Beta(1, k)  <=>  sin^2 theta = u^{1/k}
      double u = uni(rng);
      double theta = std::asin(std::sqrt(std::pow(u, 1.0 / k)));
      double phi = 2.0 * M_PI * uni(rng);
      c.layers[l - 1].push_back({theta, phi, s - 1});
    }
  }
  c.output_phases.resize(M);
  for (int m = 0; m < M; m++) c.output_phases[m] = 2.0 * M_PI * uni(rng);
  return c;
}

Mat beamsplitter_unitary(const BeamsplitterParams& p) {
  Mat u(2, 2);
  double ct = std::cos(p.theta), st = std::sin(p.theta);
  u(0, 0) = ct;
  u(0, 1) = -std::exp(cplx(0, -p.phi)) * st;
  u(1, 0) = std::exp(cplx(0, p.phi)) * st;
  u(1, 1) = ct;
  return u;
}

Mat compose_circuit(const LayeredCircuit& c) {
  validate_circuit(c);
  const int M = c.num_modes;
  Mat U = Mat::Identity(M, M);
  for (const auto& layer : c.layers) {
    Mat L = Mat::Identity(M, M);
    for (const auto& g : layer) {
      Mat u = beamsplitter_unitary(g);
      L(g.site, g.site) = u(0, 0);
      L(g.site, g.site + 1) = u(0, 1);
      L(g.site + 1, g.site) = u(1, 0);
      L(g.site + 1, g.site + 1) = u(1, 1);
    }
    U = L * U;
  }
  for (size_t m = 0; m < c.output_phases.size(); m++)
    U.row(m) *= std::exp(cplx(0, c.output_phases[m]));
  return U;
}

Mat fock_beamsplitter_gate(const BeamsplitterParams& p, Index d) {
  if (d < 1) throw std::invalid_argument("cutoff must be >= 1");
  Mat G = Mat::Zero(d * d, d * d);
  // Per total-photon sector: exponentiate the generator
  // theta * (-e^{-i phi} a1^+ a2 + e^{i phi} a2^+ a1) in the untruncated
  // sector basis, then keep the entries inside the cutoff.
  for (Index n = 0; n <= 2 * (d - 1); n++) {
    const Index dim = n + 1;  // basis |m, n-m>, m = 0..n
    Mat H = Mat::Zero(dim, dim);  // Hermitian -i * generator
    for (Index m = 0; m + 1 <= n; m++) {
      // <m+1, n-m-1| a1^+ a2 |m, n-m> = sqrt((m+1)(n-m))
      double amp = std::sqrt(static_cast<double>((m + 1) * (n - m)));
      cplx x = -std::exp(cplx(0, -p.phi)) * amp;  // generator (m+1, m)
      H(m + 1, m) = cplx(0, -1) * x;
      H(m, m + 1) = std::conj(H(m + 1, m));
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    Vec ph(dim);
    for (Index i = 0; i < dim; i++)
      ph[i] = std::exp(cplx(0, p.theta * es.eigenvalues()[i]));
    Mat S = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
    for (Index mo = std::max<Index>(0, n - (d - 1)); mo <= std::min(n, d - 1);
         mo++)
      for (Index mi = std::max<Index>(0, n - (d - 1));
           mi <= std::min(n, d - 1); mi++)
        G(mo * d + (n - mo), mi * d + (n - mi)) = S(mo, mi);
  }
  return G;
}

nlohmann::json circuit_to_json(const LayeredCircuit& c) {
  nlohmann::json j;
  j["modes"] = c.num_modes;
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : c.layers) {
    nlohmann::json jl = nlohmann::json::array();
    for (const auto& g : layer)
      jl.push_back({{"site", g.site}, {"theta", g.theta}, {"phi", g.phi}});
    j["layers"].push_back(jl);
  }
  if (!c.output_phases.empty()) j["output_phases"] = c.output_phases;
  return j;
}

LayeredCircuit circuit_from_json(const nlohmann::json& j) {
  LayeredCircuit c;
  c.num_modes = j.at("modes").get<int>();
  for (const auto& jl : j.at("layers")) {
    std::vector<BeamsplitterParams> layer;
    for (const auto& jg : jl)
      layer.push_back({jg.at("theta").get<double>(),
                       jg.at("phi").get<double>(), jg.at("site").get<int>()});
    c.layers.push_back(std::move(layer));
  }
  if (j.contains("output_phases"))
    c.output_phases = j.at("output_phases").get<std::vector<double>>();
  validate_circuit(c);
  return c;
}

}  // namespace gbsim
