#pragma once

#include <cstdint>
#include <json.hpp>
#include <vector>

#include "gbsim/types.hpp"

namespace gbsim {

/// A beamsplitter on neighboring modes (site, site+1), 0-based site.
/// Mode-matrix convention: [[cos t, -e^{-i p} sin t], [e^{i p} sin t, cos t]].
struct BeamsplitterParams {
  double theta = 0.0;  // in [0, pi/2]
  double phi = 0.0;    // in [0, 2 pi)
  int site = 0;
};

/// Brickwork circuit: exactly M layers; odd layers (1st, 3rd, ...) couple
/// (1,2),(3,4),...; even layers couple (2,3),(4,5),.... Optional output
/// phase shifters complete the parameterization.
struct LayeredCircuit {
  int num_modes = 0;
  std::vector<std::vector<BeamsplitterParams>> layers;
  std::vector<double> output_phases;  // size num_modes, or empty
};

/// Throws if the layer structure is not a valid M-layer brickwork.
void validate_circuit(const LayeredCircuit& c);

/// Directly sample a Haar-random interferometer as M brickwork layers.
/// The gate at layer l, site s (both 1-based) has cos^2(theta) ~ Beta(1,k),
/// k = min(2l-1, 2s, 2(M-l)+1, 2(M-s)); phases are uniform.
LayeredCircuit sample_haar_layers(int M, uint64_t seed);

Mat beamsplitter_unitary(const BeamsplitterParams& p);

/// Composed M x M mode matrix (layers applied in order, then output phases).
Mat compose_circuit(const LayeredCircuit& c);

/// Two-site Fock-space gate, (d^2 x d^2), index m1*d + m2. Conserves total
/// photon number; each full sector (total <= d-1) is exactly unitary;
/// entries mapping out of the cutoff are dropped.
Mat fock_beamsplitter_gate(const BeamsplitterParams& p, Index d);

nlohmann::json circuit_to_json(const LayeredCircuit& c);
LayeredCircuit circuit_from_json(const nlohmann::json& j);

}  // namespace gbsim
