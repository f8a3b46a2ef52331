#pragma once

#include <vector>

#include "gbsim/types.hpp"

namespace gbsim {

/// One entropy measurement; layer and bond are 1-based in reports.
struct EntropyRecord {
  int layer = 0;
  int bond = 0;
  double alpha = 1.0;  // 1 = von Neumann
  double value = 0.0;
  double trace_error = 0.0;
};

/// Renyi entropy of a unit-2-norm Schmidt vector: probabilities are the
/// squared coefficients. alpha > 0, alpha != 1. Natural log (nats).
double renyi_entropy(const RVec& schmidt, double alpha);

/// Von Neumann entropy, -sum p log p with p = lambda^2; zero entries
/// contribute zero.
double von_neumann_entropy(const RVec& schmidt);

/// Dispatch: alpha == 1 -> von Neumann, otherwise Renyi.
double spectrum_entropy(const RVec& schmidt, double alpha);

using LayerSpectra = std::vector<RVec>;  // one spectrum per bond

/// Maximum entropy over all bonds of all recorded layers; ties break toward
/// the earliest layer, then the lowest bond. Outputs are 1-based.
EntropyRecord max_entropy(const std::vector<LayerSpectra>& history,
                          double alpha);

}  // namespace gbsim
