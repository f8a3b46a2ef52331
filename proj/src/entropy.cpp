#include "gbsim/entropy.hpp"

#include <cmath>
#include <stdexcept>

namespace gbsim {

namespace {

void require_normalized(const RVec& schmidt) {
  if (schmidt.size() == 0)
    throw std::invalid_argument("empty Schmidt vector");
  if (std::abs(schmidt.squaredNorm() - 1.0) > 1e-10)
    throw std::invalid_argument("Schmidt vector must have unit 2-norm");
}

}  // namespace

double renyi_entropy(const RVec& schmidt, double alpha) {
  if (!(alpha > 0) || alpha == 1.0)
    throw std::invalid_argument("Renyi entropy needs alpha > 0, alpha != 1");
  require_normalized(schmidt);
  double sum = 0.0;
  for (Index k = 0; k < schmidt.size(); k++) {
    double p = schmidt[k] * schmidt[k];
    if (p > 0) sum += std::pow(p, alpha);
  }
  return std::log(sum) / (1.0 - alpha);
}

double von_neumann_entropy(const RVec& schmidt) {
  require_normalized(schmidt);
  double s = 0.0;
  for (Index k = 0; k < schmidt.size(); k++) {
    double p = schmidt[k] * schmidt[k];
    if (p > 0) s -= p * std::log(p);
  }
  return s;
}

double spectrum_entropy(const RVec& schmidt, double alpha) {
  return alpha == 1.0 ? von_neumann_entropy(schmidt)
                      : renyi_entropy(schmidt, alpha);
}

EntropyRecord max_entropy(const std::vector<LayerSpectra>& history,
                          double alpha) {
  if (history.empty()) throw std::invalid_argument("no layer snapshots");
  EntropyRecord best;
  best.alpha = alpha;
  best.layer = 1;
  best.bond = 1;
  best.value = 0.0;
  bool first = true;
  for (size_t l = 0; l < history.size(); l++) {
    for (size_t b = 0; b < history[l].size(); b++) {
      double v = spectrum_entropy(history[l][b], alpha);
      if (first || v > best.value) {
        best.value = v;
        best.layer = static_cast<int>(l) + 1;
        best.bond = static_cast<int>(b) + 1;
        first = false;
      }
    }
  }
  return best;
}

}  // namespace gbsim
