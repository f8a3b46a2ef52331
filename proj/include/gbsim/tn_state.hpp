#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "gbsim/block_tensor.hpp"
#include "gbsim/types.hpp"

namespace gbsim {

enum class TnMode { pure_mps, vectorized_mpo };

/// Charge assignment for physical basis states. Only gradings that the
/// initial state makes exact are ever selected; photon-number-conserving
/// gates preserve all of them.
struct Grading {
  enum class Kind { trivial, ket, pair, diff };
  Kind kind = Kind::trivial;
  int modulus = 0;  // 0 = integers; >= 2 = integers mod m; unused for trivial

  ChargeMod charge_mod() const;
  Charge phys_charge(Index ket, Index bra) const;  // bra ignored for `ket`
  const char* name() const;
};

/// Finest grading under which every amplitude vector has a definite charge.
Grading choose_grading_pure(std::span<const Vec> amps);
/// Finest grading under which every local density has a definite charge;
/// loss restricts the candidates to difference-type gradings.
Grading choose_grading_mixed(std::span<const Mat> densities, bool loss_active);

/// Interior bond: singular values per charge sector (kept in sync with the
/// neighboring site tensors' bond legs).
struct BondSectors {
  std::vector<std::pair<Charge, RVec>> sectors;  // sorted by charge
  Index dim() const;
  RVec merged() const;  // sorted nonincreasing (not normalized)
};

/// MPS (pure) or vectorized-MPO (mixed) chain. Site tensors are stored with
/// the right-bond singular values absorbed (B^[j] = Gamma^[j] lambda^[j]),
/// the numerically stable variant of the Gamma-lambda gauge: the chain
/// coefficient is the plain product of the site tensors, lambda holds every
/// interior bond's Schmidt values, and no update ever divides by them.
struct TnState {
  TnMode mode = TnMode::pure_mps;
  int num_modes = 0;
  Index local_dim = 0;  // d (physical legs carry d or d^2 states)
  Index chi_max = 0;    // 0 = unbounded
  double cutoff = 0.0;
  double trace_budget = 1.0;  // relative decay budget before flagging
  Grading grading;

  std::vector<ChargeBlockTensor> gamma;  // legs (left bond, phys, right bond)
  std::vector<BondSectors> lambda;       // interior bonds (num_modes - 1)

  double initial_trace = 1.0;
  double cumulative_discarded_weight = 0.0;
  bool flagged = false;

  Index phys_dim() const {
    return mode == TnMode::pure_mps ? local_dim : local_dim * local_dim;
  }
};

struct TnOptions {
  Index chi_max = 0;  // 0 = unbounded
  double cutoff = 0.0;
  double trace_budget = 1.0;
  std::optional<Grading> grading;  // default: auto-chosen
};

/// Product-state MPS from per-mode amplitude vectors (vacuum for the modes
/// beyond the given list). Bond dimension 1 everywhere.
TnState init_pure(std::span<const Vec> amps, int num_modes, Index local_dim,
                  const TnOptions& opts = {});

/// Vectorized product MPO from per-mode local densities (vacuum beyond the
/// list). Trace = product of local traces.
TnState init_mixed(std::span<const Mat> densities, int num_modes,
                   Index local_dim, const TnOptions& opts = {});

/// Two-site gate at (site, site+1), 0-based. `mode_gate` is the d^2 x d^2
/// Fock gate; in vectorized mode the applied superoperator is
/// gate (x) conj(gate). Theta contraction + truncated SVD + recovery. The
/// discarded weight accumulates on the state.
void apply_two_site_gate(TnState& s, int site, const Mat& mode_gate);

/// Single-site phase shifter exp(i phase n) (number-diagonal, no SVD).
void apply_single_site_phase(TnState& s, int site, double phase);

/// Pure-loss channel with transmissivity eta on one site (vectorized mode
/// only; the grading must be loss-compatible, which init_mixed guarantees
/// when loss_active was set).
void apply_loss_channel(TnState& s, int site, double eta);

/// Pure: squared norm. Vectorized: Tr rho via the per-site identity vector.
double trace(const TnState& s);

/// Relative trace decay 1 - trace/initial_trace; flags the state when the
/// budget is exceeded.
double trace_error(TnState& s);

/// Schmidt spectrum at interior bond k (0-based, 0..M-2): sectors merged,
/// sorted nonincreasing, normalized to unit 2-norm. Computed from the left
/// and right Gram environments of the current state, so it stays exact even
/// after non-unitary (cutoff-truncated or lossy) operations.
RVec schmidt_spectrum(const TnState& s, int bond);

/// All interior bond spectra in one pair of environment sweeps.
std::vector<RVec> all_bond_spectra(const TnState& s);

/// Reduced single-site density matrix (d x d) by full contraction.
Mat reduced_site_density(const TnState& s, int site);

nlohmann::json state_to_json(const TnState& s);
TnState state_from_json(const nlohmann::json& j);

}  // namespace gbsim
