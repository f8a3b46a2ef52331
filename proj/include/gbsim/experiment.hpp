#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gbsim/entropy.hpp"
#include "gbsim/fock.hpp"
#include "gbsim/types.hpp"

namespace gbsim {

struct LossSpec {
  double beta = 0.0;
  double gamma = 1.0;
};

struct ExperimentConfig {
  int inputs = 2;   // N squeezed inputs
  int modes = 0;    // 0 -> max(20, 4N)
  double squeezing = 0.4;
  DistKind dist = DistKind::none;
  double sigma = 0.0;
  std::optional<std::pair<double, double>> sigma_rule;  // sigma = beta N^gamma
  std::optional<LossSpec> loss;
  Index local_dim = 4;
  Index chi = 64;  // 0 = unbounded
  double svd_cutoff = 0.0;
  double trace_error_budget = 0.01;
  int num_haar_samples = 100;
  uint64_t base_seed = 1;
  std::vector<double> alphas{1.0};
  bool verbose_trace = false;

  // sweep grids (single runs use the scalar fields above)
  std::vector<int> inputs_list;
  std::vector<double> sigma_list;
  std::vector<double> r_list;

  int resolved_modes() const;
  PhaseDistribution distribution(int n_inputs) const;
  void validate() const;  // throws on inconsistent settings
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);

/// eta = beta <N>_in^{gamma-1}, <N>_in = N sinh^2 r. Throws when the scaling
/// demands eta > 1.
double loss_transmissivity(double beta, double gamma, int n_inputs, double r);

/// sigma = beta N^gamma, beta, gamma > 0.
double sigma_of_n(double beta, double gamma, int n_inputs);

struct RunResult {
  std::string run_id;
  uint64_t seed = 0;
  int n_inputs = 0;
  int modes = 0;
  double r = 0.0;
  DistKind dist = DistKind::none;
  double sigma = 0.0;
  std::optional<LossSpec> loss;
  Index local_dim = 0;
  Index chi = 0;
  std::vector<EntropyRecord> max_records;  // one per alpha
  double trace_error = 0.0;     // relative decay 1 - Tr/Tr0
  double absolute_trace = 1.0;  // final Tr (includes cutoff leakage)
  bool valid = true;
  bool skipped = false;  // e.g. loss scaling demanded eta > 1
  std::string skip_reason;
  double wall_ms = 0.0;
  // verbose: per layer, per bond, per alpha entropies and layer trace errors
  std::vector<std::vector<std::vector<double>>> layer_bond_entropy;
  std::vector<double> layer_trace_error;
};

/// One seeded experiment: build inputs, sample the circuit, apply all M
/// layers, record per-layer spectra, return the maxima. Mixed (vectorized)
/// evolution whenever dephasing or loss is active; reported entropies are
/// operator entropies in both modes. `final_state`, when given, receives the
/// evolved chain (for checkpointing).
struct TnState;
RunResult run_single(const ExperimentConfig& cfg, uint64_t haar_seed,
                     bool abort_on_flag = false,
                     TnState* final_state = nullptr);

struct SweepPoint {
  int n_inputs = 0;
  double r = 0.0;
  double sigma = 0.0;  // resolved (rule applied)
  DistKind dist = DistKind::none;
  // per alpha: statistics over valid samples
  std::vector<double> mean, stddev;
  int valid_count = 0, flagged_count = 0, skipped_count = 0;
};

struct SeriesFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

struct SweepResult {
  std::vector<RunResult> runs;     // all samples, deterministic order
  std::vector<SweepPoint> points;  // one per grid point
  nlohmann::json summary() const;  // per-series means/std/counts and fits
};

SweepResult run_sweep(const ExperimentConfig& cfg, int threads = 1);

/// Least-squares fit diagnostics for y vs x.
SeriesFit linear_fit(const std::vector<double>& x,
                     const std::vector<double>& y);

std::string results_to_csv(const std::vector<RunResult>& runs);
std::string csv_header();

/// Grow chi (doubling) until the worst relative trace error over a few
/// calibration seeds fits the budget; returns the first passing chi.
Index calibrate_chi(const ExperimentConfig& cfg, Index chi_start = 16,
                    int calib_samples = 2, Index chi_cap = 4096);

}  // namespace gbsim
