// Command-line front end: single runs, parameter sweeps, oracle
// cross-checks and chi calibration. Exit codes: 0 success, 2 configuration
// error, 3 trace-budget violation in strict mode.
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <thread>

#include "gbsim/entropy.hpp"
#include "gbsim/experiment.hpp"
#include "gbsim/gaussian.hpp"
#include "gbsim/interferometer.hpp"
#include "gbsim/tn_state.hpp"

using namespace gbsim;

namespace {

struct CliOptions {
  std::string config_path, out_path, checkpoint_path, circuit_path;
  std::optional<int> inputs, modes, samples;
  std::optional<double> squeezing, sigma, sigma_beta, sigma_gamma, loss_beta,
      loss_gamma, cutoff, budget;
  std::optional<Index> local_dim, chi;
  std::optional<uint64_t> seed;
  std::optional<std::string> dist;
  std::vector<double> alphas;
  bool verbose_trace = false;
  bool strict = false;
  int threads = 1;
};

void add_common_flags(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--inputs", o.inputs, "number of squeezed inputs N");
  cmd->add_option("--modes", o.modes, "interferometer modes (0 = max(20,4N))");
  cmd->add_option("--squeezing", o.squeezing, "squeezing parameter r");
  cmd->add_option("--dist", o.dist, "phase distribution")
      ->check(CLI::IsMember({"none", "wrapped", "uniform"}));
  cmd->add_option("--sigma", o.sigma, "wrapped Gaussian sigma");
  cmd->add_option("--sigma-beta", o.sigma_beta, "sigma = beta N^gamma");
  cmd->add_option("--sigma-gamma", o.sigma_gamma, "sigma = beta N^gamma");
  cmd->add_option("--loss-beta", o.loss_beta, "<N>_out = beta <N>_in^gamma");
  cmd->add_option("--loss-gamma", o.loss_gamma, "<N>_out = beta <N>_in^gamma");
  cmd->add_option("--local-dim", o.local_dim, "Fock cutoff d");
  cmd->add_option("--chi", o.chi, "max bond dimension (0 = unbounded)");
  cmd->add_option("--cutoff", o.cutoff, "relative SVD truncation cutoff");
  cmd->add_option("--samples", o.samples, "Haar samples per grid point");
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--alpha", o.alphas, "Renyi orders (1 = von Neumann)");
  cmd->add_option("--out", o.out_path, "output path (CSV; summary JSON next to it)");
  cmd->add_flag("--verbose-trace", o.verbose_trace,
                "record per-layer/bond entropies");
  cmd->add_flag("--strict", o.strict, "exit 3 on trace-budget violations");
  cmd->add_option("--threads", o.threads, "worker threads for sweeps");
}

ExperimentConfig build_config(const CliOptions& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw std::invalid_argument("cannot open " + o.config_path);
    nlohmann::json j;
    in >> j;
    c = config_from_json(j);
  }
  if (o.inputs) c.inputs = *o.inputs;
  if (o.modes) c.modes = *o.modes;
  if (o.squeezing) c.squeezing = *o.squeezing;
  if (o.dist) {
    if (*o.dist == "none") c.dist = DistKind::none;
    if (*o.dist == "wrapped") c.dist = DistKind::wrapped_gaussian;
    if (*o.dist == "uniform") c.dist = DistKind::uniform;
  }
  if (o.sigma) c.sigma = *o.sigma;
  if (o.sigma_beta && o.sigma_gamma)
    c.sigma_rule = {{*o.sigma_beta, *o.sigma_gamma}};
  if (o.loss_beta && o.loss_gamma)
    c.loss = LossSpec{*o.loss_beta, *o.loss_gamma};
  if (o.local_dim) c.local_dim = *o.local_dim;
  if (o.chi) c.chi = *o.chi;
  if (o.cutoff) c.svd_cutoff = *o.cutoff;
  if (o.budget) c.trace_error_budget = *o.budget;
  if (o.samples) c.num_haar_samples = *o.samples;
  if (o.seed) c.base_seed = *o.seed;
  if (!o.alphas.empty()) c.alphas = o.alphas;
  if (o.verbose_trace) c.verbose_trace = true;
  c.validate();
  return c;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int cmd_run(const CliOptions& o) {
  ExperimentConfig cfg = build_config(o);
  TnState final_state;
  RunResult r = run_single(cfg, derive_seed(cfg.base_seed, 0, 0), false,
                           o.checkpoint_path.empty() ? nullptr : &final_state);
  r.run_id = "p000_s0000";
  if (r.skipped) {
    std::cerr << "run skipped: " << r.skip_reason << "\n";
    return 2;
  }
  write_or_print(o.out_path, results_to_csv({r}));
  if (o.verbose_trace && !o.out_path.empty()) {
    nlohmann::json jt;
    jt["layer_trace_error"] = r.layer_trace_error;
    jt["layer_bond_entropy"] = r.layer_bond_entropy;
    jt["alphas"] = cfg.alphas;
    std::ofstream(o.out_path + ".trace.json") << jt.dump(2) << "\n";
  }
  if (!o.checkpoint_path.empty())
    std::ofstream(o.checkpoint_path) << state_to_json(final_state).dump()
                                     << "\n";
  std::cerr << "max EE (alpha=" << r.max_records.front().alpha
            << "): " << r.max_records.front().value
            << " at layer " << r.max_records.front().layer << ", bond "
            << r.max_records.front().bond
            << "; trace error " << r.trace_error << (r.valid ? "" : " [FLAGGED]")
            << "\n";
  if (!r.valid && o.strict) return 3;
  return 0;
}

int cmd_sweep(const CliOptions& o) {
  ExperimentConfig cfg = build_config(o);
  SweepResult res = run_sweep(cfg, o.threads);
  write_or_print(o.out_path, results_to_csv(res.runs));
  nlohmann::json summary = res.summary();
  summary["config"] = config_to_json(cfg);
  if (o.out_path.empty()) {
    std::cerr << summary.dump(2) << "\n";
  } else {
    std::ofstream(o.out_path + ".summary.json") << summary.dump(2) << "\n";
  }
  bool any_flagged = false;
  for (const auto& p : res.points) any_flagged |= p.flagged_count > 0;
  if (any_flagged && o.strict) return 3;
  return 0;
}

int cmd_calibrate(const CliOptions& o) {
  ExperimentConfig cfg = build_config(o);
  Index chi = calibrate_chi(cfg, cfg.chi > 0 ? cfg.chi : 16);
  nlohmann::json j;
  j["chi"] = chi;
  j["trace_error_budget"] = cfg.trace_error_budget;
  write_or_print(o.out_path, j.dump(2) + "\n");
  return 0;
}

int cmd_oracle_check(const CliOptions& o) {
  ExperimentConfig cfg = build_config(o);
  uint64_t seed = cfg.base_seed;
  int failures = 0;
  auto report = [&](const char* name, bool ok, double detail) {
    std::printf("[oracle-check] %-34s %s (%.3e)\n", name,
                ok ? "PASS" : "FAIL", detail);
    if (!ok) failures++;
  };

  // probability pipeline: hafnian path vs pure-squeezed shortcut
  {
    int M = 3, N = 2;
    LayeredCircuit circ = sample_haar_layers(M, derive_seed(seed, 1));
    Mat u = compose_circuit(circ);
    RVec r = RVec::Zero(M);
    for (int j = 0; j < N; j++) r[j] = cfg.squeezing;
    GaussianCovariance c = covariance_from_circuit(r, u);
    double worst = 0;
    for (int n1 = 0; n1 <= 2; n1++)
      for (int n2 = 0; n2 <= 1; n2++)
        for (int n3 = 0; n3 <= 1; n3++) {
          PhotonPattern p{{n1, n2, n3}};
          worst = std::max(worst, std::abs(gbs_probability(c, p) -
                                           squeezed_b_probability(r, u, p)));
        }
    report("probability pipeline (A vs B form)", worst < 1e-10, worst);
  }

  // tensor-network evolution vs dense oracle (mixed, sigma = 0.5)
  {
    int M = 3;
    Index d = 4;
    LayeredCircuit circ = sample_haar_layers(M, derive_seed(seed, 2));
    PhaseDistribution dist = PhaseDistribution::wrapped(0.5);
    Mat rho1 = dephase_local(
        density_from_amplitudes(squeezed_vacuum_amplitudes(cfg.squeezing, d)),
        dist);
    std::vector<Mat> locals{rho1, rho1, Mat::Zero(d, d)};
    locals[2](0, 0) = 1.0;
    Mat rho = dense_evolve(locals, circ, d);
    TnOptions opts;
    TnState s = init_mixed(std::vector<Mat>{rho1, rho1}, M, d, opts);
    for (const auto& layer : circ.layers)
      for (const auto& g : layer)
        apply_two_site_gate(s, g.site, fock_beamsplitter_gate(g, d));
    for (int m = 0; m < M; m++)
      apply_single_site_phase(s, m, circ.output_phases[m]);
    double worst = 0;
    for (int cut = 1; cut < M; cut++) {
      RVec dense = dense_operator_schmidt(rho, cut, d, M);
      RVec tn = schmidt_spectrum(s, cut - 1);
      Index n = std::max(dense.size(), tn.size());
      for (Index i = 0; i < n; i++) {
        double a = i < dense.size() ? dense[i] : 0.0;
        double b = i < tn.size() ? tn[i] : 0.0;
        worst = std::max(worst, std::abs(a - b));
      }
    }
    report("MPO spectra vs dense oracle", worst < 1e-8, worst);
    double tr_err = std::abs(trace(s) - rho.trace().real());
    report("MPO trace vs dense oracle", tr_err < 1e-10, tr_err);
  }

  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-network simulator for Gaussian boson sampling with "
               "phase-noisy squeezed inputs"};
  app.require_subcommand(1);
  CliOptions o;

  CLI::App* run = app.add_subcommand("run", "single seeded experiment");
  add_common_flags(run, o);
  run->add_option("--checkpoint", o.checkpoint_path, "write final state JSON");
  CLI::App* sweep = app.add_subcommand("sweep", "grid sweep with averaging");
  add_common_flags(sweep, o);
  CLI::App* cal = app.add_subcommand("calibrate",
                                     "grow chi until the trace budget holds");
  add_common_flags(cal, o);
  CLI::App* oc = app.add_subcommand("oracle-check",
                                    "cross-check engine against dense oracle");
  add_common_flags(oc, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (cal->parsed()) return cmd_calibrate(o);
    if (oc->parsed()) return cmd_oracle_check(o);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
