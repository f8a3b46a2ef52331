#include "gbsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <stdexcept>
#include <thread>

#include "gbsim/gaussian.hpp"
#include "gbsim/interferometer.hpp"
#include "gbsim/tn_state.hpp"

namespace gbsim {

int ExperimentConfig::resolved_modes() const {
  return modes > 0 ? modes : std::max(20, 4 * inputs);
}

PhaseDistribution ExperimentConfig::distribution(int n_inputs) const {
  switch (dist) {
    case DistKind::none:
      return PhaseDistribution::none();
    case DistKind::uniform:
      return PhaseDistribution::uniform();
    case DistKind::wrapped_gaussian: {
      double s = sigma_rule ? sigma_of_n(sigma_rule->first, sigma_rule->second,
                                         n_inputs)
                            : sigma;
      return PhaseDistribution::wrapped(s);
    }
  }
  return PhaseDistribution::none();
}

void ExperimentConfig::validate() const {
  if (inputs < 0) throw std::invalid_argument("inputs must be >= 0");
  if (inputs > resolved_modes())
    throw std::invalid_argument("inputs must be <= modes");
  if (squeezing < 0) throw std::invalid_argument("squeezing must be >= 0");
  if (local_dim < 1) throw std::invalid_argument("local_dim must be >= 1");
  if (chi < 0) throw std::invalid_argument("chi must be >= 0");
  if (svd_cutoff < 0) throw std::invalid_argument("cutoff must be >= 0");
  if (!(trace_error_budget > 0 && trace_error_budget < 1))
    throw std::invalid_argument("trace_error_budget must be in (0,1)");
  if (num_haar_samples < 1)
    throw std::invalid_argument("samples must be >= 1");
  if (alphas.empty()) throw std::invalid_argument("need at least one alpha");
  for (double a : alphas)
    if (!(a > 0)) throw std::invalid_argument("alpha must be > 0");
  if (dist == DistKind::wrapped_gaussian && !sigma_rule && sigma < 0)
    throw std::invalid_argument("sigma must be >= 0");
  if (loss && !(loss->beta > 0))
    throw std::invalid_argument("loss beta must be > 0");
  if (sigma_rule && (!(sigma_rule->first > 0) || !(sigma_rule->second > 0)))
    throw std::invalid_argument("sigma rule needs beta, gamma > 0");
}

namespace {

const char* kConfigKeys[] = {
    "inputs",     "modes",       "squeezing",   "dist",
    "sigma",      "sigma_beta",  "sigma_gamma", "loss_beta",
    "loss_gamma", "local_dim",   "chi",         "cutoff",
    "trace_error_budget",        "samples",     "seed",
    "alpha",      "verbose_trace",              "inputs_list",
    "sigma_list", "r_list"};

DistKind dist_from_string(const std::string& s) {
  if (s == "none") return DistKind::none;
  if (s == "wrapped") return DistKind::wrapped_gaussian;
  if (s == "uniform") return DistKind::uniform;
  throw std::invalid_argument("unknown dist: " + s);
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kConfigKeys) known = known || it.key() == k;
    if (!known)
      throw std::invalid_argument("unknown config key: " + it.key());
  }
  ExperimentConfig c;
  if (j.contains("inputs")) c.inputs = j["inputs"].get<int>();
  if (j.contains("modes")) {
    if (j["modes"].is_string()) {
      std::string m = j["modes"].get<std::string>();
      if (m != "max(20,4N)" && m != "auto")
        throw std::invalid_argument("modes must be an integer or max(20,4N)");
      c.modes = 0;
    } else {
      c.modes = j["modes"].get<int>();
    }
  }
  if (j.contains("squeezing")) c.squeezing = j["squeezing"].get<double>();
  if (j.contains("dist"))
    c.dist = dist_from_string(j["dist"].get<std::string>());
  if (j.contains("sigma")) c.sigma = j["sigma"].get<double>();
  if (j.contains("sigma_beta") != j.contains("sigma_gamma"))
    throw std::invalid_argument("sigma_beta and sigma_gamma come together");
  if (j.contains("sigma_beta"))
    c.sigma_rule = {j["sigma_beta"].get<double>(),
                    j["sigma_gamma"].get<double>()};
  if (j.contains("loss_beta") != j.contains("loss_gamma"))
    throw std::invalid_argument("loss_beta and loss_gamma come together");
  if (j.contains("loss_beta"))
    c.loss = LossSpec{j["loss_beta"].get<double>(),
                      j["loss_gamma"].get<double>()};
  if (j.contains("local_dim")) c.local_dim = j["local_dim"].get<Index>();
  if (j.contains("chi")) c.chi = j["chi"].get<Index>();
  if (j.contains("cutoff")) c.svd_cutoff = j["cutoff"].get<double>();
  if (j.contains("trace_error_budget"))
    c.trace_error_budget = j["trace_error_budget"].get<double>();
  if (j.contains("samples")) c.num_haar_samples = j["samples"].get<int>();
  if (j.contains("seed")) c.base_seed = j["seed"].get<uint64_t>();
  if (j.contains("alpha")) {
    if (j["alpha"].is_array())
      c.alphas = j["alpha"].get<std::vector<double>>();
    else
      c.alphas = {j["alpha"].get<double>()};
  }
  if (j.contains("verbose_trace"))
    c.verbose_trace = j["verbose_trace"].get<bool>();
  if (j.contains("inputs_list"))
    c.inputs_list = j["inputs_list"].get<std::vector<int>>();
  if (j.contains("sigma_list"))
    c.sigma_list = j["sigma_list"].get<std::vector<double>>();
  if (j.contains("r_list")) c.r_list = j["r_list"].get<std::vector<double>>();
  c.validate();
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["inputs"] = c.inputs;
  j["modes"] = c.modes > 0 ? nlohmann::json(c.modes)
                           : nlohmann::json("max(20,4N)");
  j["squeezing"] = c.squeezing;
  j["dist"] = dist_name(c.dist);
  j["sigma"] = c.sigma;
  if (c.sigma_rule) {
    j["sigma_beta"] = c.sigma_rule->first;
    j["sigma_gamma"] = c.sigma_rule->second;
  }
  if (c.loss) {
    j["loss_beta"] = c.loss->beta;
    j["loss_gamma"] = c.loss->gamma;
  }
  j["local_dim"] = c.local_dim;
  j["chi"] = c.chi;
  j["cutoff"] = c.svd_cutoff;
  j["trace_error_budget"] = c.trace_error_budget;
  j["samples"] = c.num_haar_samples;
  j["seed"] = c.base_seed;
  j["alpha"] = c.alphas;
  j["verbose_trace"] = c.verbose_trace;
  if (!c.inputs_list.empty()) j["inputs_list"] = c.inputs_list;
  if (!c.sigma_list.empty()) j["sigma_list"] = c.sigma_list;
  if (!c.r_list.empty()) j["r_list"] = c.r_list;
  return j;
}

double loss_transmissivity(double beta, double gamma, int n_inputs,
                           double r) {
  if (!(beta > 0)) throw std::invalid_argument("loss beta must be > 0");
  double n_in = n_inputs * std::sinh(r) * std::sinh(r);
  if (!(n_in > 0))
    throw std::invalid_argument("loss scaling needs <N>_in > 0");
  double eta = beta * std::pow(n_in, gamma - 1.0);
  if (eta > 1.0 + 1e-12)
    throw std::domain_error("loss scaling yields eta > 1 for this system");
  return std::min(eta, 1.0);
}

double sigma_of_n(double beta, double gamma, int n_inputs) {
  if (!(beta > 0) || !(gamma > 0))
    throw std::invalid_argument("sigma rule needs beta, gamma > 0");
  return beta * std::pow(static_cast<double>(n_inputs), gamma);
}

RunResult run_single(const ExperimentConfig& cfg, uint64_t haar_seed,
                     bool abort_on_flag, TnState* final_state) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  const int N = cfg.inputs, M = cfg.resolved_modes();
  const Index d = cfg.local_dim;
  PhaseDistribution dist = cfg.distribution(N);

  RunResult res;
  res.seed = haar_seed;
  res.n_inputs = N;
  res.modes = M;
  res.r = cfg.squeezing;
  res.dist = dist.kind;
  res.sigma = dist.kind == DistKind::wrapped_gaussian ? dist.sigma : 0.0;
  res.loss = cfg.loss;
  res.local_dim = d;
  res.chi = cfg.chi;

  double eta = 1.0;
  if (cfg.loss && N > 0) {
    try {
      eta = loss_transmissivity(cfg.loss->beta, cfg.loss->gamma, N,
                                cfg.squeezing);
    } catch (const std::domain_error& e) {
      res.skipped = true;
      res.valid = false;
      res.skip_reason = e.what();
      return res;
    }
  }
  const bool loss_active = cfg.loss.has_value() && eta < 1.0 - 1e-15;
  const bool dephasing_active =
      dist.kind == DistKind::uniform ||
      (dist.kind == DistKind::wrapped_gaussian && dist.sigma > 0);
  const bool pure_path = !loss_active && !dephasing_active;

  Vec amp = squeezed_vacuum_amplitudes(cfg.squeezing, d);
  LayeredCircuit circuit = sample_haar_layers(M, haar_seed);

  TnOptions opts;
  opts.chi_max = cfg.chi;
  opts.cutoff = cfg.svd_cutoff;
  opts.trace_budget = cfg.trace_error_budget;

  TnState state;
  if (pure_path) {
    std::vector<Vec> amps(N, amp);
    state = init_pure(amps, M, d, opts);
  } else {
    Mat rho = dephase_local(density_from_amplitudes(amp), dist);
    std::vector<Mat> locals(N, rho);
    if (!opts.grading) {
      opts.grading = choose_grading_mixed(std::span<const Mat>(locals),
                                          loss_active);
    }
    state = init_mixed(locals, M, d, opts);
    if (loss_active)
      for (int j = 0; j < N; j++) apply_loss_channel(state, j, eta);
  }

  std::vector<LayerSpectra> history;
  history.reserve(M);
  for (int l = 0; l < M; l++) {
    for (const auto& g : circuit.layers[l])
      apply_two_site_gate(state, g.site,
                          fock_beamsplitter_gate(g, d));
    LayerSpectra spectra;
    spectra.reserve(M - 1);
    for (int b = 0; b < M - 1; b++) spectra.push_back(schmidt_spectrum(state, b));
    history.push_back(std::move(spectra));
    double terr = trace_error(state);
    res.layer_trace_error.push_back(terr);
    if (state.flagged && abort_on_flag) break;
  }
  if (!state.flagged || !abort_on_flag) {
    for (int m = 0; m < M; m++)
      apply_single_site_phase(state, m, circuit.output_phases[m]);
  }

  const double factor = pure_path ? 2.0 : 1.0;  // operator EE of a pure state
  for (double alpha : cfg.alphas) {
    EntropyRecord rec = max_entropy(history, alpha);
    rec.value *= factor;
    rec.trace_error = res.layer_trace_error.back();
    res.max_records.push_back(rec);
  }
  if (cfg.verbose_trace) {
    for (const auto& spectra : history) {
      std::vector<std::vector<double>> per_bond;
      for (const auto& sp : spectra) {
        std::vector<double> per_alpha;
        for (double alpha : cfg.alphas)
          per_alpha.push_back(factor * spectrum_entropy(sp, alpha));
        per_bond.push_back(std::move(per_alpha));
      }
      res.layer_bond_entropy.push_back(std::move(per_bond));
    }
  }
  res.trace_error = res.layer_trace_error.back();
  res.absolute_trace = trace(state);
  res.valid = !state.flagged;
  if (final_state) *final_state = std::move(state);
  auto t1 = std::chrono::steady_clock::now();
  res.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return res;
}

SeriesFit linear_fit(const std::vector<double>& x,
                     const std::vector<double>& y) {
  SeriesFit f;
  const size_t n = x.size();
  if (n < 2 || y.size() != n) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; i++) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) return f;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0, ss_tot = 0, ybar = sy / n;
  for (size_t i = 0; i < n; i++) {
    double e = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += e * e;
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  f.r2 = ss_tot < 1e-300 ? (ss_res < 1e-300 ? 1.0 : 0.0) : 1.0 - ss_res / ss_tot;
  return f;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string csv_header() {
  return "run_id,seed,N,M,r,dist,sigma,loss_beta,loss_gamma,d,chi,alpha,"
         "max_entropy,argmax_layer,argmax_bond,trace_error,valid,wall_ms";
}

std::string results_to_csv(const std::vector<RunResult>& runs) {
  std::string out = csv_header() + "\n";
  for (const auto& r : runs) {
    std::string sigma_col;
    if (r.dist == DistKind::wrapped_gaussian)
      sigma_col = fmt_double(r.sigma);
    else if (r.dist == DistKind::uniform)
      sigma_col = "inf";
    else
      sigma_col = "0";
    std::string prefix = r.run_id + "," + std::to_string(r.seed) + "," +
                         std::to_string(r.n_inputs) + "," +
                         std::to_string(r.modes) + "," + fmt_double(r.r) +
                         "," + dist_name(r.dist) + "," + sigma_col + "," +
                         (r.loss ? fmt_double(r.loss->beta) : "") + "," +
                         (r.loss ? fmt_double(r.loss->gamma) : "") + "," +
                         std::to_string(r.local_dim) + "," +
                         std::to_string(r.chi);
    if (r.skipped) {
      out += prefix + ",,,,,," + "skipped,0\n";
      continue;
    }
    for (const auto& rec : r.max_records) {
      out += prefix + "," + fmt_double(rec.alpha) + "," +
             fmt_double(rec.value) + "," + std::to_string(rec.layer) + "," +
             std::to_string(rec.bond) + "," + fmt_double(r.trace_error) +
             "," + (r.valid ? "1" : "0") + "," + fmt_double(r.wall_ms) + "\n";
    }
  }
  return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  std::vector<int> ns = cfg.inputs_list.empty()
                            ? std::vector<int>{cfg.inputs}
                            : cfg.inputs_list;
  std::vector<double> rs =
      cfg.r_list.empty() ? std::vector<double>{cfg.squeezing} : cfg.r_list;
  std::vector<double> sigmas = cfg.sigma_list.empty()
                                   ? std::vector<double>{cfg.sigma}
                                   : cfg.sigma_list;
  if (cfg.dist != DistKind::wrapped_gaussian || cfg.sigma_rule)
    sigmas = {cfg.sigma};

  struct Task {
    size_t point;
    int sample;
    ExperimentConfig cfg;
    uint64_t seed;
    std::string run_id;
  };
  std::vector<Task> tasks;
  std::vector<SweepPoint> points;
  size_t pt = 0;
  for (double r : rs)
    for (double sg : sigmas)
      for (int n : ns) {
        ExperimentConfig c = cfg;
        c.inputs = n;
        c.squeezing = r;
        c.sigma = sg;
        c.inputs_list.clear();
        c.sigma_list.clear();
        c.r_list.clear();
        SweepPoint p;
        p.n_inputs = n;
        p.r = r;
        p.dist = cfg.dist;
        p.sigma = cfg.distribution(n).sigma;
        points.push_back(p);
        for (int s = 0; s < cfg.num_haar_samples; s++) {
          char id[48];
          std::snprintf(id, sizeof(id), "p%03zu_s%04d", pt, s);
          tasks.push_back(
              {pt, s, c, derive_seed(cfg.base_seed, pt, s), id});
        }
        pt++;
      }

  std::vector<RunResult> results(tasks.size());
  threads = std::max(1, threads);
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      RunResult r = run_single(tasks[i].cfg, tasks[i].seed);
      r.run_id = tasks[i].run_id;
      results[i] = std::move(r);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; t++) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Deterministic aggregation in task order (sorted by point, then sample).
  for (size_t i = 0; i < tasks.size(); i++) {
    SweepPoint& p = points[tasks[i].point];
    const RunResult& r = results[i];
    if (p.mean.empty()) {
      p.mean.assign(cfg.alphas.size(), 0.0);
      p.stddev.assign(cfg.alphas.size(), 0.0);
    }
    if (r.skipped) {
      p.skipped_count++;
      continue;
    }
    if (!r.valid) {
      p.flagged_count++;
      continue;
    }
    p.valid_count++;
    for (size_t a = 0; a < cfg.alphas.size(); a++)
      p.mean[a] += r.max_records[a].value;
  }
  for (auto& p : points)
    if (p.valid_count > 0)
      for (auto& m : p.mean) m /= p.valid_count;
  for (size_t i = 0; i < tasks.size(); i++) {
    SweepPoint& p = points[tasks[i].point];
    const RunResult& r = results[i];
    if (r.skipped || !r.valid) continue;
    for (size_t a = 0; a < cfg.alphas.size(); a++) {
      double e = r.max_records[a].value - p.mean[a];
      p.stddev[a] += e * e;
    }
  }
  for (auto& p : points)
    if (p.valid_count > 1)
      for (auto& sdev : p.stddev) sdev = std::sqrt(sdev / (p.valid_count - 1));

  SweepResult out;
  out.runs = std::move(results);
  out.points = std::move(points);
  return out;
}

nlohmann::json SweepResult::summary() const {
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& p : points) {
    nlohmann::json jp;
    jp["N"] = p.n_inputs;
    jp["r"] = p.r;
    jp["dist"] = dist_name(p.dist);
    jp["sigma"] = p.sigma;
    jp["mean"] = p.mean;
    jp["std"] = p.stddev;
    jp["valid"] = p.valid_count;
    jp["flagged"] = p.flagged_count;
    jp["skipped"] = p.skipped_count;
    j["points"].push_back(jp);
  }
  // series: fixed (r, sigma), EE vs N, per alpha
  std::map<std::pair<double, double>, std::vector<const SweepPoint*>> series;
  for (const auto& p : points) series[{p.r, p.sigma}].push_back(&p);
  j["series"] = nlohmann::json::array();
  for (const auto& [key, pts] : series) {
    size_t n_alphas = pts.front()->mean.size();
    nlohmann::json js;
    js["r"] = key.first;
    js["sigma"] = key.second;
    js["fits"] = nlohmann::json::array();
    for (size_t a = 0; a < n_alphas; a++) {
      std::vector<double> x, y;
      for (const auto* p : pts)
        if (p->valid_count > 0) {
          x.push_back(p->n_inputs);
          y.push_back(p->mean[a]);
        }
      SeriesFit f = linear_fit(x, y);
      js["fits"].push_back({{"alpha_index", a},
                            {"slope", f.slope},
                            {"intercept", f.intercept},
                            {"r2", f.r2},
                            {"points", x.size()}});
    }
    j["series"].push_back(js);
  }
  return j;
}

Index calibrate_chi(const ExperimentConfig& cfg, Index chi_start,
                    int calib_samples, Index chi_cap) {
  ExperimentConfig c = cfg;
  for (Index chi = chi_start; chi <= chi_cap; chi *= 2) {
    c.chi = chi;
    bool ok = true;
    for (int s = 0; s < calib_samples && ok; s++) {
      RunResult r =
          run_single(c, derive_seed(cfg.base_seed, 0xCA11B, s), true);
      ok = ok && r.valid && !r.skipped;
    }
    if (ok) return chi;
  }
  throw std::runtime_error("calibration failed to meet the budget by chi cap");
}

}  // namespace gbsim
