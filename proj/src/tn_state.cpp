#include "gbsim/tn_state.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <json.hpp>
#include <stdexcept>

namespace gbsim {

namespace {
constexpr double kLambdaFloor = 1e-14;
constexpr Index kUnboundedChi = std::numeric_limits<Index>::max() / 4;
}  // namespace

ChargeMod Grading::charge_mod() const {
  switch (kind) {
    case Kind::trivial: return {1, 1};
    case Kind::ket: return {modulus, 1};
    case Kind::pair: return {modulus, modulus};
    case Kind::diff: return {modulus, 1};
  }
  return {1, 1};
}

Charge Grading::phys_charge(Index ket, Index bra) const {
  Charge c{};
  switch (kind) {
    case Kind::trivial: break;
    case Kind::ket: c = {static_cast<int>(ket), 0}; break;
    case Kind::pair: c = {static_cast<int>(ket), static_cast<int>(bra)}; break;
    case Kind::diff: c = {static_cast<int>(ket - bra), 0}; break;
  }
  return reduce(c, charge_mod());
}

const char* Grading::name() const {
  switch (kind) {
    case Kind::trivial: return "trivial";
    case Kind::ket: return modulus == 0 ? "ket" : "ket_parity";
    case Kind::pair: return modulus == 0 ? "pair" : "pair_parity";
    case Kind::diff: return modulus == 0 ? "diff" : "diff_parity";
  }
  return "?";
}

namespace {

/// Physical leg layout under a grading: states grouped into charge sectors.
struct PhysSpace {
  IndexSpec spec;  // flow +1
  std::vector<std::pair<int, Index>> state_slot;   // state -> (sector, offset)
  std::vector<std::vector<Index>> sector_states;   // sector -> states
};

PhysSpace make_phys_space(Index d, TnMode mode, const Grading& g) {
  const Index P = mode == TnMode::pure_mps ? d : d * d;
  std::map<Charge, std::vector<Index>> by_charge;
  for (Index p = 0; p < P; p++) {
    Index ket = mode == TnMode::pure_mps ? p : p / d;
    Index bra = mode == TnMode::pure_mps ? 0 : p % d;
    by_charge[g.phys_charge(ket, bra)].push_back(p);
  }
  PhysSpace ph;
  ph.spec.flow = +1;
  ph.state_slot.resize(P);
  for (auto& [q, states] : by_charge) {
    int sec = static_cast<int>(ph.spec.sectors.size());
    ph.spec.sectors.push_back({q, static_cast<Index>(states.size())});
    for (size_t i = 0; i < states.size(); i++)
      ph.state_slot[states[i]] = {sec, static_cast<Index>(i)};
    ph.sector_states.push_back(states);
  }
  return ph;
}

PhysSpace make_phys_space(const TnState& s) {
  return make_phys_space(s.local_dim, s.mode, s.grading);
}

/// Definite charge of a set of populated (ket,bra) pairs, if one exists.
bool definite_charge(const std::vector<std::pair<Index, Index>>& support,
                     const Grading& g, Charge& out) {
  bool first = true;
  for (auto [ket, bra] : support) {
    Charge q = g.phys_charge(ket, bra);
    if (first) {
      out = q;
      first = false;
    } else if (!(q == out)) {
      return false;
    }
  }
  return true;
}

std::vector<std::pair<Index, Index>> vec_support(const Vec& v) {
  double mx = v.cwiseAbs().maxCoeff();
  std::vector<std::pair<Index, Index>> sup;
  for (Index n = 0; n < v.size(); n++)
    if (std::abs(v[n]) > 1e-14 * mx) sup.push_back({n, 0});
  return sup;
}

std::vector<std::pair<Index, Index>> mat_support(const Mat& m) {
  double mx = m.cwiseAbs().maxCoeff();
  std::vector<std::pair<Index, Index>> sup;
  for (Index i = 0; i < m.rows(); i++)
    for (Index j = 0; j < m.cols(); j++)
      if (std::abs(m(i, j)) > 1e-14 * mx) sup.push_back({i, j});
  return sup;
}

IndexSpec boundary_spec(Charge q, int flow) { return {flow, {{q, 1}}}; }

}  // namespace

Grading choose_grading_pure(std::span<const Vec> amps) {
  std::vector<std::vector<std::pair<Index, Index>>> sup;
  for (const auto& a : amps) sup.push_back(vec_support(a));
  for (Grading g : {Grading{Grading::Kind::ket, 0},
                    Grading{Grading::Kind::ket, 2}}) {
    bool ok = true;
    Charge q;
    for (const auto& s : sup) ok = ok && definite_charge(s, g, q);
    if (ok) return g;
  }
  return {Grading::Kind::trivial, 0};
}

Grading choose_grading_mixed(std::span<const Mat> densities,
                             bool loss_active) {
  std::vector<std::vector<std::pair<Index, Index>>> sup;
  for (const auto& m : densities) sup.push_back(mat_support(m));
  std::vector<Grading> candidates;
  if (loss_active) {
    candidates = {{Grading::Kind::diff, 0}, {Grading::Kind::diff, 2}};
  } else {
    candidates = {{Grading::Kind::pair, 0},
                  {Grading::Kind::diff, 0},
                  {Grading::Kind::pair, 2},
                  {Grading::Kind::diff, 2}};
  }
  for (const Grading& g : candidates) {
    bool ok = true;
    Charge q;
    for (const auto& s : sup) ok = ok && definite_charge(s, g, q);
    if (ok) return g;
  }
  return {Grading::Kind::trivial, 0};
}

Index BondSectors::dim() const {
  Index n = 0;
  for (const auto& [q, v] : sectors) n += v.size();
  return n;
}

RVec BondSectors::merged() const {
  std::vector<double> all;
  for (const auto& [q, v] : sectors)
    for (Index i = 0; i < v.size(); i++) all.push_back(v[i]);
  std::sort(all.begin(), all.end(), std::greater<>());
  return Eigen::Map<RVec>(all.data(), static_cast<Index>(all.size()));
}

namespace {

/// Shared product-state construction from per-site vectors over physical
/// states (amplitudes for MPS, flattened densities for the vectorized MPO).
TnState init_product(std::vector<Vec> site_vectors, int num_modes,
                     Index local_dim, TnMode mode, Grading grading,
                     const TnOptions& opts, double initial_trace) {
  TnState s;
  s.mode = mode;
  s.num_modes = num_modes;
  s.local_dim = local_dim;
  s.chi_max = opts.chi_max;
  s.cutoff = opts.cutoff;
  s.trace_budget = opts.trace_budget;
  s.grading = grading;
  s.initial_trace = initial_trace;
  PhysSpace ph = make_phys_space(local_dim, mode, grading);

  // Definite per-site charges; cumulative charges label the bonds.
  ChargeMod cm = grading.charge_mod();
  std::vector<Charge> site_charge(num_modes), cumulative(num_modes + 1);
  for (int j = 0; j < num_modes; j++) {
    const Vec& v = site_vectors[j];
    int sec = -1;
    double mx = v.cwiseAbs().maxCoeff();
    for (Index p = 0; p < v.size(); p++) {
      if (std::abs(v[p]) <= 1e-14 * mx) continue;
      int ps = ph.state_slot[p].first;
      if (sec == -1) sec = ps;
      if (ps != sec)
        throw std::invalid_argument(
            "site vector has no definite charge under the chosen grading");
    }
    if (sec == -1) throw std::invalid_argument("zero site vector");
    site_charge[j] = ph.spec.sectors[sec].charge;
    cumulative[j + 1] = add(cumulative[j], site_charge[j], cm);
  }

  for (int j = 0; j < num_modes; j++) {
    int sec = ph.spec.find(site_charge[j]);
    std::vector<IndexSpec> specs{boundary_spec(cumulative[j], +1), ph.spec,
                                 boundary_spec(cumulative[j + 1], -1)};
    ChargeBlockTensor g(std::move(specs), Charge{}, cm);
    Block& b = g.block({0, sec, 0});
    const auto& states = ph.sector_states[sec];
    for (size_t i = 0; i < states.size(); i++)
      b.data[static_cast<Index>(i)] = site_vectors[j][states[i]];
    s.gamma.push_back(std::move(g));
    if (j + 1 < num_modes) {
      BondSectors bs;
      bs.sectors.push_back({cumulative[j + 1], RVec::Ones(1)});
      s.lambda.push_back(std::move(bs));
    }
  }
  return s;
}

}  // namespace

TnState init_pure(std::span<const Vec> amps, int num_modes, Index local_dim,
                  const TnOptions& opts) {
  if (num_modes < 1 || static_cast<int>(amps.size()) > num_modes)
    throw std::invalid_argument("init_pure: bad mode count");
  std::vector<Vec> vecs;
  double norm2 = 1.0;
  for (int j = 0; j < num_modes; j++) {
    Vec v = j < static_cast<int>(amps.size())
                ? amps[j]
                : Vec(Vec::Unit(local_dim, 0));
    if (v.size() != local_dim)
      throw std::invalid_argument("init_pure: amplitude dimension mismatch");
    norm2 *= v.squaredNorm();
    vecs.push_back(std::move(v));
  }
  Grading g = opts.grading ? *opts.grading
                           : choose_grading_pure(std::span<const Vec>(vecs));
  return init_product(std::move(vecs), num_modes, local_dim, TnMode::pure_mps,
                      g, opts, norm2);
}

TnState init_mixed(std::span<const Mat> densities, int num_modes,
                   Index local_dim, const TnOptions& opts) {
  if (num_modes < 1 || static_cast<int>(densities.size()) > num_modes)
    throw std::invalid_argument("init_mixed: bad mode count");
  std::vector<Mat> locals;
  std::vector<Vec> vecs;
  double tr = 1.0;
  for (int j = 0; j < num_modes; j++) {
    Mat m;
    if (j < static_cast<int>(densities.size()))
      m = densities[j];
    else {
      m = Mat::Zero(local_dim, local_dim);
      m(0, 0) = 1.0;
    }
    if (m.rows() != local_dim || m.cols() != local_dim)
      throw std::invalid_argument("init_mixed: density dimension mismatch");
    tr *= m.trace().real();
    Vec v(local_dim * local_dim);
    for (Index ket = 0; ket < local_dim; ket++)
      for (Index bra = 0; bra < local_dim; bra++)
        v[ket * local_dim + bra] = m(ket, bra);
    locals.push_back(std::move(m));
    vecs.push_back(std::move(v));
  }
  Grading g = opts.grading
                  ? *opts.grading
                  : choose_grading_mixed(std::span<const Mat>(locals), false);
  return init_product(std::move(vecs), num_modes, local_dim,
                      TnMode::vectorized_mpo, g, opts, tr);
}

namespace {

/// Multiply (or divide, with the dropped-value guard) bond singular values
/// into one leg of a site tensor.
void scale_leg(ChargeBlockTensor& t, int leg, const BondSectors& bond,
               bool inverse) {
  double lam_max = 0;
  for (const auto& [q, v] : bond.sectors)
    lam_max = std::max(lam_max, v.size() ? v.maxCoeff() : 0.0);
  const double floor = kLambdaFloor * lam_max;
  for (auto& [key, blk] : t.blocks()) {
    Charge q = t.spec(leg).sectors[key[leg]].charge;
    const RVec* lam = nullptr;
    for (const auto& [bq, v] : bond.sectors)
      if (bq == q) lam = &v;
    if (!lam) throw std::logic_error("bond sector missing for leg charge");
    Index stride = 1;
    for (int i = t.rank() - 1; i > leg; i--) stride *= blk.shape[i];
    const Index ext = blk.shape[leg];
    const Index outer = blk.size() / (stride * ext);
    for (Index o = 0; o < outer; o++)
      for (Index e = 0; e < ext; e++) {
        double f = (*lam)[e];
        double factor = inverse ? (f > floor ? 1.0 / f : 0.0) : f;
        blk.data.segment(o * ext * stride + e * stride, stride) *= factor;
      }
  }
}

ChargeBlockTensor build_gate_tensor(const Mat& mode_gate, const TnState& s,
                                    const PhysSpace& ph) {
  const Index d = s.local_dim;
  if (mode_gate.rows() != d * d || mode_gate.cols() != d * d)
    throw std::invalid_argument("two-site gate must be d^2 x d^2");
  ChargeMod cm = s.grading.charge_mod();
  IndexSpec in = ph.spec;
  in.flow = -1;
  ChargeBlockTensor g({ph.spec, ph.spec, in, in}, Charge{}, cm);

  struct Nz {
    Index pout, pin;
    cplx v;
  };
  std::vector<Nz> nz;
  for (Index po = 0; po < d * d; po++)
    for (Index pi = 0; pi < d * d; pi++)
      if (mode_gate(po, pi) != cplx(0.0)) nz.push_back({po, pi, mode_gate(po, pi)});

  auto put = [&](Index p1o, Index p2o, Index p1i, Index p2i, cplx val) {
    auto [s1, o1] = ph.state_slot[p1o];
    auto [s2, o2] = ph.state_slot[p2o];
    auto [s3, o3] = ph.state_slot[p1i];
    auto [s4, o4] = ph.state_slot[p2i];
    Block& b = g.block({s1, s2, s3, s4});
    Index off = ((o1 * b.shape[1] + o2) * b.shape[2] + o3) * b.shape[3] + o4;
    b.data[off] += val;
  };

  if (s.mode == TnMode::pure_mps) {
    for (const auto& z : nz)
      put(z.pout / d, z.pout % d, z.pin / d, z.pin % d, z.v);
  } else {
    // superoperator gate (x) conj(gate) on (ket, bra) pairs
    for (const auto& zk : nz)
      for (const auto& zb : nz) {
        Index m1k = zk.pout / d, m2k = zk.pout % d;
        Index n1k = zk.pin / d, n2k = zk.pin % d;
        Index m1b = zb.pout / d, m2b = zb.pout % d;
        Index n1b = zb.pin / d, n2b = zb.pin % d;
        put(m1k * d + m1b, m2k * d + m2b, n1k * d + n1b, n2k * d + n2b,
            zk.v * std::conj(zb.v));
      }
  }
  g.prune(0.0);
  return g;
}

bool gate_fixes_vacuum(const Mat& g) {
  const Index n = g.rows();
  if (std::abs(g(0, 0) - 1.0) > 1e-15) return false;
  for (Index i = 1; i < n; i++)
    if (std::abs(g(i, 0)) > 1e-15 || std::abs(g(0, i)) > 1e-15) return false;
  return true;
}

bool site_is_trivial_vacuum(const TnState& s, int j, const PhysSpace& ph) {
  const ChargeBlockTensor& g = s.gamma[j];
  if (g.blocks().size() != 1) return false;
  const auto& [key, blk] = *g.blocks().begin();
  if (g.spec(0).sectors[key[0]].extent != 1 ||
      g.spec(2).sectors[key[2]].extent != 1)
    return false;
  auto [vac_sec, vac_off] = ph.state_slot[0];
  if (key[1] != vac_sec) return false;
  for (Index i = 0; i < blk.size(); i++) {
    cplx want = i == vac_off ? cplx(1.0) : cplx(0.0);
    if (std::abs(blk.data[i] - want) > 1e-15) return false;
  }
  return true;
}

bool bond_is_trivial(const TnState& s, int bond) {
  if (bond < 0 || bond >= static_cast<int>(s.lambda.size())) return true;
  const BondSectors& b = s.lambda[bond];
  return b.sectors.size() == 1 && b.sectors[0].second.size() == 1 &&
         std::abs(b.sectors[0].second[0] - 1.0) < 1e-15;
}

}  // namespace

void apply_two_site_gate(TnState& s, int site, const Mat& mode_gate) {
  if (site < 0 || site + 1 >= s.num_modes)
    throw std::invalid_argument("apply_two_site_gate: site out of range");
  PhysSpace ph = make_phys_space(s);

  // Gates that fix the vacuum act trivially outside the entangled region.
  if (gate_fixes_vacuum(mode_gate) && bond_is_trivial(s, site - 1) &&
      bond_is_trivial(s, site) && bond_is_trivial(s, site + 1) &&
      site_is_trivial_vacuum(s, site, ph) &&
      site_is_trivial_vacuum(s, site + 1, ph))
    return;

  ChargeBlockTensor gate = build_gate_tensor(mode_gate, s, ph);

  // Site tensors carry the right-bond weights (B = Gamma lambda), so the
  // two-site block is just their contraction; only the left neighbor's
  // weights must be multiplied in before the SVD. The new left tensor is
  // recovered as theta_tilde * V, which avoids dividing by singular values.
  ChargeBlockTensor t = contract(s.gamma[site], s.gamma[site + 1], {{2, 0}});
  ChargeBlockTensor theta_tilde = contract(gate, t, {{2, 1}, {3, 2}});
  theta_tilde = transposed(theta_tilde, {2, 0, 1, 3});
  ChargeBlockTensor theta = theta_tilde;
  if (site - 1 >= 0) scale_leg(theta, 0, s.lambda[site - 1], false);

  Index chi = s.chi_max > 0 ? s.chi_max : kUnboundedChi;
  SvdResult svd = truncated_svd(theta, 2, chi, s.cutoff);
  s.cumulative_discarded_weight += svd.discarded_weight;

  ChargeBlockTensor v = conjugated(svd.right);
  s.gamma[site] = contract(theta_tilde, v, {{2, 1}, {3, 2}});
  s.gamma[site + 1] = std::move(svd.right);
  BondSectors nb;
  nb.sectors = std::move(svd.singular_values);
  s.lambda[site] = std::move(nb);
}

void apply_single_site_phase(TnState& s, int site, double phase) {
  if (site < 0 || site >= s.num_modes)
    throw std::invalid_argument("apply_single_site_phase: site out of range");
  PhysSpace ph = make_phys_space(s);
  const Index d = s.local_dim;
  for (auto& [key, blk] : s.gamma[site].blocks()) {
    const auto& states = ph.sector_states[key[1]];
    Index stride = blk.shape[2];
    for (Index o = 0; o < blk.shape[0]; o++)
      for (size_t i = 0; i < states.size(); i++) {
        double n;
        if (s.mode == TnMode::pure_mps)
          n = static_cast<double>(states[i]);
        else
          n = static_cast<double>(states[i] / d) -
              static_cast<double>(states[i] % d);
        cplx f = std::exp(cplx(0, phase * n));
        blk.data.segment((o * static_cast<Index>(states.size()) +
                          static_cast<Index>(i)) *
                             stride,
                         stride) *= f;
      }
  }
}

void apply_loss_channel(TnState& s, int site, double eta) {
  if (s.mode == TnMode::pure_mps)
    throw std::invalid_argument("loss requires the vectorized (mixed) mode");
  if (eta < 0 || eta > 1)
    throw std::invalid_argument("loss transmissivity out of [0,1]");
  if (site < 0 || site >= s.num_modes)
    throw std::invalid_argument("apply_loss_channel: site out of range");
  const Index d = s.local_dim;
  // L[(nk-k, nb-k), (nk, nb)] = K_k[nk-k,nk] conj(K_k[nb-k,nb]),
  // K_k[n-k, n] = sqrt(binom(n,k) eta^{n-k} (1-eta)^k).
  Mat L = Mat::Zero(d * d, d * d);
  auto kraus = [&](Index k, Index n) {
    double binom = 1.0;
    for (Index i = 0; i < k; i++)
      binom *= static_cast<double>(n - i) / static_cast<double>(i + 1);
    return std::sqrt(binom * std::pow(eta, static_cast<double>(n - k)) *
                     std::pow(1.0 - eta, static_cast<double>(k)));
  };
  for (Index nk = 0; nk < d; nk++)
    for (Index nb = 0; nb < d; nb++)
      for (Index k = 0; k <= std::min(nk, nb); k++)
        L((nk - k) * d + (nb - k), nk * d + nb) += kraus(k, nk) * kraus(k, nb);

  PhysSpace ph = make_phys_space(s);
  ChargeMod cm = s.grading.charge_mod();
  IndexSpec in = ph.spec;
  in.flow = -1;
  ChargeBlockTensor lt({ph.spec, in}, Charge{}, cm);
  for (Index po = 0; po < d * d; po++)
    for (Index pi = 0; pi < d * d; pi++) {
      if (L(po, pi) == cplx(0.0)) continue;
      auto [so, oo] = ph.state_slot[po];
      auto [si, oi] = ph.state_slot[pi];
      BlockKey key{so, si};
      if (!lt.conserves(key))
        throw std::logic_error(
            "loss channel incompatible with the state's grading");
      Block& b = lt.block(key);
      b.data[oo * b.shape[1] + oi] += L(po, pi);
    }
  ChargeBlockTensor out = contract(lt, s.gamma[site], {{1, 1}});
  s.gamma[site] = transposed(out, {1, 0, 2});
}

namespace {

/// Left-to-right single-layer fold with a per-state weight vector (the
/// vectorized identity for the MPO trace) returning per-charge row vectors.
std::map<Charge, Eigen::RowVectorXcd> fold_weight(
    const TnState& s, const PhysSpace& ph,
    const std::function<cplx(Index)>& weight, int from, int to_exclusive,
    std::map<Charge, Eigen::RowVectorXcd> env) {
  for (int j = from; j < to_exclusive; j++) {
    std::map<Charge, Eigen::RowVectorXcd> next;
    for (const auto& [key, blk] : s.gamma[j].blocks()) {
      Charge qL = s.gamma[j].spec(0).sectors[key[0]].charge;
      auto it = env.find(qL);
      if (it == env.end()) continue;
      Charge qR = s.gamma[j].spec(2).sectors[key[2]].charge;
      const Index el = blk.shape[0], ep = blk.shape[1], er = blk.shape[2];
      Mat m = Mat::Zero(el, er);
      const auto& states = ph.sector_states[key[1]];
      for (Index p = 0; p < ep; p++) {
        cplx w = weight(states[p]);
        if (w == cplx(0.0)) continue;
        for (Index aa = 0; aa < el; aa++)
          for (Index bb = 0; bb < er; bb++)
            m(aa, bb) += w * blk.data[(aa * ep + p) * er + bb];
      }
      auto [nit, inserted] =
          next.try_emplace(qR, Eigen::RowVectorXcd::Zero(er));
      nit->second += it->second * m;
    }
    env = std::move(next);
  }
  return env;
}

std::map<Charge, Vec> fold_weight_right(
    const TnState& s, const PhysSpace& ph,
    const std::function<cplx(Index)>& weight, int from, int down_to_exclusive,
    std::map<Charge, Vec> env) {
  for (int j = from; j > down_to_exclusive; j--) {
    std::map<Charge, Vec> next;
    for (const auto& [key, blk] : s.gamma[j].blocks()) {
      Charge qR = s.gamma[j].spec(2).sectors[key[2]].charge;
      auto it = env.find(qR);
      if (it == env.end()) continue;
      Charge qL = s.gamma[j].spec(0).sectors[key[0]].charge;
      const Index el = blk.shape[0], ep = blk.shape[1], er = blk.shape[2];
      Mat m = Mat::Zero(el, er);
      const auto& states = ph.sector_states[key[1]];
      for (Index p = 0; p < ep; p++) {
        cplx w = weight(states[p]);
        if (w == cplx(0.0)) continue;
        for (Index aa = 0; aa < el; aa++)
          for (Index bb = 0; bb < er; bb++)
            m(aa, bb) += w * blk.data[(aa * ep + p) * er + bb];
      }
      auto [nit, inserted] = next.try_emplace(qL, Vec::Zero(el));
      nit->second += m * it->second;
    }
    env = std::move(next);
  }
  return env;
}

/// Double-layer fold (bra layer conjugated) for pure-state contractions.
std::map<Charge, Mat> fold_double(const TnState& s, const PhysSpace&,
                                  int from, int to_exclusive,
                                  std::map<Charge, Mat> env) {
  for (int j = from; j < to_exclusive; j++) {
    std::map<Charge, Mat> next;
    for (const auto& [key, blk] : s.gamma[j].blocks()) {
      Charge qL = s.gamma[j].spec(0).sectors[key[0]].charge;
      auto it = env.find(qL);
      if (it == env.end()) continue;
      Charge qR = s.gamma[j].spec(2).sectors[key[2]].charge;
      const Index el = blk.shape[0], ep = blk.shape[1], er = blk.shape[2];
      auto [nit, ins] = next.try_emplace(qR, Mat::Zero(er, er));
      for (Index p = 0; p < ep; p++) {
        Mat dp(el, er);
        for (Index aa = 0; aa < el; aa++)
          for (Index bb = 0; bb < er; bb++)
            dp(aa, bb) = blk.data[(aa * ep + p) * er + bb];
        nit->second.noalias() += dp.transpose() * it->second * dp.conjugate();
      }
    }
    env = std::move(next);
  }
  return env;
}

std::map<Charge, Mat> fold_double_right(const TnState& s, const PhysSpace&,
                                        int from, int down_to_exclusive,
                                        std::map<Charge, Mat> env) {
  for (int j = from; j > down_to_exclusive; j--) {
    std::map<Charge, Mat> next;
    for (const auto& [key, blk] : s.gamma[j].blocks()) {
      Charge qR = s.gamma[j].spec(2).sectors[key[2]].charge;
      auto it = env.find(qR);
      if (it == env.end()) continue;
      Charge qL = s.gamma[j].spec(0).sectors[key[0]].charge;
      const Index el = blk.shape[0], ep = blk.shape[1], er = blk.shape[2];
      auto [nit, ins] = next.try_emplace(qL, Mat::Zero(el, el));
      for (Index p = 0; p < ep; p++) {
        Mat dp(el, er);
        for (Index aa = 0; aa < el; aa++)
          for (Index bb = 0; bb < er; bb++)
            dp(aa, bb) = blk.data[(aa * ep + p) * er + bb];
        nit->second.noalias() += dp * it->second * dp.adjoint();
      }
    }
    env = std::move(next);
  }
  return env;
}

cplx identity_weight(const TnState& s, Index state) {
  if (s.mode == TnMode::pure_mps) return 1.0;
  const Index d = s.local_dim;
  return (state / d == state % d) ? 1.0 : 0.0;
}

}  // namespace

double trace(const TnState& s) {
  PhysSpace ph = make_phys_space(s);
  if (s.mode == TnMode::vectorized_mpo) {
    std::map<Charge, Eigen::RowVectorXcd> env;
    env[s.gamma.front().spec(0).sectors[0].charge] =
        Eigen::RowVectorXcd::Ones(1);
    auto w = [&](Index p) { return identity_weight(s, p); };
    env = fold_weight(s, ph, w, 0, s.num_modes, std::move(env));
    cplx tr = 0.0;
    for (const auto& [q, v] : env)
      for (Index i = 0; i < v.size(); i++) tr += v[i];
    return tr.real();
  }
  std::map<Charge, Mat> env;
  env[s.gamma.front().spec(0).sectors[0].charge] = Mat::Ones(1, 1);
  env = fold_double(s, ph, 0, s.num_modes, std::move(env));
  cplx n = 0.0;
  for (const auto& [q, m] : env) n += m.sum();
  return n.real();
}

double trace_error(TnState& s) {
  double err = 1.0 - trace(s) / s.initial_trace;
  if (err > s.trace_budget) s.flagged = true;
  return err;
}

std::vector<RVec> all_bond_spectra(const TnState& s) {
  PhysSpace ph = make_phys_space(s);
  const int M = s.num_modes;
  std::vector<RVec> out;
  if (M < 2) return out;

  // Left and right Gram environments at every interior bond. The true
  // Schmidt values squared are the eigenvalues of E_L E_R^T per sector.
  std::vector<std::map<Charge, Mat>> left(M - 1), right(M - 1);
  std::map<Charge, Mat> env;
  env[s.gamma.front().spec(0).sectors[0].charge] = Mat::Ones(1, 1);
  for (int j = 0; j < M - 1; j++) {
    env = fold_double(s, ph, j, j + 1, std::move(env));
    left[j] = env;
  }
  std::map<Charge, Mat> renv;
  renv[s.gamma.back().spec(2).sectors[0].charge] = Mat::Ones(1, 1);
  for (int j = M - 1; j >= 1; j--) {
    renv = fold_double_right(s, ph, j, j - 1, std::move(renv));
    right[j - 1] = renv;
  }

  out.resize(M - 1);
  for (int b = 0; b < M - 1; b++) {
    std::vector<double> vals;
    for (const auto& [q, el] : left[b]) {
      auto it = right[b].find(q);
      if (it == right[b].end()) continue;
      Eigen::SelfAdjointEigenSolver<Mat> esl(el);
      Mat root = Mat::Zero(el.rows(), el.cols());
      for (Index i = 0; i < esl.eigenvalues().size(); i++) {
        double ev = std::max(0.0, esl.eigenvalues()[i]);
        root += std::sqrt(ev) * esl.eigenvectors().col(i) *
                esl.eigenvectors().col(i).adjoint();
      }
      Mat m = root * it->second.transpose() * root;
      Eigen::SelfAdjointEigenSolver<Mat> esm((m + Mat(m.adjoint())) / 2.0);
      for (Index i = 0; i < esm.eigenvalues().size(); i++) {
        double ev = esm.eigenvalues()[i];
        if (ev > 0) vals.push_back(std::sqrt(ev));
      }
    }
    if (vals.empty()) vals.push_back(0.0);
    std::sort(vals.begin(), vals.end(), std::greater<>());
    RVec v = Eigen::Map<RVec>(vals.data(), static_cast<Index>(vals.size()));
    double n = v.norm();
    if (n == 0) throw std::runtime_error("zero bond spectrum");
    out[b] = v / n;
  }
  return out;
}

RVec schmidt_spectrum(const TnState& s, int bond) {
  if (bond < 0 || bond >= static_cast<int>(s.lambda.size()))
    throw std::invalid_argument("schmidt_spectrum: bond out of range");
  return all_bond_spectra(s)[bond];
}

Mat reduced_site_density(const TnState& s, int site) {
  if (site < 0 || site >= s.num_modes)
    throw std::invalid_argument("reduced_site_density: site out of range");
  PhysSpace ph = make_phys_space(s);
  const Index d = s.local_dim;
  Mat rho = Mat::Zero(d, d);

  if (s.mode == TnMode::vectorized_mpo) {
    auto w = [&](Index p) { return identity_weight(s, p); };
    std::map<Charge, Eigen::RowVectorXcd> envL;
    envL[s.gamma.front().spec(0).sectors[0].charge] =
        Eigen::RowVectorXcd::Ones(1);
    envL = fold_weight(s, ph, w, 0, site, std::move(envL));
    std::map<Charge, Vec> envR;
    envR[s.gamma.back().spec(2).sectors[0].charge] = Vec::Ones(1);
    envR = fold_weight_right(s, ph, w, s.num_modes - 1, site, std::move(envR));
    for (const auto& [key, blk] : s.gamma[site].blocks()) {
      Charge qL = s.gamma[site].spec(0).sectors[key[0]].charge;
      Charge qR = s.gamma[site].spec(2).sectors[key[2]].charge;
      auto lit = envL.find(qL);
      auto rit = envR.find(qR);
      if (lit == envL.end() || rit == envR.end()) continue;
      const Index el = blk.shape[0], ep = blk.shape[1], er = blk.shape[2];
      const auto& states = ph.sector_states[key[1]];
      for (Index p = 0; p < ep; p++) {
        cplx val = 0.0;
        for (Index aa = 0; aa < el; aa++)
          for (Index bb = 0; bb < er; bb++)
            val += lit->second[aa] * blk.data[(aa * ep + p) * er + bb] *
                   rit->second[bb];
        rho(states[p] / d, states[p] % d) += val;
      }
    }
    return rho;
  }

  std::map<Charge, Mat> envL;
  envL[s.gamma.front().spec(0).sectors[0].charge] = Mat::Ones(1, 1);
  envL = fold_double(s, ph, 0, site, std::move(envL));
  std::map<Charge, Mat> envR;
  envR[s.gamma.back().spec(2).sectors[0].charge] = Mat::Ones(1, 1);
  envR = fold_double_right(s, ph, s.num_modes - 1, site, std::move(envR));
  for (const auto& [km, bm] : s.gamma[site].blocks()) {
    Charge qL = s.gamma[site].spec(0).sectors[km[0]].charge;
    Charge qR = s.gamma[site].spec(2).sectors[km[2]].charge;
    auto lit = envL.find(qL);
    auto rit = envR.find(qR);
    if (lit == envL.end() || rit == envR.end()) continue;
    for (const auto& [kn, bn] : s.gamma[site].blocks()) {
      // both layers see the same environments, so bond sectors must match
      if (kn[0] != km[0] || kn[2] != km[2]) continue;
      const Index el = bm.shape[0], er = bm.shape[2];
      const auto& mstates = ph.sector_states[km[1]];
      const auto& nstates = ph.sector_states[kn[1]];
      const Index epm = bm.shape[1], epn = bn.shape[1];
      for (Index pm = 0; pm < epm; pm++)
        for (Index pn = 0; pn < epn; pn++) {
          Mat Dm(el, er), Dn(el, er);
          for (Index aa = 0; aa < el; aa++)
            for (Index bb = 0; bb < er; bb++) {
              Dm(aa, bb) = bm.data[(aa * epm + pm) * er + bb];
              Dn(aa, bb) = bn.data[(aa * epn + pn) * er + bb];
            }
          Mat C = Dm * rit->second * Dn.adjoint();
          cplx val = lit->second.cwiseProduct(C).sum();
          rho(mstates[pm], nstates[pn]) += val;
        }
    }
  }
  return rho;
}

nlohmann::json state_to_json(const TnState& s) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["mode"] = s.mode == TnMode::pure_mps ? "pure_mps" : "vectorized_mpo";
  j["num_modes"] = s.num_modes;
  j["local_dim"] = s.local_dim;
  j["chi_max"] = s.chi_max;
  j["cutoff"] = s.cutoff;
  j["trace_budget"] = s.trace_budget;
  j["grading"] = {{"kind", static_cast<int>(s.grading.kind)},
                  {"modulus", s.grading.modulus}};
  j["initial_trace"] = s.initial_trace;
  j["cumulative_discarded_weight"] = s.cumulative_discarded_weight;
  j["flagged"] = s.flagged;
  auto spec_json = [](const IndexSpec& sp) {
    nlohmann::json js;
    js["flow"] = sp.flow;
    js["sectors"] = nlohmann::json::array();
    for (const auto& sec : sp.sectors)
      js["sectors"].push_back(
          {{"a", sec.charge.a}, {"b", sec.charge.b}, {"extent", sec.extent}});
    return js;
  };
  j["sites"] = nlohmann::json::array();
  for (const auto& g : s.gamma) {
    nlohmann::json jg;
    jg["specs"] = nlohmann::json::array();
    for (int i = 0; i < g.rank(); i++) jg["specs"].push_back(spec_json(g.spec(i)));
    jg["blocks"] = nlohmann::json::array();
    for (const auto& [key, blk] : g.blocks()) {
      std::vector<double> re(blk.size()), im(blk.size());
      for (Index i = 0; i < blk.size(); i++) {
        re[i] = blk.data[i].real();
        im[i] = blk.data[i].imag();
      }
      jg["blocks"].push_back({{"key", key}, {"re", re}, {"im", im}});
    }
    j["sites"].push_back(jg);
  }
  j["bonds"] = nlohmann::json::array();
  for (const auto& b : s.lambda) {
    nlohmann::json jb = nlohmann::json::array();
    for (const auto& [q, v] : b.sectors) {
      std::vector<double> vals(v.data(), v.data() + v.size());
      jb.push_back({{"a", q.a}, {"b", q.b}, {"values", vals}});
    }
    j["bonds"].push_back(jb);
  }
  return j;
}

TnState state_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("unsupported checkpoint version");
  TnState s;
  s.mode = j.at("mode").get<std::string>() == "pure_mps"
               ? TnMode::pure_mps
               : TnMode::vectorized_mpo;
  s.num_modes = j.at("num_modes").get<int>();
  s.local_dim = j.at("local_dim").get<Index>();
  s.chi_max = j.at("chi_max").get<Index>();
  s.cutoff = j.at("cutoff").get<double>();
  s.trace_budget = j.at("trace_budget").get<double>();
  s.grading.kind =
      static_cast<Grading::Kind>(j.at("grading").at("kind").get<int>());
  s.grading.modulus = j.at("grading").at("modulus").get<int>();
  s.initial_trace = j.at("initial_trace").get<double>();
  s.cumulative_discarded_weight =
      j.at("cumulative_discarded_weight").get<double>();
  s.flagged = j.at("flagged").get<bool>();
  ChargeMod cm = s.grading.charge_mod();
  auto spec_from = [](const nlohmann::json& js) {
    IndexSpec sp;
    sp.flow = js.at("flow").get<int>();
    for (const auto& jsec : js.at("sectors"))
      sp.sectors.push_back({{jsec.at("a").get<int>(), jsec.at("b").get<int>()},
                            jsec.at("extent").get<Index>()});
    return sp;
  };
  for (const auto& jg : j.at("sites")) {
    std::vector<IndexSpec> specs;
    for (const auto& js : jg.at("specs")) specs.push_back(spec_from(js));
    ChargeBlockTensor g(std::move(specs), Charge{}, cm);
    for (const auto& jb : jg.at("blocks")) {
      BlockKey key = jb.at("key").get<BlockKey>();
      auto re = jb.at("re").get<std::vector<double>>();
      auto im = jb.at("im").get<std::vector<double>>();
      Block& blk = g.block(key);
      for (Index i = 0; i < blk.size(); i++)
        blk.data[i] = cplx(re[i], im[i]);
    }
    s.gamma.push_back(std::move(g));
  }
  for (const auto& jb : j.at("bonds")) {
    BondSectors b;
    for (const auto& jsec : jb) {
      auto vals = jsec.at("values").get<std::vector<double>>();
      RVec v = Eigen::Map<RVec>(vals.data(), static_cast<Index>(vals.size()));
      b.sectors.push_back(
          {{jsec.at("a").get<int>(), jsec.at("b").get<int>()}, v});
    }
    s.lambda.push_back(std::move(b));
  }
  return s;
}

}  // namespace gbsim
