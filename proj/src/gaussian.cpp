#include "gbsim/gaussian.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gbsim {

int PhotonPattern::total() const {
  int t = 0;
  for (int n : counts) t += n;
  return t;
}

double PhotonPattern::factorial_product() const {
  double f = 1.0;
  for (int n : counts)
    for (int k = 2; k <= n; k++) f *= k;
  return f;
}

GaussianCovariance covariance_from_circuit(const RVec& r, const Mat& u) {
  const int M = static_cast<int>(u.rows());
  if (u.cols() != M || r.size() != M)
    throw std::invalid_argument("covariance_from_circuit: size mismatch");
  if ((u * u.adjoint() - Mat::Identity(M, M)).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("covariance_from_circuit: u not unitary");
  RVec nbar(M), msq(M);
  for (int j = 0; j < M; j++) {
    nbar[j] = std::sinh(r[j]) * std::sinh(r[j]);
    msq[j] = -std::sinh(r[j]) * std::cosh(r[j]);
  }
  Mat N = u.conjugate() * nbar.asDiagonal() * u.transpose();  // <a_i^+ a_j>
  Mat Mm = u * msq.asDiagonal() * u.transpose();              // <a_i a_j>
  GaussianCovariance c;
  c.num_modes = M;
  c.sigma_q = Mat::Identity(2 * M, 2 * M);
  c.sigma_q.block(0, 0, M, M) += N.transpose();
  c.sigma_q.block(0, M, M, M) = Mm;
  c.sigma_q.block(M, 0, M, M) = Mm.conjugate();
  c.sigma_q.block(M, M, M, M) += N;
  return c;
}

GaussianCovariance apply_uniform_loss(const GaussianCovariance& c,
                                      double eta) {
  if (eta < 0 || eta > 1) throw std::invalid_argument("eta out of [0,1]");
  const int M = c.num_modes;
  GaussianCovariance out = c;
  Mat moments = c.sigma_q - Mat::Identity(2 * M, 2 * M);
  out.sigma_q = Mat::Identity(2 * M, 2 * M) + eta * moments;
  return out;
}

double mean_photons(const GaussianCovariance& c) {
  const int M = c.num_modes;
  return (c.sigma_q.block(M, M, M, M) - Mat::Identity(M, M)).trace().real();
}

Mat build_A(const GaussianCovariance& c) {
  const int M = c.num_modes;
  const Index D = 2 * M;
  Eigen::FullPivLU<Mat> lu(c.sigma_q);
  if (!lu.isInvertible())
    throw std::invalid_argument("build_A: singular covariance");
  Mat inner = Mat::Identity(D, D) - lu.inverse();
  Mat X = Mat::Zero(D, D);
  X.block(0, M, M, M) = Mat::Identity(M, M);
  X.block(M, 0, M, M) = Mat::Identity(M, M);
  return X * inner;
}

namespace {

std::vector<int> kept_indices(const PhotonPattern& n) {
  std::vector<int> idx;
  for (size_t j = 0; j < n.counts.size(); j++) {
    if (n.counts[j] < 0) throw std::invalid_argument("negative photon count");
    for (int rpt = 0; rpt < n.counts[j]; rpt++) idx.push_back(static_cast<int>(j));
  }
  return idx;
}

}  // namespace

Mat reduce_pattern(const Mat& A, const PhotonPattern& n) {
  const int M = static_cast<int>(n.counts.size());
  if (A.rows() != 2 * M || A.cols() != 2 * M)
    throw std::invalid_argument("reduce_pattern: A must be 2M x 2M");
  std::vector<int> idx = kept_indices(n);
  std::vector<int> full = idx;
  for (int j : idx) full.push_back(j + M);
  Mat out(full.size(), full.size());
  for (size_t a = 0; a < full.size(); a++)
    for (size_t b = 0; b < full.size(); b++) out(a, b) = A(full[a], full[b]);
  return out;
}

Mat reduce_single(const Mat& B, const PhotonPattern& n) {
  const int M = static_cast<int>(n.counts.size());
  if (B.rows() != M || B.cols() != M)
    throw std::invalid_argument("reduce_single: B must be M x M");
  std::vector<int> idx = kept_indices(n);
  Mat out(idx.size(), idx.size());
  for (size_t a = 0; a < idx.size(); a++)
    for (size_t b = 0; b < idx.size(); b++) out(a, b) = B(idx[a], idx[b]);
  return out;
}

namespace {

void require_even_symmetric(const Mat& B) {
  if (B.rows() != B.cols() || B.rows() % 2 != 0)
    throw std::invalid_argument("hafnian needs an even-dimensional matrix");
  if (B.rows() > 0 &&
      (B - B.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1 + B.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("hafnian needs a symmetric matrix");
}

}  // namespace

cplx hafnian(const Mat& B) {
  require_even_symmetric(B);
  const int n2 = static_cast<int>(B.rows());
  if (n2 == 0) return 1.0;
  const int n = n2 / 2;
  // Odometer over perfect matchings: at step i the smallest unmatched index
  // pairs with the c_i-th of the remaining (2(n-i)-1) candidates.
  std::vector<int> choice(n, 0);
  cplx sum = 0.0;
  std::vector<int> pool(n2);
  while (true) {
    for (int i = 0; i < n2; i++) pool[i] = i;
    int avail = n2;
    cplx prod = 1.0;
    for (int i = 0; i < n; i++) {
      int a = pool[0];
      int b = pool[1 + choice[i]];
      prod *= B(a, b);
      // remove a and b from the pool
      int w = 0;
      for (int q = 0; q < avail; q++)
        if (pool[q] != a && pool[q] != b) pool[w++] = pool[q];
      avail = w;
    }
    sum += prod;
    int i = n - 1;
    while (i >= 0) {
      choice[i]++;
      if (choice[i] < 2 * (n - i) - 1) break;
      choice[i] = 0;
      i--;
    }
    if (i < 0) break;
  }
  return sum;
}

cplx hafnian_recursive(const Mat& B) {
  require_even_symmetric(B);
  const Index n2 = B.rows();
  if (n2 == 0) return 1.0;
  cplx sum = 0.0;
  for (Index j = 1; j < n2; j++) {
    if (B(0, j) == cplx(0.0)) continue;
    Mat sub(n2 - 2, n2 - 2);
    Index a = 0;
    for (Index p = 1; p < n2; p++) {
      if (p == j) continue;
      Index b = 0;
      for (Index q = 1; q < n2; q++) {
        if (q == j) continue;
        sub(a, b++) = B(p, q);
      }
      a++;
    }
    sum += B(0, j) * hafnian_recursive(sub);
  }
  return sum;
}

double gbs_probability(const GaussianCovariance& c, const PhotonPattern& n) {
  if (static_cast<int>(n.counts.size()) != c.num_modes)
    throw std::invalid_argument("gbs_probability: pattern length mismatch");
  Mat A = build_A(c);
  Mat An = reduce_pattern(A, n);
  cplx haf = hafnian(An);
  double det = std::sqrt(std::abs(c.sigma_q.determinant().real()));
  return haf.real() / (n.factorial_product() * det);
}

Mat squeezed_b_matrix(const RVec& r, const Mat& u) {
  RVec t(r.size());
  for (Index j = 0; j < r.size(); j++) t[j] = -std::tanh(r[j]);
  return u * t.asDiagonal() * u.transpose();
}

double squeezed_b_probability(const RVec& r, const Mat& u,
                              const PhotonPattern& n) {
  if (n.total() % 2 != 0) return 0.0;  // squeezed light emits photon pairs
  Mat Bn = reduce_single(squeezed_b_matrix(r, u), n);
  double coshprod = 1.0;
  for (Index j = 0; j < r.size(); j++) coshprod *= std::cosh(r[j]);
  return std::norm(hafnian(Bn)) / (n.factorial_product() * coshprod);
}

McEstimate dephased_probability(const RVec& r, const LayeredCircuit& circuit,
                                const PhaseDistribution& dist,
                                const PhotonPattern& n, long num_mc,
                                uint64_t seed) {
  Mat u = compose_circuit(circuit);
  if (dist.kind == DistKind::none)
    return {gbs_probability(covariance_from_circuit(r, u), n), 0.0, 1};
  if (n.total() % 2 != 0) return {0.0, 0.0, num_mc};
  if (num_mc < 2) throw std::invalid_argument("need at least 2 MC samples");
  const int M = static_cast<int>(u.rows());
  RVec tanhr(M);
  double coshprod = 1.0;
  for (int j = 0; j < M; j++) {
    tanhr[j] = -std::tanh(r[j]);
    coshprod *= std::cosh(r[j]);
  }
  const double norm = n.factorial_product() * coshprod;

  const long chunk = 4096;
  double sum = 0.0, sumsq = 0.0;
  long done = 0;
  for (long c0 = 0; done < num_mc; c0++) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<uint64_t>(c0)));
    std::normal_distribution<double> gauss(0.0, dist.sigma);
    std::uniform_real_distribution<double> uni(-M_PI, M_PI);
    long todo = std::min(chunk, num_mc - done);
    for (long i = 0; i < todo; i++) {
      Vec phase(M);
      for (int j = 0; j < M; j++) {
        if (r[j] == 0.0) {
          phase[j] = tanhr[j];
          continue;
        }
        double th = dist.kind == DistKind::uniform ? uni(rng) : gauss(rng);
        th = th - 2.0 * M_PI * std::floor((th + M_PI) / (2.0 * M_PI));
        phase[j] = tanhr[j] * std::exp(cplx(0, 2.0 * th));
      }
      Mat B = u * phase.asDiagonal() * u.transpose();
      double p = std::norm(hafnian(reduce_single(B, n))) / norm;
      sum += p;
      sumsq += p * p;
    }
    done += todo;
  }
  McEstimate e;
  e.samples = num_mc;
  e.mean = sum / num_mc;
  double var = std::max(0.0, sumsq / num_mc - e.mean * e.mean);
  e.std_error = std::sqrt(var / (num_mc - 1));
  return e;
}

namespace {

Index int_pow(Index b, int e) {
  Index p = 1;
  for (int i = 0; i < e; i++) p *= b;
  return p;
}

/// rho <- (G tensor I) rho for a two-site gate on (site, site+1).
void left_apply_two_site(Mat& rho, const Mat& g2, int site, Index d, int M) {
  const Index left = int_pow(d, site);
  const Index right = int_pow(d, M - site - 2);
  const Index mid = d * d;
  Vec x(mid), y(mid);
  for (Index L = 0; L < left; L++)
    for (Index R = 0; R < right; R++)
      for (Index col = 0; col < rho.cols(); col++) {
        const Index base = L * mid * right + R;
        for (Index m = 0; m < mid; m++) x[m] = rho(base + m * right, col);
        y.noalias() = g2 * x;
        for (Index m = 0; m < mid; m++) rho(base + m * right, col) = y[m];
      }
}

}  // namespace

Mat dense_evolve(const std::vector<Mat>& locals, const LayeredCircuit& circuit,
                 Index d, Index max_side) {
  validate_circuit(circuit);
  const int M = circuit.num_modes;
  if (static_cast<int>(locals.size()) != M)
    throw std::invalid_argument("dense_evolve: need one density per mode");
  Index side = int_pow(d, M);
  if (side > max_side)
    throw std::invalid_argument("dense_evolve: d^M exceeds the size limit");
  Mat rho = Mat::Ones(1, 1);
  for (const auto& l : locals) {
    if (l.rows() != d || l.cols() != d)
      throw std::invalid_argument("dense_evolve: local dimension mismatch");
    Mat next(rho.rows() * d, rho.cols() * d);
    for (Index i = 0; i < rho.rows(); i++)
      for (Index j = 0; j < rho.cols(); j++)
        next.block(i * d, j * d, d, d) = rho(i, j) * l;
    rho = std::move(next);
  }
  for (const auto& layer : circuit.layers)
    for (const auto& g : layer) {
      Mat g2 = fock_beamsplitter_gate(g, d);
      left_apply_two_site(rho, g2, g.site, d, M);
      rho.adjointInPlace();
      left_apply_two_site(rho, g2, g.site, d, M);
      rho.adjointInPlace();
    }
  if (!circuit.output_phases.empty()) {
    Vec diag(side);
    for (Index x = 0; x < side; x++) {
      double ph = 0;
      Index rem = x;
      for (int j = M - 1; j >= 0; j--) {
        ph += circuit.output_phases[j] * static_cast<double>(rem % d);
        rem /= d;
      }
      diag[x] = std::exp(cplx(0, ph));
    }
    rho = diag.asDiagonal() * rho * diag.conjugate().asDiagonal();
  }
  return rho;
}

Vec dense_evolve_pure(const std::vector<Vec>& amps,
                      const LayeredCircuit& circuit, Index d, Index max_side) {
  validate_circuit(circuit);
  const int M = circuit.num_modes;
  if (static_cast<int>(amps.size()) != M)
    throw std::invalid_argument("dense_evolve_pure: need one vector per mode");
  if (int_pow(d, M) > max_side)
    throw std::invalid_argument("dense_evolve_pure: d^M exceeds the limit");
  Vec psi = Vec::Ones(1);
  for (const auto& a : amps) {
    if (a.size() != d)
      throw std::invalid_argument("dense_evolve_pure: dimension mismatch");
    Vec next(psi.size() * d);
    for (Index i = 0; i < psi.size(); i++) next.segment(i * d, d) = psi[i] * a;
    psi = std::move(next);
  }
  Mat col = psi;
  for (const auto& layer : circuit.layers)
    for (const auto& g : layer)
      left_apply_two_site(col, fock_beamsplitter_gate(g, d), g.site, d, M);
  psi = col.col(0);
  if (!circuit.output_phases.empty()) {
    for (Index x = 0; x < psi.size(); x++) {
      double ph = 0;
      Index rem = x;
      for (int j = M - 1; j >= 0; j--) {
        ph += circuit.output_phases[j] * static_cast<double>(rem % d);
        rem /= d;
      }
      psi[x] *= std::exp(cplx(0, ph));
    }
  }
  return psi;
}

RVec dense_operator_schmidt(const Mat& rho, int cut, Index d, int M) {
  if (cut < 1 || cut >= M) throw std::invalid_argument("bad cut");
  const Index dl = int_pow(d, cut), dr = int_pow(d, M - cut);
  if (rho.rows() != dl * dr) throw std::invalid_argument("size mismatch");
  Mat mat(dl * dl, dr * dr);
  for (Index xl = 0; xl < dl; xl++)
    for (Index yl = 0; yl < dl; yl++)
      for (Index xr = 0; xr < dr; xr++)
        for (Index yr = 0; yr < dr; yr++)
          mat(xl * dl + yl, xr * dr + yr) = rho(xl * dr + xr, yl * dr + yr);
  Eigen::JacobiSVD<Mat> svd(mat);
  RVec s = svd.singularValues();
  double nrm = s.norm();
  return nrm > 0 ? RVec(s / nrm) : s;
}

RVec dense_state_schmidt(const Vec& psi, int cut, Index d, int M) {
  if (cut < 1 || cut >= M) throw std::invalid_argument("bad cut");
  const Index dl = int_pow(d, cut), dr = int_pow(d, M - cut);
  Eigen::Map<const Mat> matT(psi.data(), dr, dl);  // psi is row-major (l, r)
  Mat mat = matT.transpose();
  Eigen::JacobiSVD<Mat> svd(mat);
  RVec s = svd.singularValues();
  double nrm = s.norm();
  return nrm > 0 ? RVec(s / nrm) : s;
}

Mat dense_reduced_density(const Mat& rho, int site, Index d, int M) {
  const Index left = int_pow(d, site), right = int_pow(d, M - site - 1);
  Mat out = Mat::Zero(d, d);
  for (Index m = 0; m < d; m++)
    for (Index n = 0; n < d; n++)
      for (Index L = 0; L < left; L++)
        for (Index R = 0; R < right; R++)
          out(m, n) += rho(L * d * right + m * right + R,
                           L * d * right + n * right + R);
  return out;
}

Mat dense_partial_trace_keep_pair(const Mat& rho, int site_a, int site_b,
                                  Index d, int M) {
  if (site_a >= site_b) throw std::invalid_argument("need site_a < site_b");
  Mat out = Mat::Zero(d * d, d * d);
  const Index n_all = int_pow(d, M);
  std::vector<Index> digits(M);
  for (Index x = 0; x < n_all; x++) {
    Index rem = x;
    for (int j = M - 1; j >= 0; j--) {
      digits[j] = rem % d;
      rem /= d;
    }
    for (Index ma = 0; ma < d; ma++)
      for (Index mb = 0; mb < d; mb++) {
        if (digits[site_a] != ma || digits[site_b] != mb) continue;
        for (Index na = 0; na < d; na++)
          for (Index nb = 0; nb < d; nb++) {
            Index y = x + (na - ma) * int_pow(d, M - site_a - 1) +
                      (nb - mb) * int_pow(d, M - site_b - 1);
            out(ma * d + mb, na * d + nb) += rho(x, y);
          }
      }
  }
  return out;
}

}  // namespace gbsim
