#pragma once

#include <cstdint>
#include <vector>

#include "gbsim/fock.hpp"
#include "gbsim/interferometer.hpp"
#include "gbsim/types.hpp"

namespace gbsim {

/// Husimi covariance of an M-mode Gaussian state in the (a..., a^+...)
/// ordering, normalized so the vacuum maps to the identity.
struct GaussianCovariance {
  int num_modes = 0;
  Mat sigma_q;  // 2M x 2M, Hermitian
};

struct PhotonPattern {
  std::vector<int> counts;
  int total() const;
  double factorial_product() const;  // n1! n2! ... nM!
};

/// Covariance of squeezed inputs (r per mode, zeros for vacuum) sent through
/// the mode unitary u.
GaussianCovariance covariance_from_circuit(const RVec& r, const Mat& u);

/// Uniform transmissivity eta applied to every mode.
GaussianCovariance apply_uniform_loss(const GaussianCovariance& c, double eta);

/// Mean total photon number encoded in the covariance.
double mean_photons(const GaussianCovariance& c);

/// A = X (I - Sigma_Q^{-1}), X = [[0,I],[I,0]]; symmetric. For pure squeezed
/// inputs the off-diagonal (C) block vanishes.
Mat build_A(const GaussianCovariance& c);

/// Fig.-2 style pattern reduction of a 2M x 2M matrix: rows/cols j and j+M
/// are deleted where n_j = 0 and repeated n_j times otherwise.
Mat reduce_pattern(const Mat& A, const PhotonPattern& n);

/// Same reduction for an M x M (single-block) matrix.
Mat reduce_single(const Mat& B, const PhotonPattern& n);

/// Hafnian by explicit enumeration of all perfect matchings.
cplx hafnian(const Mat& B);
/// Hafnian by recursive pairwise elimination (independent algorithm).
cplx hafnian_recursive(const Mat& B);

/// Pattern probability from the covariance (Hafnian of the reduced A).
double gbs_probability(const GaussianCovariance& c, const PhotonPattern& n);

/// Pure-squeezed-input shortcut: |Haf(B_n)|^2 with B = u diag(-tanh r) u^T.
double squeezed_b_probability(const RVec& r, const Mat& u,
                              const PhotonPattern& n);
Mat squeezed_b_matrix(const RVec& r, const Mat& u);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;
};

/// Monte-Carlo average of the per-phase pattern probability over the phase
/// distribution (exact single evaluation for dist = none). Deterministic for
/// a given seed; chunked with fixed-order reduction.
McEstimate dephased_probability(const RVec& r, const LayeredCircuit& circuit,
                                const PhaseDistribution& dist,
                                const PhotonPattern& n, long num_mc,
                                uint64_t seed);

/// Dense (truncated Fock space) evolution of a product of local densities
/// through the circuit. Refuses to build matrices larger than max_side.
Mat dense_evolve(const std::vector<Mat>& locals, const LayeredCircuit& circuit,
                 Index d, Index max_side = 4096);
Vec dense_evolve_pure(const std::vector<Vec>& amps,
                      const LayeredCircuit& circuit, Index d,
                      Index max_side = 4096);

/// Operator-Schmidt spectrum of a density matrix across the cut after site
/// `cut` (1..M-1), normalized to unit 2-norm, nonincreasing.
RVec dense_operator_schmidt(const Mat& rho, int cut, Index d, int M);
RVec dense_state_schmidt(const Vec& psi, int cut, Index d, int M);

Mat dense_reduced_density(const Mat& rho, int site, Index d, int M);
Mat dense_partial_trace_keep_pair(const Mat& rho, int site_a, int site_b,
                                  Index d, int M);

}  // namespace gbsim
