#pragma once

#include <vector>

#include "gpatch/filters.hpp"
#include "gpatch/graph.hpp"
#include "gpatch/matrix.hpp"

namespace gpatch {

/// Eigendecomposition of a symmetric matrix: lambdas ascending, column i
/// of U pairs with lambdas[i], U orthonormal.
struct SpectralDecomposition {
    std::vector<double> lambdas;
    Matrix u;
};

inline constexpr int kDefaultDenseLimit = 4000;

/// Cyclic Jacobi eigensolver. Deterministic: fixed rotation order,
/// convergence when the off-diagonal Frobenius norm drops below
/// 1e-12 times the input norm (at most 100 sweeps), eigenvectors signed
/// so the largest-magnitude entry is positive (ties: lowest index).
SpectralDecomposition jacobi_eigendecompose(Matrix a);

/// Dense eigendecomposition of the normalized adjacency. Throws
/// DimensionTooLarge when n exceeds `dense_limit`.
SpectralDecomposition eigendecompose(const NormalizedAdjacency &m,
                                     int dense_limit = kDefaultDenseLimit);

/// Row-vector product H * U, mapping the heterophily vector into the
/// eigenbasis. Undefined entries (isolated nodes) enter as zero.
std::vector<double> spectral_heterophily(const HeterophilyVector &h,
                                         const SpectralDecomposition &s);

/// Entries with |H_hat| below this are excluded from every sum that takes
/// their logarithm.
inline constexpr double kLogExclusionEps = 1e-12;

struct ResponseMeanBound {
    double lhs = 0.0;          // (1/n) sum_i g(lambda_i), all indices
    double rhs = 0.0;          // sum log|H_hat| over n * log-ratio denominator
    bool holds = false;
    int excluded = 0;          // indices dropped for |H_hat| < eps
    double log_ratio = 0.0;    // log(sum g|H_hat|) - log(sum g), restricted sums
};

/// Evaluates both sides of the filter-average lower bound:
///   (1/n) sum_i g(lambda_i) >= sum log|H_hat| / (n * log-ratio)
/// with the log ratio taken over the restricted index set. The averaged
/// form is reached by dividing by the log ratio, so the bound only applies
/// when that denominator is positive; a vanishing or negative ratio throws
/// DegenerateBound, as does a logarithm undefined after exclusion.
ResponseMeanBound response_mean_bound(const FrequencyResponse &g, const std::vector<double> &h_hat);

struct ErrorTermBound {
    double value = 0.0;        // signed term; adding the unknown constant
                               // gives the error bound
    double min_coef = 0.0;     // min over the clamp set of psi(eta)*delta
    int excluded = 0;          // indices outside the restricted sum set
};

/// Evaluates the computable term of the signal-error bound. `g` must hold
/// the response already evaluated at (1 - lambda_i); `delta` and `eta`
/// are the caller-supplied spectra of the label and feature differences.
/// Sum set: delta_i != 0, eta_i != 0, |H_hat_i| >= eps. Min set adds
/// g_i != 0. Throws EmptyIndexSet when either set is empty and
/// DegenerateBound when the log-ratio denominator vanishes.
ErrorTermBound error_term_bound(const FrequencyResponse &g, const std::vector<double> &delta,
                                   const std::vector<double> &eta,
                                   const std::vector<double> &h_hat);

/// Clamp of x to [-|c|, |c|].
double clamp_psi(double x, double c);

} // namespace gpatch
