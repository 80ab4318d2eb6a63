#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpatch/filters.hpp"
#include "gpatch/graph.hpp"
#include "gpatch/matrix.hpp"
#include "gpatch/spectral.hpp"

namespace gpatch {

/// Dense n x n relevance matrix. Column v scores every node against v.
struct ScoreMatrix {
    Matrix r;
    std::string provenance;      // adaptive | heat | bandpass | shared | ppr-iterative | ppr-closed
    std::vector<int> steps;      // per-column iteration counts (iterative ppr only)
    bool converged = true;       // false when a column hit max_steps with a large residual
    double max_residual = 0.0;
};

/// Ranked top-p patches. Row v of `indices` lists node ids by descending
/// score (ties: ascending id); `valid` marks real entries, the rest are
/// padding (-1). `features` holds the gathered rows, (n*p) x d, zeros at
/// padding; it may be empty until gather_features is called.
struct PatchSet {
    int n = 0;
    int p = 0;
    std::vector<int> indices;
    std::vector<std::uint8_t> valid;
    Matrix features;
    std::string cache_key;

    int slot(int v, int s) const { return v * p + s; }
};

/// R = U diag(g(lambda)) U^T for any spectral filter family.
ScoreMatrix score_spectral(const SpectralDecomposition &s, const FilterSpec &spec);

/// Polynomial scoring with one scalar weight per power k = 1..K.
ScoreMatrix score_adaptive(const SpectralDecomposition &s, const std::vector<double> &w);

/// Dense closed-form walk scores: column v = (1-c)(I - cA~)^{-1} e_v.
ScoreMatrix score_ppr_closed(const NormalizedAdjacency &m, double c,
                             int dense_limit = kDefaultDenseLimit);

/// Fixed-point iteration r <- cA~r + (1-c)e_v from r0 = e_v until the L1
/// step difference drops below tol. On max_steps with residual above
/// 100*tol the best iterate is kept and `converged` is cleared.
ScoreMatrix score_ppr_iterative(const NormalizedAdjacency &m, double c, double tol = 1e-8,
                                int max_steps = 1000);

/// (1-c) sum_{k=0..K} c^k A~^k, built by repeated sparse products.
Matrix truncated_neumann(const NormalizedAdjacency &m, double c, int K);

/// Max absolute entry difference between the polynomial score built with
/// the geometric weights w_k = (1-c)c^k (constant term (1-c)) and the
/// K-step truncated series computed in the node domain.
double fast_equals_adaptive_check(const SpectralDecomposition &s, const NormalizedAdjacency &m,
                                  double c, int K);

/// Top-p of each column of R; gathers feature rows from g.
PatchSet top_p_select(const ScoreMatrix &r, const Graph &g, int p);

/// Fills ps.features from g (zero rows at padding).
void gather_features(PatchSet &ps, const Graph &g);

/// Permutes each row's valid entries uniformly under the seed. Gathered
/// feature rows move with their indices.
PatchSet shuffle_patch_order(const PatchSet &ps, std::uint64_t seed);

/// New graph connecting each node to every member of its patch
/// (undirected union, self-edges dropped); features/labels/masks copied.
Graph induce_graph(const Graph &g, const PatchSet &ps);

/// End-to-end extraction for any filter family. Spectral families
/// eigendecompose first (subject to dense_limit); the ppr family uses the
/// iterative path, switching to a streaming one-column-at-a-time kernel
/// above the dense limit so no n x n matrix is materialized.
PatchSet extract_patches(const Graph &g, const FilterSpec &spec, int p,
                         int dense_limit = kDefaultDenseLimit);

/// Streaming large-graph walk extractor: runs the same fixed-point
/// iteration one column at a time, visiting only the column's reachable
/// support, and keeps just the top-p before moving on. Reports the summed
/// iteration count via `steps_total` when given.
PatchSet extract_ppr_patches_streaming(const NormalizedAdjacency &m, const Graph &g, double c,
                                       double tol, int max_steps, int p,
                                       std::int64_t *steps_total = nullptr,
                                       bool *converged = nullptr);

/// Sidecar cache of (indices, valid) keyed by graph hash, filter, and p.
void save_patchset(const PatchSet &ps, const std::string &path);
PatchSet load_patchset(const std::string &path, const Graph &g);

std::string patch_cache_key(const Graph &g, const FilterSpec &spec, int p);

} // namespace gpatch
