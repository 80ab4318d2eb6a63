#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "gpatch/matrix.hpp"

namespace gpatch {

/// Undirected graph with node features, labels, and train/val/test masks.
/// Adjacency is CSR with sorted neighbor lists; both directions of every
/// edge are stored.
struct Graph {
    int n = 0;
    int num_classes = 0;
    std::vector<int> row_ptr;                // size n+1
    std::vector<int> col_idx;                // concatenated sorted neighbor lists
    Matrix features;                         // n x d
    std::vector<int> labels;                 // values in [0, num_classes)
    std::vector<std::uint8_t> train_mask;    // length n each, pairwise disjoint
    std::vector<std::uint8_t> val_mask;
    std::vector<std::uint8_t> test_mask;

    int degree(int v) const { return row_ptr[v + 1] - row_ptr[v]; }
    int feature_dim() const { return features.cols(); }
    std::int64_t undirected_edge_count() const {
        return static_cast<std::int64_t>(col_idx.size()) / 2;
    }
    std::int64_t directed_edge_count() const {
        return static_cast<std::int64_t>(col_idx.size());
    }
};

/// Counts of input edges dropped during construction.
struct EdgeCleanupStats {
    std::int64_t duplicate_edges = 0;
    std::int64_t self_edges = 0;
};

/// Builds a Graph from a raw undirected edge list. Duplicate edges and
/// self-edges are dropped (counted in `stats` when given). Masks may be
/// empty, meaning no split; otherwise they must be length n and disjoint.
Graph build_graph(int n, const std::vector<std::pair<int, int>> &edges, Matrix features,
                  std::vector<int> labels, int num_classes,
                  std::vector<std::uint8_t> train_mask = {},
                  std::vector<std::uint8_t> val_mask = {},
                  std::vector<std::uint8_t> test_mask = {},
                  EdgeCleanupStats *stats = nullptr);

/// Symmetric normalized adjacency D^(-1/2) (A + self_loops*I) D^(-1/2) in
/// CSR form. Rows of isolated nodes are all-zero when self_loops is false.
struct NormalizedAdjacency {
    int n = 0;
    bool self_loops = false;
    std::vector<int> row_ptr;
    std::vector<int> col_idx;
    std::vector<double> values;

    /// y = M x.
    void multiply(const double *x, double *y) const;
    std::vector<double> multiply(const std::vector<double> &x) const;
    Matrix dense() const;
};

NormalizedAdjacency normalize_adjacency(const Graph &g, bool self_loops = false);

/// Per-node fraction of neighbors carrying a different label. Isolated
/// nodes are undefined (NaN entry, defined flag false) and excluded from
/// the graph-level mean.
struct HeterophilyVector {
    std::vector<double> h;
    std::vector<std::uint8_t> defined;
    int defined_count = 0;
    double graph_level = std::numeric_limits<double>::quiet_NaN();
};

HeterophilyVector node_heterophily(const Graph &g);

/// Stable 64-bit content hash over structure, features, labels, and masks.
/// Used to key cached patch extractions.
std::uint64_t graph_content_hash(const Graph &g);
std::string graph_content_hash_hex(const Graph &g);

} // namespace gpatch
