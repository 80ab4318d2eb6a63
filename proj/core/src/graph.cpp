#include "gpatch/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gpatch/error.hpp"

namespace gpatch {

Graph build_graph(int n, const std::vector<std::pair<int, int>> &edges, Matrix features,
                  std::vector<int> labels, int num_classes,
                  std::vector<std::uint8_t> train_mask, std::vector<std::uint8_t> val_mask,
                  std::vector<std::uint8_t> test_mask, EdgeCleanupStats *stats) {
    if (n <= 0) throw Error(ErrorCode::InvalidArgument, "build_graph: n must be positive");
    if (features.rows() != n)
        throw Error(ErrorCode::ShapeMismatch, "build_graph: feature matrix must have n rows");
    if (static_cast<int>(labels.size()) != n)
        throw Error(ErrorCode::ShapeMismatch, "build_graph: labels must have length n");
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw Error(ErrorCode::InvalidArgument, "build_graph: label out of [0, C)");

    auto check_mask = [n](std::vector<std::uint8_t> &m, const char *name) {
        if (m.empty()) m.assign(static_cast<std::size_t>(n), 0);
        if (static_cast<int>(m.size()) != n)
            throw Error(ErrorCode::ShapeMismatch, std::string("build_graph: bad mask length: ") + name);
    };
    check_mask(train_mask, "train");
    check_mask(val_mask, "val");
    check_mask(test_mask, "test");
    for (int i = 0; i < n; ++i)
        if (int(train_mask[i]) + int(val_mask[i]) + int(test_mask[i]) > 1)
            throw Error(ErrorCode::InvalidArgument, "build_graph: masks overlap at node " + std::to_string(i));

    EdgeCleanupStats local{};
    std::vector<std::pair<int, int>> canon;
    canon.reserve(edges.size());
    for (auto [a, b] : edges) {
        if (a < 0 || a >= n || b < 0 || b >= n)
            throw Error(ErrorCode::InvalidArgument, "build_graph: edge endpoint out of range");
        if (a == b) {
            ++local.self_edges;
            continue;
        }
        canon.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(canon.begin(), canon.end());
    auto last = std::unique(canon.begin(), canon.end());
    local.duplicate_edges = static_cast<std::int64_t>(canon.end() - last);
    canon.erase(last, canon.end());
    if (stats) *stats = local;

    Graph g;
    g.n = n;
    g.num_classes = num_classes;
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.train_mask = std::move(train_mask);
    g.val_mask = std::move(val_mask);
    g.test_mask = std::move(test_mask);

    std::vector<int> deg(static_cast<std::size_t>(n), 0);
    for (auto [a, b] : canon) {
        ++deg[a];
        ++deg[b];
    }
    g.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 0; i < n; ++i) g.row_ptr[i + 1] = g.row_ptr[i] + deg[i];
    g.col_idx.resize(static_cast<std::size_t>(g.row_ptr[n]));
    std::vector<int> cursor(g.row_ptr.begin(), g.row_ptr.end() - 1);
    for (auto [a, b] : canon) {
        g.col_idx[cursor[a]++] = b;
        g.col_idx[cursor[b]++] = a;
    }
    for (int i = 0; i < n; ++i)
        std::sort(g.col_idx.begin() + g.row_ptr[i], g.col_idx.begin() + g.row_ptr[i + 1]);
    return g;
}

void NormalizedAdjacency::multiply(const double *x, double *y) const {
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += values[k] * x[col_idx[k]];
        y[i] = s;
    }
}

std::vector<double> NormalizedAdjacency::multiply(const std::vector<double> &x) const {
    std::vector<double> y(static_cast<std::size_t>(n));
    multiply(x.data(), y.data());
    return y;
}

Matrix NormalizedAdjacency::dense() const {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) m(i, col_idx[k]) = values[k];
    return m;
}

NormalizedAdjacency normalize_adjacency(const Graph &g, bool self_loops) {
    NormalizedAdjacency m;
    m.n = g.n;
    m.self_loops = self_loops;

    std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(g.n), 0.0);
    for (int i = 0; i < g.n; ++i) {
        const int d = g.degree(i) + (self_loops ? 1 : 0);
        if (d > 0) inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(d));
    }

    m.row_ptr.assign(static_cast<std::size_t>(g.n) + 1, 0);
    for (int i = 0; i < g.n; ++i)
        m.row_ptr[i + 1] = m.row_ptr[i] + g.degree(i) + (self_loops ? 1 : 0);
    m.col_idx.resize(static_cast<std::size_t>(m.row_ptr[g.n]));
    m.values.resize(m.col_idx.size());

    for (int i = 0; i < g.n; ++i) {
        int out = m.row_ptr[i];
        bool diag_done = !self_loops;
        for (int k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
            const int j = g.col_idx[k];
            if (!diag_done && j > i) {
                m.col_idx[out] = i;
                m.values[out] = inv_sqrt_deg[i] * inv_sqrt_deg[i];
                ++out;
                diag_done = true;
            }
            m.col_idx[out] = j;
            m.values[out] = inv_sqrt_deg[i] * inv_sqrt_deg[j];
            ++out;
        }
        if (!diag_done) {
            m.col_idx[out] = i;
            m.values[out] = inv_sqrt_deg[i] * inv_sqrt_deg[i];
        }
    }
    return m;
}

HeterophilyVector node_heterophily(const Graph &g) {
    HeterophilyVector hv;
    hv.h.assign(static_cast<std::size_t>(g.n), std::numeric_limits<double>::quiet_NaN());
    hv.defined.assign(static_cast<std::size_t>(g.n), 0);
    double total = 0.0;
    for (int i = 0; i < g.n; ++i) {
        const int d = g.degree(i);
        if (d == 0) continue;
        int diff = 0;
        for (int k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k)
            if (g.labels[g.col_idx[k]] != g.labels[i]) ++diff;
        hv.h[i] = static_cast<double>(diff) / static_cast<double>(d);
        hv.defined[i] = 1;
        ++hv.defined_count;
        total += hv.h[i];
    }
    if (hv.defined_count > 0) hv.graph_level = total / hv.defined_count;
    return hv;
}

namespace {

struct Fnv1a {
    std::uint64_t state = 1469598103934665603ull;
    void mix_bytes(const void *data, std::size_t len) {
        const auto *p = static_cast<const unsigned char *>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state ^= p[i];
            state *= 1099511628211ull;
        }
    }
    void mix_u64(std::uint64_t v) { mix_bytes(&v, sizeof v); }
    void mix_int(int v) { mix_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
    void mix_double(double v) {
        std::uint64_t bits;
        static_assert(sizeof bits == sizeof v);
        __builtin_memcpy(&bits, &v, sizeof bits);
        mix_u64(bits);
    }
};

} // namespace

std::uint64_t graph_content_hash(const Graph &g) {
    Fnv1a h;
    h.mix_int(g.n);
    h.mix_int(g.num_classes);
    h.mix_int(g.feature_dim());
    for (int v : g.row_ptr) h.mix_int(v);
    for (int v : g.col_idx) h.mix_int(v);
    for (double v : g.features.data()) h.mix_double(v);
    for (int v : g.labels) h.mix_int(v);
    for (std::uint8_t v : g.train_mask) h.mix_u64(v);
    for (std::uint8_t v : g.val_mask) h.mix_u64(v);
    for (std::uint8_t v : g.test_mask) h.mix_u64(v);
    return h.state;
}

std::string graph_content_hash_hex(const Graph &g) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(graph_content_hash(g)));
    return buf;
}

} // namespace gpatch
