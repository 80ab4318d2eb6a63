#include "gpatch/patcher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "gpatch/error.hpp"
#include "gpatch/rng.hpp"

namespace gpatch {

ScoreMatrix score_spectral(const SpectralDecomposition &s, const FilterSpec &spec) {
    if (spec.family == FilterFamily::Ppr)
        throw Error(ErrorCode::InvalidArgument, "score_spectral: use the walk-based paths for ppr");
    const int n = s.u.rows();
    const FrequencyResponse fr = frequency_response(spec, s.lambdas);
    Matrix w(n, n);
    for (int i = 0; i < n; ++i) {
        const double *urow = s.u.row(i);
        double *wrow = w.row(i);
        for (int j = 0; j < n; ++j) wrow[j] = urow[j] * fr.g[j];
    }
    ScoreMatrix out;
    out.r = matmul_bt(w, s.u);
    out.provenance = filter_family_name(spec.family);
    return out;
}

ScoreMatrix score_adaptive(const SpectralDecomposition &s, const std::vector<double> &w) {
    return score_spectral(s, FilterSpec::adaptive(w));
}

ScoreMatrix score_ppr_closed(const NormalizedAdjacency &m, double c, int dense_limit) {
    if (m.n > dense_limit)
        throw Error(ErrorCode::DimensionTooLarge,
                    "score_ppr_closed: n exceeds dense limit " + std::to_string(dense_limit));
    const int n = m.n;
    Matrix system = m.dense();
    for (auto &v : system.data()) v = -c * v;
    for (int i = 0; i < n; ++i) system(i, i) += 1.0;
    LuSolver lu(system);

    ScoreMatrix out;
    out.r = Matrix(n, n);
    out.provenance = "ppr-closed";
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    for (int v = 0; v < n; ++v) {
        e[v] = 1.0 - c;
        const std::vector<double> col = lu.solve(e);
        e[v] = 0.0;
        for (int i = 0; i < n; ++i) out.r(i, v) = col[i];
    }
    return out;
}

ScoreMatrix score_ppr_iterative(const NormalizedAdjacency &m, double c, double tol,
                                int max_steps) {
    if (c <= 0.0 || c >= 1.0)
        throw Error(ErrorCode::InvalidArgument, "score_ppr_iterative: c must be in (0,1)");
    const int n = m.n;
    ScoreMatrix out;
    out.r = Matrix(n, n);
    out.provenance = "ppr-iterative";
    out.steps.assign(static_cast<std::size_t>(n), 0);

    std::vector<double> cur(static_cast<std::size_t>(n)), nxt(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        std::fill(cur.begin(), cur.end(), 0.0);
        cur[v] = 1.0;
        double residual = 0.0;
        int t = 0;
        for (; t < max_steps; ++t) {
            m.multiply(cur.data(), nxt.data());
            for (int i = 0; i < n; ++i) nxt[i] *= c;
            nxt[v] += 1.0 - c;
            residual = 0.0;
            for (int i = 0; i < n; ++i) residual += std::fabs(nxt[i] - cur[i]);
            cur.swap(nxt);
            if (residual < tol) {
                ++t;
                break;
            }
        }
        out.steps[v] = t;
        if (residual >= tol) {
            out.max_residual = std::max(out.max_residual, residual);
            if (residual > 100.0 * tol) out.converged = false;
        }
        for (int i = 0; i < n; ++i) out.r(i, v) = cur[i];
    }
    return out;
}

Matrix truncated_neumann(const NormalizedAdjacency &m, double c, int K) {
    const int n = m.n;
    Matrix r(n, n);
    std::vector<double> term(static_cast<std::size_t>(n)), next(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        std::fill(term.begin(), term.end(), 0.0);
        term[v] = 1.0;
        r(v, v) = 1.0 - c;
        double coef = 1.0 - c;
        for (int k = 1; k <= K; ++k) {
            m.multiply(term.data(), next.data());
            term.swap(next);
            coef *= c;
            for (int i = 0; i < n; ++i) r(i, v) += coef * term[i];
        }
    }
    return r;
}

double fast_equals_adaptive_check(const SpectralDecomposition &s, const NormalizedAdjacency &m,
                                  double c, int K) {
    const ScoreMatrix poly = score_spectral(s, FilterSpec::geometric(c, K));
    const Matrix series = truncated_neumann(m, c, K);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < poly.r.data().size(); ++i)
        max_diff = std::max(max_diff, std::fabs(poly.r.data()[i] - series.data()[i]));
    return max_diff;
}

namespace {

/// Fills row v of ps.indices with the descending top-p of `scores`
/// (ties: ascending id) using the shared scratch index buffer.
void select_column(const double *scores, int n, int p, int v, std::vector<int> &scratch,
                   PatchSet &ps) {
    scratch.resize(static_cast<std::size_t>(n));
    std::iota(scratch.begin(), scratch.end(), 0);
    auto better = [scores](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    const int take = std::min(p, n);
    if (take < n) std::nth_element(scratch.begin(), scratch.begin() + take, scratch.end(), better);
    std::sort(scratch.begin(), scratch.begin() + take, better);
    for (int s = 0; s < take; ++s) {
        ps.indices[ps.slot(v, s)] = scratch[s];
        ps.valid[ps.slot(v, s)] = 1;
    }
    for (int s = take; s < p; ++s) {
        ps.indices[ps.slot(v, s)] = -1;
        ps.valid[ps.slot(v, s)] = 0;
    }
}

} // namespace

PatchSet top_p_select(const ScoreMatrix &r, const Graph &g, int p) {
    if (p < 1) throw Error(ErrorCode::InvalidArgument, "top_p_select: p must be >= 1");
    const int n = r.r.rows();
    PatchSet ps;
    ps.n = n;
    ps.p = p;
    ps.indices.assign(static_cast<std::size_t>(n) * p, -1);
    ps.valid.assign(static_cast<std::size_t>(n) * p, 0);

    std::vector<double> column(static_cast<std::size_t>(n));
    std::vector<int> scratch;
    for (int v = 0; v < n; ++v) {
        for (int i = 0; i < n; ++i) column[i] = r.r(i, v);
        select_column(column.data(), n, p, v, scratch, ps);
    }
    gather_features(ps, g);
    return ps;
}

void gather_features(PatchSet &ps, const Graph &g) {
    const int d = g.feature_dim();
    ps.features = Matrix(ps.n * ps.p, d);
    for (int v = 0; v < ps.n; ++v)
        for (int s = 0; s < ps.p; ++s) {
            const int slot = ps.slot(v, s);
            if (!ps.valid[slot]) continue;
            const double *src = g.features.row(ps.indices[slot]);
            double *dst = ps.features.row(slot);
            std::copy(src, src + d, dst);
        }
}

PatchSet shuffle_patch_order(const PatchSet &ps, std::uint64_t seed) {
    PatchSet out = ps;
    Rng rng(seed);
    const bool has_features = out.features.rows() == out.n * out.p;
    std::vector<int> perm;
    std::vector<double> row_buf;
    for (int v = 0; v < out.n; ++v) {
        int k = 0;
        while (k < out.p && out.valid[out.slot(v, k)]) ++k;
        if (k < 2) continue;
        perm.resize(static_cast<std::size_t>(k));
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        for (int s = 0; s < k; ++s) out.indices[out.slot(v, s)] = ps.indices[ps.slot(v, perm[s])];
        if (has_features) {
            const int d = out.features.cols();
            for (int s = 0; s < k; ++s) {
                const double *src = ps.features.row(ps.slot(v, perm[s]));
                std::copy(src, src + d, out.features.row(out.slot(v, s)));
            }
        }
    }
    return out;
}

Graph induce_graph(const Graph &g, const PatchSet &ps) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(ps.indices.size());
    for (int v = 0; v < ps.n; ++v)
        for (int s = 0; s < ps.p; ++s) {
            const int slot = ps.slot(v, s);
            if (ps.valid[slot] && ps.indices[slot] != v) edges.emplace_back(v, ps.indices[slot]);
        }
    return build_graph(g.n, edges, g.features, g.labels, g.num_classes, g.train_mask, g.val_mask,
                       g.test_mask);
}

std::string patch_cache_key(const Graph &g, const FilterSpec &spec, int p) {
    return graph_content_hash_hex(g) + ":" + spec.cache_key() + ":p=" + std::to_string(p);
}

PatchSet extract_patches(const Graph &g, const FilterSpec &spec, int p, int dense_limit) {
    const NormalizedAdjacency m = normalize_adjacency(g, false);
    PatchSet ps;
    if (spec.family == FilterFamily::Ppr) {
        if (g.n <= dense_limit) {
            const ScoreMatrix r = score_ppr_iterative(m, spec.ppr_c, spec.ppr_tol, spec.ppr_max_steps);
            ps = top_p_select(r, g, p);
        } else {
            ps = extract_ppr_patches_streaming(m, g, spec.ppr_c, spec.ppr_tol, spec.ppr_max_steps, p);
        }
    } else {
        const SpectralDecomposition s = eigendecompose(m, dense_limit);
        const ScoreMatrix r = score_spectral(s, spec);
        ps = top_p_select(r, g, p);
    }
    ps.cache_key = patch_cache_key(g, spec, p);
    return ps;
}

PatchSet extract_ppr_patches_streaming(const NormalizedAdjacency &m, const Graph &g, double c,
                                       double tol, int max_steps, int p,
                                       std::int64_t *steps_total, bool *converged) {
    const int n = m.n;
    PatchSet ps;
    ps.n = n;
    ps.p = p;
    ps.indices.assign(static_cast<std::size_t>(n) * p, -1);
    ps.valid.assign(static_cast<std::size_t>(n) * p, 0);

    // One column lives at a time. The iterate is kept as a dense value array
    // plus an explicit support list, so each step touches only the nodes the
    // walk has reached; everything outside the lists is guaranteed zero.
    // With a symmetric non-negative matrix and the restart term the support
    // never shrinks, which keeps the residual sum over `nxt_ids` exhaustive.
    std::vector<double> cur(static_cast<std::size_t>(n), 0.0);
    std::vector<double> nxt(static_cast<std::size_t>(n), 0.0);
    std::vector<unsigned char> in_cur(static_cast<std::size_t>(n), 0);
    std::vector<unsigned char> in_nxt(static_cast<std::size_t>(n), 0);
    std::vector<int> cur_ids, nxt_ids;
    cur_ids.reserve(1024);
    nxt_ids.reserve(1024);

    std::int64_t total = 0;
    bool all_ok = true;
    const int *row_ptr = m.row_ptr.data();
    const int *col_idx = m.col_idx.data();
    const double *values = m.values.data();
    const int take = std::min(p, n);

    for (int v = 0; v < n; ++v) {
        cur[v] = 1.0;
        in_cur[v] = 1;
        cur_ids.clear();
        cur_ids.push_back(v);

        double residual = 0.0;
        int t = 0;
        for (; t < max_steps; ++t) {
            for (const int u : cur_ids) {
                const double ru = cur[u];
                for (int k = row_ptr[u]; k < row_ptr[u + 1]; ++k) {
                    const int w = col_idx[k];
                    if (!in_nxt[w]) {
                        in_nxt[w] = 1;
                        nxt_ids.push_back(w);
                    }
                    nxt[w] += values[k] * ru;
                }
            }
            for (const int w : nxt_ids) nxt[w] *= c;
            if (!in_nxt[v]) {
                in_nxt[v] = 1;
                nxt_ids.push_back(v);
            }
            nxt[v] += 1.0 - c;

            residual = 0.0;
            for (const int w : nxt_ids) residual += std::fabs(nxt[w] - cur[w]);

            cur.swap(nxt);
            in_cur.swap(in_nxt);
            cur_ids.swap(nxt_ids);
            for (const int w : nxt_ids) {
                nxt[w] = 0.0;
                in_nxt[w] = 0;
            }
            nxt_ids.clear();

            if (residual < tol) {
                ++t;
                break;
            }
        }
        total += t;
        if (residual >= tol && residual > 100.0 * tol) all_ok = false;

        // Top-p among the support; untouched nodes score exactly zero, so
        // they lose to every reached node and tie-break among themselves by
        // ascending id, exactly as the dense selection would order them.
        auto better = [&cur](int a, int b) {
            if (cur[a] != cur[b]) return cur[a] > cur[b];
            return a < b;
        };
        const int reached = static_cast<int>(cur_ids.size());
        const int from_support = std::min(take, reached);
        if (from_support < reached)
            std::nth_element(cur_ids.begin(), cur_ids.begin() + from_support, cur_ids.end(),
                             better);
        std::sort(cur_ids.begin(), cur_ids.begin() + from_support, better);
        for (int s = 0; s < from_support; ++s) {
            ps.indices[ps.slot(v, s)] = cur_ids[s];
            ps.valid[ps.slot(v, s)] = 1;
        }
        int s = from_support;
        for (int id = 0; s < take; ++id) {
            if (in_cur[id]) continue;
            ps.indices[ps.slot(v, s)] = id;
            ps.valid[ps.slot(v, s)] = 1;
            ++s;
        }

        for (const int w : cur_ids) {
            cur[w] = 0.0;
            in_cur[w] = 0;
        }
    }
    if (steps_total) *steps_total = total;
    if (converged) *converged = all_ok;
    gather_features(ps, g);
    return ps;
}

void save_patchset(const PatchSet &ps, const std::string &path) {
    nlohmann::json j;
    j["version"] = 1;
    j["key"] = ps.cache_key;
    j["n"] = ps.n;
    j["p"] = ps.p;
    j["indices"] = ps.indices;
    j["valid"] = std::vector<int>(ps.valid.begin(), ps.valid.end());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ParseError, "cannot write patch sidecar: " + path);
    out << j.dump() << "\n";
}

PatchSet load_patchset(const std::string &path, const Graph &g) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, "cannot read patch sidecar: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::ParseError, std::string("patch sidecar: ") + e.what());
    }
    PatchSet ps;
    ps.cache_key = j.value("key", "");
    ps.n = j.at("n").get<int>();
    ps.p = j.at("p").get<int>();
    ps.indices = j.at("indices").get<std::vector<int>>();
    const auto valid = j.at("valid").get<std::vector<int>>();
    ps.valid.assign(valid.begin(), valid.end());
    if (ps.n != g.n || static_cast<int>(ps.indices.size()) != ps.n * ps.p ||
        ps.valid.size() != ps.indices.size())
        throw Error(ErrorCode::ShapeMismatch, "patch sidecar does not match graph");
    for (std::size_t i = 0; i < ps.indices.size(); ++i)
        if (ps.valid[i] && (ps.indices[i] < 0 || ps.indices[i] >= g.n))
            throw Error(ErrorCode::ParseError, "patch sidecar: index out of range");
    gather_features(ps, g);
    return ps;
}

} // namespace gpatch
