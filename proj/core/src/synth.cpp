#include "gpatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "gpatch/error.hpp"
#include "gpatch/rng.hpp"

namespace gpatch {

namespace {

// Labels are assigned round-robin, so class c holds ids {c, c+C, c+2C, ...}.
int class_size(int n, int classes, int c) {
    return (n - c + classes - 1) / classes;
}

int class_member(int classes, int c, int k) {
    return c + k * classes;
}

} // namespace

Graph generate_synthetic(const SynthSpec &spec) {
    const int n = spec.n;
    const int C = spec.classes;
    if (n < 1 || C < 1 || n < C)
        throw Error(ErrorCode::InfeasibleSpec, "need n >= classes >= 1");
    if (spec.d < C)
        throw Error(ErrorCode::InfeasibleSpec,
                    "need feature_dim >= classes for simplex class means");
    if (spec.h < 0.0 || spec.h > 1.0)
        throw Error(ErrorCode::InfeasibleSpec, "h outside [0, 1]");
    if (spec.mean_degree < 0.0)
        throw Error(ErrorCode::InfeasibleSpec, "negative mean degree");
    if (spec.snr <= 0.0)
        throw Error(ErrorCode::InfeasibleSpec, "snr must be positive");
    if (spec.train_frac < 0.0 || spec.val_frac < 0.0 || spec.test_frac < 0.0 ||
        spec.train_frac + spec.val_frac + spec.test_frac > 1.0 + 1e-12)
        throw Error(ErrorCode::InfeasibleSpec, "split fractions must be nonnegative and sum <= 1");

    Rng rng(spec.seed);

    std::vector<int> labels(n);
    for (int v = 0; v < n; ++v)
        labels[v] = v % C;

    const long long max_edges = static_cast<long long>(n) * (n - 1) / 2;
    long long m = std::llround(n * spec.mean_degree / 2.0);
    m = std::min(m, max_edges);

    std::set<std::pair<int, int>> seen;
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<std::size_t>(m));
    long long attempts = 0;
    const long long attempt_cap = 200 * std::max(m, 1LL) + 10000;
    while (static_cast<long long>(edges.size()) < m) {
        if (++attempts > attempt_cap)
            throw Error(ErrorCode::InfeasibleSpec,
                        "could not place requested edges; spec too dense or one-sided");
        int u, v;
        if (rng.uniform() < spec.h) {
            if (C < 2)
                throw Error(ErrorCode::InfeasibleSpec, "h > 0 needs at least two classes");
            const int c1 = rng.uniform_index(C);
            int c2 = rng.uniform_index(C - 1);
            if (c2 >= c1)
                ++c2;
            u = class_member(C, c1, rng.uniform_index(class_size(n, C, c1)));
            v = class_member(C, c2, rng.uniform_index(class_size(n, C, c2)));
        } else {
            const int c = rng.uniform_index(C);
            const int sz = class_size(n, C, c);
            if (sz < 2)
                continue;
            u = class_member(C, c, rng.uniform_index(sz));
            v = class_member(C, c, rng.uniform_index(sz));
            if (u == v)
                continue;
        }
        auto key = std::minmax(u, v);
        if (!seen.insert(key).second)
            continue;
        edges.push_back(key);
    }

    // Centered simplex means in the first C coordinates.
    std::vector<std::vector<double>> means(C, std::vector<double>(spec.d, 0.0));
    for (int c = 0; c < C; ++c) {
        for (int k = 0; k < C; ++k)
            means[c][k] = (k == c ? 1.0 : 0.0) - 1.0 / C;
    }
    const double mean_norm = std::sqrt(1.0 - 1.0 / C);
    const double sigma = mean_norm / spec.snr;

    Matrix feats(n, spec.d);
    for (int v = 0; v < n; ++v) {
        const auto &mu = means[labels[v]];
        double *row = feats.row(v);
        for (int k = 0; k < spec.d; ++k)
            row[k] = mu[k] + sigma * rng.normal();
    }

    std::vector<int> order(n);
    for (int v = 0; v < n; ++v)
        order[v] = v;
    rng.shuffle(order);
    const int n_train = static_cast<int>(spec.train_frac * n);
    const int n_val = static_cast<int>(spec.val_frac * n);
    const int n_test = static_cast<int>(spec.test_frac * n);
    std::vector<std::uint8_t> train(n, 0), val(n, 0), test(n, 0);
    for (int i = 0; i < n; ++i) {
        if (i < n_train)
            train[order[i]] = 1;
        else if (i < n_train + n_val)
            val[order[i]] = 1;
        else if (i < n_train + n_val + n_test)
            test[order[i]] = 1;
    }

    return build_graph(n, edges, std::move(feats), std::move(labels), C, std::move(train),
                       std::move(val), std::move(test));
}

ScalabilitySuite generate_scalability_suite(const std::vector<int> &sizes,
                                            const std::vector<int> &patch_sizes,
                                            std::uint64_t seed) {
    for (int s : sizes)
        if (s <= 0)
            throw Error(ErrorCode::InfeasibleSpec, "sizes must be positive");
    ScalabilitySuite suite;
    suite.sizes = sizes;
    suite.patch_sizes = patch_sizes;
    suite.graphs.reserve(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        SynthSpec spec;
        spec.n = sizes[i];
        spec.classes = std::min(5, std::max(2, sizes[i] / 2));
        spec.d = 32;
        spec.mean_degree = 10.0;
        spec.h = 0.5;
        spec.snr = 2.0;
        spec.seed = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
        suite.graphs.push_back(generate_synthetic(spec));
    }
    return suite;
}

} // namespace gpatch
