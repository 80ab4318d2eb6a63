#pragma once

#include <cstdint>
#include <vector>

#include "gpatch/graph.hpp"

namespace gpatch {

/// Synthetic heterophily-controlled graph. `h` sets the probability that
/// a sampled edge joins nodes of different classes; the realized
/// graph-level heterophily lands within about 0.05 of it once the mean
/// degree reaches 5. Class means sit on a scaled centered simplex, so
/// classes separate linearly as snr grows.
struct SynthSpec {
    int n = 0;
    int classes = 2;
    int d = 16;
    double mean_degree = 10.0;
    double h = 0.5;
    double snr = 2.0;
    std::uint64_t seed = 0;
    double train_frac = 0.48;
    double val_frac = 0.32;
    double test_frac = 0.20;
};

Graph generate_synthetic(const SynthSpec &spec);

struct ScalabilitySuite {
    std::vector<int> sizes;
    std::vector<int> patch_sizes;
    std::vector<Graph> graphs; // one per size, fixed mean degree
};

ScalabilitySuite generate_scalability_suite(const std::vector<int> &sizes,
                                            const std::vector<int> &patch_sizes,
                                            std::uint64_t seed);

} // namespace gpatch
