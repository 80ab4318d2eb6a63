#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpatch/graph.hpp"
#include "gpatch/trainer.hpp"

namespace gpatch {

enum class AblationKind { Induced, AltFilters, PatchOrder, Sensitivity, Scalability };

const char *ablation_kind_name(AblationKind k);
AblationKind ablation_kind_from_name(const std::string &name);

struct AblationOptions {
    int seeds = 5;
    std::uint64_t seed0 = 0;
    std::vector<int> p_grid = {8, 16, 32, 64};
    std::vector<int> k_grid = {10, 50, 100, 200};
    std::vector<int> sizes = {10, 100, 1000, 10000}; // scalability only
};

/// Pre-rendered result table: every cell already formatted, so emitting it
/// twice gives byte-identical output.
struct AblationTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

/// `table` holds only run-to-run reproducible values. Wall-clock numbers
/// (scalability) go in `timings`, which is empty for the other kinds.
struct AblationResult {
    AblationTable table;
    AblationTable timings;
};

/// Protocols, one CSV row per cell with mean/std over `opt.seeds` runs:
///   induced      model x {original, induced} graph comparison
///   alt_filters  one row per extractor family
///   patch_order  ranked vs shuffled columns, per-seed rows + mean/std
///   sensitivity  patch-size x filter-count grid
///   scalability  size x patch-size grid on generated graphs (g unused)
AblationResult run_ablation(AblationKind kind, const Graph &g, const TrainConfig &cfg,
                            const AblationOptions &opt);

double mean_of(const std::vector<double> &v);
double sample_std(const std::vector<double> &v);

} // namespace gpatch
