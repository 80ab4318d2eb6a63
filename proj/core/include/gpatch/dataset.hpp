#pragma once

#include <string>

#include "gpatch/graph.hpp"

namespace gpatch {

/// On-disk dataset description. All file paths are resolved relative to
/// the directory containing the manifest. Declared statistics are
/// validated against the loaded data; `edges` may count either
/// orientation convention (m or 2m).
struct DatasetManifest {
    std::string name;
    std::string base_dir;
    long nodes = 0;
    long edges = 0;
    int classes = 0;
    int feature_dim = 0;
    double heterophily = 0.0;
    bool has_heterophily = false;
    double heterophily_tolerance = 0.02;
    std::string edges_file;
    std::string features_file;
    std::string features_format = "dense"; // "dense" csv or "sparse" triplets
    std::string labels_file;
    std::string train_mask_file; // optional; all three absent -> default split
    std::string val_mask_file;
    std::string test_mask_file;
};

DatasetManifest load_manifest(const std::string &path);

/// Loads and validates a dataset. Count mismatches and out-of-tolerance
/// heterophily raise ManifestMismatch naming the field with expected vs
/// found values. Datasets without mask files get a deterministic default
/// split: 20 train nodes per class, then 500 validation and the final
/// 1000 nodes when those sizes fit, otherwise a fixed stratified
/// 48/32/20 split.
Graph load_dataset(const DatasetManifest &m);
Graph load_dataset_file(const std::string &manifest_path);

/// Writes a graph as a loadable dataset (edge list, dense feature csv,
/// labels, all three masks, manifest with measured statistics). Returns
/// the manifest path. Reloading yields an identical graph.
std::string save_dataset(const Graph &g, const std::string &dir, const std::string &name);

} // namespace gpatch
