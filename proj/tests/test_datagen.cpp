#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpatch/dataset.hpp"
#include "gpatch/synth.hpp"

using namespace gpatch;
namespace fs = std::filesystem;

namespace {

SynthSpec spec(int n, int classes, double h, std::uint64_t seed, double deg = 8.0) {
    SynthSpec s;
    s.n = n;
    s.classes = classes;
    s.d = 8;
    s.mean_degree = deg;
    s.h = h;
    s.snr = 2.0;
    s.seed = seed;
    return s;
}

std::string scratch_dir() {
    char tmpl[] = "/tmp/datagen_test_XXXXXX";
    const char *d = mkdtemp(tmpl);
    REQUIRE(d != nullptr);
    return d;
}

ErrorCode code_of(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.code();
    }
    return static_cast<ErrorCode>(-1); // sentinel: nothing thrown
}

/// Copies the manifest, applies `mutate`, writes it next to the data
/// files, and returns the new path.
std::string rewrite_manifest(const std::string &manifest_path, const std::string &new_name,
                             const std::function<void(nlohmann::json &)> &mutate) {
    std::ifstream in(manifest_path);
    nlohmann::json j;
    in >> j;
    mutate(j);
    const fs::path out_path = fs::path(manifest_path).parent_path() / new_name;
    std::ofstream out(out_path);
    out << j.dump(2);
    return out_path.string();
}

} // namespace

TEST_CASE("generation is deterministic in the spec") {
    Graph a = generate_synthetic(spec(200, 3, 0.4, 9));
    Graph b = generate_synthetic(spec(200, 3, 0.4, 9));
    CHECK(graph_content_hash(a) == graph_content_hash(b));
    Graph c = generate_synthetic(spec(200, 3, 0.4, 10));
    CHECK(graph_content_hash(a) != graph_content_hash(c));
}

TEST_CASE("labels cycle through the classes") {
    Graph g = generate_synthetic(spec(20, 3, 0.5, 1));
    for (int v = 0; v < g.n; ++v) CHECK(g.labels[v] == v % 3);
}

TEST_CASE("the edge budget is met exactly") {
    Graph g = generate_synthetic(spec(50, 2, 0.5, 2, 10.0));
    CHECK(g.undirected_edge_count() == 250);
}

TEST_CASE("pure assortative and pure disassortative graphs") {
    Graph lo = generate_synthetic(spec(200, 2, 0.0, 3));
    CHECK(node_heterophily(lo).graph_level == 0.0);
    Graph hi = generate_synthetic(spec(200, 2, 1.0, 3));
    CHECK(node_heterophily(hi).graph_level == 1.0);
}

TEST_CASE("realized mixing tracks the requested level") {
    double prev = -1.0;
    for (double h : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        Graph g = generate_synthetic(spec(2000, 3, h, 4, 10.0));
        const double measured = node_heterophily(g).graph_level;
        CHECK(std::fabs(measured - h) <= 0.05);
        CHECK(measured > prev);
        prev = measured;
    }
}

TEST_CASE("impossible requests are refused") {
    CHECK(code_of([] { generate_synthetic(spec(0, 2, 0.5, 1)); }) == ErrorCode::InfeasibleSpec);
    CHECK(code_of([] { generate_synthetic(spec(10, 0, 0.5, 1)); }) == ErrorCode::InfeasibleSpec);
    CHECK(code_of([] { generate_synthetic(spec(3, 5, 0.5, 1)); }) == ErrorCode::InfeasibleSpec);
    CHECK(code_of([] {
              SynthSpec s = spec(10, 4, 0.5, 1);
              s.d = 2; // fewer feature dims than classes
              generate_synthetic(s);
          }) == ErrorCode::InfeasibleSpec);
    CHECK(code_of([] { generate_synthetic(spec(10, 2, 1.2, 1)); }) == ErrorCode::InfeasibleSpec);
    CHECK(code_of([] { generate_synthetic(spec(10, 2, -0.1, 1)); }) == ErrorCode::InfeasibleSpec);
    CHECK(code_of([] {
              SynthSpec s = spec(10, 2, 0.5, 1);
              s.snr = 0.0;
              generate_synthetic(s);
          }) == ErrorCode::InfeasibleSpec);
    CHECK(code_of([] {
              SynthSpec s = spec(10, 2, 0.5, 1);
              s.train_frac = 0.9; // 0.9 + 0.32 + 0.2 > 1
              generate_synthetic(s);
          }) == ErrorCode::InfeasibleSpec);
    CHECK(code_of([] { generate_synthetic(spec(10, 1, 0.5, 1)); }) == ErrorCode::InfeasibleSpec);
    // a mixing level with no room: all-intra edges cannot absorb the budget
    CHECK(code_of([] { generate_synthetic(spec(10, 2, 0.0, 1, 100.0)); }) ==
          ErrorCode::InfeasibleSpec);
}

TEST_CASE("split fractions are truncated per position") {
    Graph g = generate_synthetic(spec(100, 2, 0.5, 5));
    int tr = 0, va = 0, te = 0;
    for (int v = 0; v < g.n; ++v) {
        tr += g.train_mask[v];
        va += g.val_mask[v];
        te += g.test_mask[v];
        CHECK(g.train_mask[v] + g.val_mask[v] + g.test_mask[v] == 1);
    }
    CHECK(tr == 48);
    CHECK(va == 32);
    CHECK(te == 20);
}

TEST_CASE("a saved dataset reloads identically") {
    Graph g = generate_synthetic(spec(120, 3, 0.6, 6));
    const std::string dir = scratch_dir();
    const std::string manifest = save_dataset(g, dir, "round");
    Graph back = load_dataset_file(manifest);
    CHECK(graph_content_hash(back) == graph_content_hash(g));
}

TEST_CASE("declared statistics are validated on load") {
    Graph g = generate_synthetic(spec(150, 3, 0.5, 7));
    const std::string dir = scratch_dir();
    const std::string manifest = save_dataset(g, dir, "check");

    auto expect = [&](const std::string &name,
                      const std::function<void(nlohmann::json &)> &mutate, ErrorCode want) {
        const std::string path = rewrite_manifest(manifest, name, mutate);
        CHECK(code_of([&] { load_dataset_file(path); }) == want);
    };

    expect("nodes.json", [](nlohmann::json &j) { j["nodes"] = j["nodes"].get<long>() + 1; },
           ErrorCode::ManifestMismatch);
    expect("edges.json", [](nlohmann::json &j) { j["edges"] = j["edges"].get<long>() + 1; },
           ErrorCode::ManifestMismatch);
    expect("classes.json", [](nlohmann::json &j) { j["classes"] = 2; },
           ErrorCode::ManifestMismatch);
    expect("featdim.json",
           [](nlohmann::json &j) { j["feature_dim"] = j["feature_dim"].get<int>() + 1; },
           ErrorCode::ManifestMismatch);
    expect("het.json",
           [](nlohmann::json &j) { j["heterophily"] = j["heterophily"].get<double>() + 0.1; },
           ErrorCode::ManifestMismatch);
    expect("missing.json", [](nlohmann::json &j) { j["edges_file"] = "no-such-file.txt"; },
           ErrorCode::ParseError);
    expect("partial.json", [](nlohmann::json &j) { j.erase("test_mask_file"); },
           ErrorCode::ParseError);

    // either orientation convention is accepted for the edge count
    const std::string doubled = rewrite_manifest(manifest, "doubled.json", [](nlohmann::json &j) {
        j["edges"] = 2 * j["edges"].get<long>();
    });
    Graph via_directed = load_dataset_file(doubled);
    CHECK(graph_content_hash(via_directed) == graph_content_hash(g));
}

TEST_CASE("malformed data files are parse failures") {
    Graph g = generate_synthetic(spec(60, 2, 0.5, 8));
    const std::string dir = scratch_dir();
    const std::string manifest = save_dataset(g, dir, "bad");

    SUBCASE("trailing tokens on an edge line") {
        std::ofstream out(fs::path(dir) / "bad.edges.txt", std::ios::app);
        out << "0 1 2\n";
        out.close();
        CHECK(code_of([&] { load_dataset_file(manifest); }) == ErrorCode::ParseError);
    }
    SUBCASE("non-numeric label") {
        std::ofstream out(fs::path(dir) / "bad.labels.txt", std::ios::app);
        out << "abc\n";
        out.close();
        CHECK(code_of([&] { load_dataset_file(manifest); }) == ErrorCode::ParseError);
    }
    SUBCASE("edge endpoint beyond the node count") {
        std::ofstream out(fs::path(dir) / "bad.edges.txt", std::ios::app);
        out << "0 60\n";
        out.close();
        CHECK(code_of([&] { load_dataset_file(manifest); }) == ErrorCode::ManifestMismatch);
    }
    SUBCASE("mask id beyond the node count") {
        std::ofstream out(fs::path(dir) / "bad.train.txt", std::ios::app);
        out << "60\n";
        out.close();
        CHECK(code_of([&] { load_dataset_file(manifest); }) == ErrorCode::ParseError);
    }
    SUBCASE("ragged feature row") {
        std::ofstream out(fs::path(dir) / "bad.features.csv", std::ios::app);
        out << "1.0,2.0\n";
        out.close();
        // the short row is also one row too many, but raggedness hits first
        CHECK(code_of([&] { load_dataset_file(manifest); }) == ErrorCode::ParseError);
    }
}

TEST_CASE("datasets without mask files get the default split") {
    const std::string dir = scratch_dir();

    SUBCASE("citation-style split when the sizes fit") {
        Graph g = generate_synthetic(spec(2000, 2, 0.5, 11));
        const std::string manifest = save_dataset(g, dir, "big");
        const std::string stripped =
            rewrite_manifest(manifest, "big_nomask.json", [](nlohmann::json &j) {
                j.erase("train_mask_file");
                j.erase("val_mask_file");
                j.erase("test_mask_file");
            });
        Graph d = load_dataset_file(stripped);
        int tr = 0, va = 0, te = 0;
        for (int v = 0; v < d.n; ++v) {
            tr += d.train_mask[v];
            va += d.val_mask[v];
            te += d.test_mask[v];
            CHECK(d.train_mask[v] + d.val_mask[v] + d.test_mask[v] <= 1);
        }
        CHECK(tr == 40); // 20 per class
        CHECK(va == 500);
        CHECK(te == 1000);
        // the test block is the final kilonode stretch
        for (int v = d.n - 1000; v < d.n; ++v) CHECK(d.test_mask[v] == 1);
    }

    SUBCASE("stratified split otherwise, deterministically") {
        Graph g = generate_synthetic(spec(100, 2, 0.5, 12));
        const std::string manifest = save_dataset(g, dir, "small");
        const std::string stripped =
            rewrite_manifest(manifest, "small_nomask.json", [](nlohmann::json &j) {
                j.erase("train_mask_file");
                j.erase("val_mask_file");
                j.erase("test_mask_file");
            });
        Graph d1 = load_dataset_file(stripped);
        Graph d2 = load_dataset_file(stripped);
        CHECK(graph_content_hash(d1) == graph_content_hash(d2));
        int tr = 0, va = 0, te = 0;
        for (int v = 0; v < d1.n; ++v) {
            tr += d1.train_mask[v];
            va += d1.val_mask[v];
            te += d1.test_mask[v];
            CHECK(d1.train_mask[v] + d1.val_mask[v] + d1.test_mask[v] == 1);
        }
        CHECK(tr == 48);
        CHECK(va == 32);
        CHECK(te == 20);
    }
}

TEST_CASE("scaling suite delivers graded sizes at fixed degree") {
    ScalabilitySuite a = generate_scalability_suite({200, 400}, {8, 16}, 33);
    REQUIRE(a.graphs.size() == 2);
    CHECK(a.sizes == std::vector<int>{200, 400});
    CHECK(a.patch_sizes == std::vector<int>{8, 16});
    CHECK(a.graphs[0].n == 200);
    CHECK(a.graphs[1].n == 400);
    CHECK(a.graphs[0].undirected_edge_count() == 1000); // mean degree 10
    CHECK(a.graphs[1].undirected_edge_count() == 2000);
    CHECK(graph_content_hash(a.graphs[0]) != graph_content_hash(a.graphs[1]));

    ScalabilitySuite b = generate_scalability_suite({200, 400}, {8, 16}, 33);
    CHECK(graph_content_hash(a.graphs[0]) == graph_content_hash(b.graphs[0]));
    CHECK(graph_content_hash(a.graphs[1]) == graph_content_hash(b.graphs[1]));

    CHECK(code_of([] { generate_scalability_suite({0}, {4}, 1); }) ==
          ErrorCode::InfeasibleSpec);
}

#ifdef GPATCHER_REPO_DATA
TEST_CASE("the shipped manifest stubs parse") {
    const fs::path dir = fs::path(GPATCHER_REPO_DATA) / "manifests";
    REQUIRE(fs::exists(dir));
    int seen = 0;
    for (const auto &entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        ++seen;
        DatasetManifest m = load_manifest(entry.path().string());
        CHECK(!m.name.empty());
        CHECK(m.nodes > 0);
        CHECK(m.edges > 0);
        CHECK(m.classes > 1);
        CHECK(m.feature_dim > 0);
        CHECK(!m.edges_file.empty());
        CHECK(!m.features_file.empty());
        CHECK(!m.labels_file.empty());
    }
    CHECK(seen == 9);
}
#endif
