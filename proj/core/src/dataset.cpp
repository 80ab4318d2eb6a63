#include "gpatch/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gpatch/csv.hpp"
#include "gpatch/error.hpp"
#include "gpatch/rng.hpp"

namespace gpatch {

namespace {

namespace fs = std::filesystem;

std::string join_path(const std::string &base, const std::string &rel) {
    if (rel.empty())
        return rel;
    fs::path p(rel);
    if (p.is_absolute())
        return rel;
    return (fs::path(base) / p).string();
}

std::ifstream open_or_throw(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::ParseError, "cannot open " + path);
    return in;
}

bool data_line(std::string &line) {
    const auto pos = line.find('#');
    if (pos != std::string::npos)
        line.erase(pos);
    for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c)))
            return true;
    return false;
}

long parse_long(const std::string &tok, const std::string &where) {
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(tok, &used);
    } catch (const std::exception &) {
        throw Error(ErrorCode::ParseError, where + ": bad integer '" + tok + "'");
    }
    if (used != tok.size())
        throw Error(ErrorCode::ParseError, where + ": bad integer '" + tok + "'");
    return v;
}

double parse_double(const char *s, char **end, const std::string &where) {
    const double v = std::strtod(s, end);
    if (*end == s)
        throw Error(ErrorCode::ParseError, where + ": bad number");
    return v;
}

[[noreturn]] void mismatch(const std::string &field, const std::string &expected,
                           const std::string &found) {
    throw Error(ErrorCode::ManifestMismatch,
                field + ": expected " + expected + ", found " + found);
}

std::vector<std::pair<int, int>> read_edge_list(const std::string &path, long nodes) {
    auto in = open_or_throw(path);
    std::vector<std::pair<int, int>> edges;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!data_line(line))
            continue;
        std::istringstream ss(line);
        std::string a, b, extra;
        if (!(ss >> a >> b))
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": expected two node ids");
        if (ss >> extra)
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": trailing tokens");
        const long u = parse_long(a, path);
        const long v = parse_long(b, path);
        if (u < 0 || v < 0)
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": negative node id");
        if (u >= nodes || v >= nodes)
            mismatch("nodes", std::to_string(nodes),
                     "edge endpoint " + std::to_string(std::max(u, v)));
        edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
    }
    return edges;
}

std::vector<int> read_labels(const std::string &path, long nodes, int classes) {
    auto in = open_or_throw(path);
    std::vector<int> labels;
    std::string line;
    int max_label = -1;
    while (std::getline(in, line)) {
        if (!data_line(line))
            continue;
        std::istringstream ss(line);
        std::string tok, extra;
        ss >> tok;
        if (ss >> extra)
            throw Error(ErrorCode::ParseError, path + ": one label per line");
        const long y = parse_long(tok, path);
        if (y < 0)
            throw Error(ErrorCode::ParseError, path + ": negative label");
        max_label = std::max(max_label, static_cast<int>(y));
        labels.push_back(static_cast<int>(y));
    }
    if (static_cast<long>(labels.size()) != nodes)
        mismatch("nodes", std::to_string(nodes), std::to_string(labels.size()) + " labels");
    if (max_label >= classes)
        mismatch("classes", std::to_string(classes), "label " + std::to_string(max_label));
    return labels;
}

Matrix read_dense_features(const std::string &path, long nodes, int dim) {
    auto in = open_or_throw(path);
    std::vector<double> values;
    std::string line;
    long rows = 0;
    int cols_seen = -1;
    while (std::getline(in, line)) {
        if (!data_line(line))
            continue;
        ++rows;
        int cols = 0;
        const char *s = line.c_str();
        char *end = nullptr;
        while (true) {
            while (*s == ' ' || *s == '\t' || *s == ',')
                ++s;
            if (*s == '\0' || *s == '\r')
                break;
            values.push_back(parse_double(s, &end, path));
            ++cols;
            s = end;
        }
        if (cols_seen < 0) {
            cols_seen = cols;
            if (cols_seen != dim)
                mismatch("feature_dim", std::to_string(dim), std::to_string(cols_seen));
        } else if (cols != cols_seen) {
            throw Error(ErrorCode::ParseError,
                        path + ": ragged row " + std::to_string(rows));
        }
    }
    if (rows != nodes)
        mismatch("nodes", std::to_string(nodes), std::to_string(rows) + " feature rows");
    Matrix f(static_cast<int>(nodes), dim);
    f.data() = std::move(values);
    return f;
}

Matrix read_sparse_features(const std::string &path, long nodes, int dim) {
    auto in = open_or_throw(path);
    Matrix f(static_cast<int>(nodes), dim);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!data_line(line))
            continue;
        std::istringstream ss(line);
        std::string r, c, v, extra;
        if (!(ss >> r >> c >> v))
            throw Error(ErrorCode::ParseError,
                        path + ":" + std::to_string(lineno) + ": expected row col value");
        if (ss >> extra)
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": trailing tokens");
        const long row = parse_long(r, path);
        const long col = parse_long(c, path);
        if (row < 0 || col < 0)
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": negative index");
        if (row >= nodes)
            mismatch("nodes", std::to_string(nodes), "feature row " + std::to_string(row));
        if (col >= dim)
            mismatch("feature_dim", std::to_string(dim), "feature column " + std::to_string(col));
        char *end = nullptr;
        f(static_cast<int>(row), static_cast<int>(col)) = parse_double(v.c_str(), &end, path);
    }
    return f;
}

std::vector<std::uint8_t> read_mask(const std::string &path, long nodes) {
    auto in = open_or_throw(path);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(nodes), 0);
    std::string line;
    while (std::getline(in, line)) {
        if (!data_line(line))
            continue;
        std::istringstream ss(line);
        std::string tok, extra;
        ss >> tok;
        if (ss >> extra)
            throw Error(ErrorCode::ParseError, path + ": one node id per line");
        const long v = parse_long(tok, path);
        if (v < 0 || v >= nodes)
            throw Error(ErrorCode::ParseError, path + ": node id out of range: " + tok);
        mask[static_cast<std::size_t>(v)] = 1;
    }
    return mask;
}

/// Citation-style default when it fits (20 train per class, next 500 val,
/// final 1000 test), otherwise a fixed stratified 48/32/20 split.
void default_split(long nodes, int classes, const std::vector<int> &labels,
                   std::vector<std::uint8_t> &train, std::vector<std::uint8_t> &val,
                   std::vector<std::uint8_t> &test) {
    const long n = nodes;
    train.assign(static_cast<std::size_t>(n), 0);
    val.assign(static_cast<std::size_t>(n), 0);
    test.assign(static_cast<std::size_t>(n), 0);
    if (n >= 20L * classes + 1500) {
        std::vector<int> taken(classes, 0);
        for (long v = 0; v < n; ++v) {
            const int y = labels[static_cast<std::size_t>(v)];
            if (taken[y] < 20) {
                train[static_cast<std::size_t>(v)] = 1;
                ++taken[y];
            }
        }
        int got = 0;
        for (long v = 0; v < n && got < 500; ++v) {
            if (!train[static_cast<std::size_t>(v)]) {
                val[static_cast<std::size_t>(v)] = 1;
                ++got;
            }
        }
        for (long v = n - 1000; v < n; ++v)
            if (!train[static_cast<std::size_t>(v)] && !val[static_cast<std::size_t>(v)])
                test[static_cast<std::size_t>(v)] = 1;
        return;
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    for (long v = 0; v < n; ++v)
        order[static_cast<std::size_t>(v)] = static_cast<int>(v);
    Rng rng(0x51AB1E5EEDULL ^ static_cast<std::uint64_t>(n));
    rng.shuffle(order);
    std::vector<long> count(classes, 0), seen(classes, 0);
    for (int y : labels)
        ++count[y];
    for (int v : order) {
        const int y = labels[static_cast<std::size_t>(v)];
        const long k = seen[y]++;
        const long t_end = std::lround(0.48 * count[y]);
        const long v_end = t_end + std::lround(0.32 * count[y]);
        if (k < t_end)
            train[static_cast<std::size_t>(v)] = 1;
        else if (k < v_end)
            val[static_cast<std::size_t>(v)] = 1;
        else
            test[static_cast<std::size_t>(v)] = 1;
    }
}

} // namespace

DatasetManifest load_manifest(const std::string &path) {
    auto in = open_or_throw(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception &e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.nodes = j.at("nodes").get<long>();
        m.edges = j.at("edges").get<long>();
        m.classes = j.at("classes").get<int>();
        m.feature_dim = j.at("feature_dim").get<int>();
        m.edges_file = j.at("edges_file").get<std::string>();
        m.features_file = j.at("features_file").get<std::string>();
        m.labels_file = j.at("labels_file").get<std::string>();
        if (j.contains("heterophily")) {
            m.heterophily = j.at("heterophily").get<double>();
            m.has_heterophily = true;
        }
        m.heterophily_tolerance = j.value("heterophily_tolerance", 0.02);
        m.features_format = j.value("features_format", std::string("dense"));
        m.train_mask_file = j.value("train_mask_file", std::string());
        m.val_mask_file = j.value("val_mask_file", std::string());
        m.test_mask_file = j.value("test_mask_file", std::string());
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    if (m.features_format != "dense" && m.features_format != "sparse")
        throw Error(ErrorCode::ParseError, path + ": unknown features_format '" + m.features_format + "'");
    if (m.nodes <= 0 || m.classes <= 0 || m.feature_dim <= 0 || m.edges < 0)
        throw Error(ErrorCode::ParseError, path + ": non-positive size field");
    m.base_dir = fs::path(path).parent_path().string();
    if (m.base_dir.empty())
        m.base_dir = ".";
    return m;
}

Graph load_dataset(const DatasetManifest &m) {
    const int given = int(!m.train_mask_file.empty()) + int(!m.val_mask_file.empty()) +
                      int(!m.test_mask_file.empty());
    if (given != 0 && given != 3)
        throw Error(ErrorCode::ParseError,
                    m.name + ": mask files must be given for all splits or none");

    auto edges = read_edge_list(join_path(m.base_dir, m.edges_file), m.nodes);
    auto labels = read_labels(join_path(m.base_dir, m.labels_file), m.nodes, m.classes);
    Matrix feats = m.features_format == "sparse"
                       ? read_sparse_features(join_path(m.base_dir, m.features_file), m.nodes,
                                              m.feature_dim)
                       : read_dense_features(join_path(m.base_dir, m.features_file), m.nodes,
                                             m.feature_dim);

    std::vector<std::uint8_t> train, val, test;
    if (given == 3) {
        train = read_mask(join_path(m.base_dir, m.train_mask_file), m.nodes);
        val = read_mask(join_path(m.base_dir, m.val_mask_file), m.nodes);
        test = read_mask(join_path(m.base_dir, m.test_mask_file), m.nodes);
    } else {
        default_split(m.nodes, m.classes, labels, train, val, test);
    }

    Graph g = build_graph(static_cast<int>(m.nodes), edges, std::move(feats), std::move(labels),
                          m.classes, std::move(train), std::move(val), std::move(test));

    const long undirected = g.undirected_edge_count();
    const long directed = g.directed_edge_count();
    if (m.edges != undirected && m.edges != directed)
        mismatch("edges", std::to_string(m.edges),
                 std::to_string(undirected) + " undirected (" + std::to_string(directed) +
                     " directed)");
    if (m.has_heterophily) {
        const double measured = node_heterophily(g).graph_level;
        if (!(std::fabs(measured - m.heterophily) <= m.heterophily_tolerance)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.4f", measured);
            char want[64];
            std::snprintf(want, sizeof want, "%.4f +- %.4f", m.heterophily,
                          m.heterophily_tolerance);
            mismatch("heterophily", want, buf);
        }
    }
    return g;
}

Graph load_dataset_file(const std::string &manifest_path) {
    return load_dataset(load_manifest(manifest_path));
}

std::string save_dataset(const Graph &g, const std::string &dir, const std::string &name) {
    fs::create_directories(dir);
    const std::string edges_file = name + ".edges.txt";
    const std::string features_file = name + ".features.csv";
    const std::string labels_file = name + ".labels.txt";
    const std::string train_file = name + ".train.txt";
    const std::string val_file = name + ".val.txt";
    const std::string test_file = name + ".test.txt";

    {
        std::ofstream out(fs::path(dir) / edges_file);
        for (int v = 0; v < g.n; ++v)
            for (int e = g.row_ptr[v]; e < g.row_ptr[v + 1]; ++e)
                if (v < g.col_idx[e])
                    out << v << ' ' << g.col_idx[e] << '\n';
    }
    {
        std::ofstream out(fs::path(dir) / features_file);
        for (int v = 0; v < g.n; ++v) {
            const double *row = g.features.row(v);
            for (int c = 0; c < g.feature_dim(); ++c) {
                if (c)
                    out << ',';
                out << format_double(row[c]);
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / labels_file);
        for (int y : g.labels)
            out << y << '\n';
    }
    auto write_mask = [&](const std::string &file, const std::vector<std::uint8_t> &mask) {
        std::ofstream out(fs::path(dir) / file);
        for (int v = 0; v < g.n; ++v)
            if (v < static_cast<int>(mask.size()) && mask[v])
                out << v << '\n';
    };
    write_mask(train_file, g.train_mask);
    write_mask(val_file, g.val_mask);
    write_mask(test_file, g.test_mask);

    nlohmann::json j;
    j["name"] = name;
    j["nodes"] = g.n;
    j["edges"] = g.undirected_edge_count();
    j["classes"] = g.num_classes;
    j["feature_dim"] = g.feature_dim();
    const double het = node_heterophily(g).graph_level;
    if (std::isfinite(het)) {
        j["heterophily"] = het;
        j["heterophily_tolerance"] = 0.02;
    }
    j["edges_file"] = edges_file;
    j["features_file"] = features_file;
    j["features_format"] = "dense";
    j["labels_file"] = labels_file;
    j["train_mask_file"] = train_file;
    j["val_mask_file"] = val_file;
    j["test_mask_file"] = test_file;

    const std::string manifest_path = (fs::path(dir) / (name + ".json")).string();
    std::ofstream out(manifest_path);
    out << j.dump(2) << '\n';
    if (!out)
        throw Error(ErrorCode::ParseError, "cannot write " + manifest_path);
    return manifest_path;
}

} // namespace gpatch
