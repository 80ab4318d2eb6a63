#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpatch/ablation.hpp"
#include "gpatch/bounds_reference.hpp"
#include "gpatch/csv.hpp"
#include "gpatch/dataset.hpp"
#include "gpatch/error.hpp"
#include "gpatch/filters.hpp"
#include "gpatch/graph.hpp"
#include "gpatch/mixer.hpp"
#include "gpatch/patcher.hpp"
#include "gpatch/serialize.hpp"
#include "gpatch/spectral.hpp"
#include "gpatch/synth.hpp"
#include "gpatch/trainer.hpp"

namespace {

using namespace gpatch;
namespace fs = std::filesystem;

std::string g_invocation;

int exit_code_for(ErrorCode c) {
    switch (c) {
    case ErrorCode::ParseError: return 3;
    case ErrorCode::ManifestMismatch: return 4;
    case ErrorCode::DimensionTooLarge: return 5;
    case ErrorCode::InvalidBand: return 6;
    case ErrorCode::DegenerateBound: return 7;
    case ErrorCode::EmptyIndexSet: return 8;
    case ErrorCode::NoConvergence: return 9;
    case ErrorCode::ShapeMismatch: return 10;
    case ErrorCode::EmptyMask: return 11;
    case ErrorCode::InfeasibleSpec: return 12;
    case ErrorCode::InvalidArgument: return 13;
    }
    return 2;
}

/// Violation found by verify-bounds; maps to exit code 1.
struct BoundViolation {
    std::string what;
};

std::string resolve_manifest(const std::string &arg) {
    if (fs::exists(arg))
        return arg;
    const char *dir = std::getenv("GPATCHER_DATA_DIR");
    if (dir && *dir) {
        const fs::path base(dir);
        if (fs::exists(base / arg))
            return (base / arg).string();
        if (fs::exists(base / (arg + ".json")))
            return (base / (arg + ".json")).string();
    }
    return arg; // let the loader report the failure
}

nlohmann::json load_config_file(const std::string &path) {
    if (path.empty())
        return nlohmann::json::object();
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::ParseError, "cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception &e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    if (!j.is_object())
        throw Error(ErrorCode::ParseError, path + ": config must be a JSON object");
    return j;
}

/// Flag > config file > default: an option the user did not pass on the
/// command line picks up the config-file value when one exists.
struct ConfigLayer {
    nlohmann::json j;

    template <typename T>
    void fill(CLI::Option *opt, const char *key, T &value) const {
        if (opt != nullptr && opt->count() > 0)
            return;
        if (!j.contains(key))
            return;
        try {
            value = j.at(key).get<T>();
        } catch (const nlohmann::json::exception &e) {
            throw Error(ErrorCode::ParseError, std::string("config key '") + key + "': " + e.what());
        }
    }
};

void write_config_echo(const std::string &out_path, const std::string &command,
                       const nlohmann::json &resolved) {
    if (out_path.empty())
        return;
    nlohmann::json j;
    j["command"] = command;
    j["invocation"] = g_invocation;
    j["resolved"] = resolved;
    const std::string path = out_path + ".config.json";
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out)
        throw Error(ErrorCode::ParseError, "cannot write " + path);
}

// ---------------------------------------------------------------- options

struct GraphOpts {
    std::string manifest;
    bool synth = false;
    SynthSpec spec;

    CLI::Option *o_manifest = nullptr;
    CLI::Option *o_n = nullptr, *o_classes = nullptr, *o_d = nullptr, *o_deg = nullptr,
                *o_h = nullptr, *o_snr = nullptr, *o_gseed = nullptr;

    void add(CLI::App *app) {
        o_manifest = app->add_option("--manifest", manifest, "dataset manifest (path or name under GPATCHER_DATA_DIR)");
        auto *s = app->add_flag("--synth", synth, "use a generated graph instead of a manifest");
        (void)s;
        o_n = app->add_option("--n", spec.n, "synthetic node count");
        o_classes = app->add_option("--classes", spec.classes, "synthetic class count");
        o_d = app->add_option("--d", spec.d, "synthetic feature width");
        o_deg = app->add_option("--mean-degree", spec.mean_degree, "synthetic mean degree");
        o_h = app->add_option("--h", spec.h, "inter-class edge probability");
        o_snr = app->add_option("--snr", spec.snr, "feature signal-to-noise");
        o_gseed = app->add_option("--graph-seed", spec.seed, "synthetic graph seed");
    }

    void fill(const ConfigLayer &cfg) {
        cfg.fill(o_manifest, "manifest", manifest);
        cfg.fill(o_n, "n", spec.n);
        cfg.fill(o_classes, "classes", spec.classes);
        cfg.fill(o_d, "d", spec.d);
        cfg.fill(o_deg, "mean_degree", spec.mean_degree);
        cfg.fill(o_h, "h", spec.h);
        cfg.fill(o_snr, "snr", spec.snr);
        cfg.fill(o_gseed, "graph_seed", spec.seed);
    }

    Graph load(std::string *label = nullptr) const {
        if (!manifest.empty()) {
            const std::string path = resolve_manifest(manifest);
            if (label)
                *label = fs::path(path).stem().string();
            return load_dataset_file(path);
        }
        if (!synth || spec.n <= 0)
            throw Error(ErrorCode::InvalidArgument, "need --manifest or --synth with --n");
        if (label)
            *label = "synthetic";
        return generate_synthetic(spec);
    }

    nlohmann::json echo() const {
        nlohmann::json j;
        if (!manifest.empty()) {
            j["manifest"] = manifest;
        } else {
            j["synth"] = {{"n", spec.n},       {"classes", spec.classes},
                          {"d", spec.d},       {"mean_degree", spec.mean_degree},
                          {"h", spec.h},       {"snr", spec.snr},
                          {"seed", spec.seed}};
        }
        return j;
    }
};

struct ExtractorOpts {
    std::string family = "adaptive";
    int K = 100;
    double c = 0.5;
    double tol = 1e-8;
    int max_steps = 1000;
    double t0 = 0.1;
    double band_low = -1.0;
    double band_high = 1.0;
    double shared_w = 1.0;
    std::string weights;
    bool relu = false;

    CLI::Option *o_family = nullptr, *o_k = nullptr, *o_c = nullptr, *o_tol = nullptr,
                *o_steps = nullptr, *o_t0 = nullptr, *o_low = nullptr, *o_high = nullptr,
                *o_sw = nullptr, *o_w = nullptr;

    void add(CLI::App *app) {
        o_family = app->add_option("--extractor", family,
                                   "filter family: adaptive|heat|bandpass|shared|ppr");
        o_k = app->add_option("--K", K, "filter count");
        o_c = app->add_option("--c", c, "walk restart/decay constant");
        o_tol = app->add_option("--tol", tol, "walk iteration tolerance");
        o_steps = app->add_option("--max-steps", max_steps, "walk iteration cap");
        o_t0 = app->add_option("--t0", t0, "heat schedule step");
        o_low = app->add_option("--band-low", band_low, "bandpass lower edge");
        o_high = app->add_option("--band-high", band_high, "bandpass upper edge");
        o_sw = app->add_option("--shared-w", shared_w, "shared scalar weight");
        o_w = app->add_option("--weights", weights, "comma list of adaptive weights (k = 1..K)");
        app->add_flag("--relu", relu, "apply relu inside the filter sum");
    }

    void fill(const ConfigLayer &cfg) {
        cfg.fill(o_family, "extractor", family);
        cfg.fill(o_k, "K", K);
        cfg.fill(o_c, "c", c);
        cfg.fill(o_tol, "tol", tol);
        cfg.fill(o_steps, "max_steps", max_steps);
        cfg.fill(o_t0, "t0", t0);
        cfg.fill(o_low, "band_low", band_low);
        cfg.fill(o_high, "band_high", band_high);
        cfg.fill(o_sw, "shared_w", shared_w);
        cfg.fill(o_w, "weights", weights);
    }

    FilterSpec build() const {
        FilterSpec s;
        const FilterFamily fam = filter_family_from_name(family);
        switch (fam) {
        case FilterFamily::Adaptive:
            if (!weights.empty()) {
                std::vector<double> w;
                std::stringstream ss(weights);
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    try {
                        std::size_t used = 0;
                        w.push_back(std::stod(tok, &used));
                        if (used != tok.size())
                            throw std::invalid_argument(tok);
                    } catch (const std::exception &) {
                        throw Error(ErrorCode::ParseError, "bad weight: '" + tok + "'");
                    }
                }
                s = FilterSpec::adaptive(std::move(w));
            } else {
                s = FilterSpec::geometric(c, K);
            }
            break;
        case FilterFamily::Heat: s = FilterSpec::heat(K, t0); break;
        case FilterFamily::Bandpass: s = FilterSpec::bandpass(K, band_low, band_high); break;
        case FilterFamily::Shared: s = FilterSpec::shared(K, shared_w); break;
        case FilterFamily::Ppr: s = FilterSpec::ppr(c, tol, max_steps); break;
        }
        if (relu)
            s.sigma = Sigma::Relu;
        return s;
    }
};

struct TrainOpts {
    double lr = 0.005;
    double weight_decay = 5e-4;
    int max_epochs = 500;
    int patience = 50;
    int hidden = 64;
    int layers = 2;
    double dropout = 0.5;
    int p = 32;
    std::uint64_t seed = 0;
    int seeds = 1;
    int jobs = 1;
    std::string aggregate = "mean";
    bool two_layer_mix = false;
    bool residual = false;
    bool shuffle_patches = false;
    int dense_limit = kDefaultDenseLimit;

    CLI::Option *o_lr = nullptr, *o_wd = nullptr, *o_epochs = nullptr, *o_patience = nullptr,
                *o_hidden = nullptr, *o_layers = nullptr, *o_dropout = nullptr, *o_p = nullptr,
                *o_seed = nullptr, *o_seeds = nullptr, *o_jobs = nullptr, *o_agg = nullptr,
                *o_limit = nullptr;

    void add(CLI::App *app) {
        o_lr = app->add_option("--lr", lr, "learning rate");
        o_wd = app->add_option("--weight-decay", weight_decay, "decoupled weight decay");
        o_epochs = app->add_option("--max-epochs", max_epochs, "epoch cap");
        o_patience = app->add_option("--patience", patience, "early-stop patience");
        o_hidden = app->add_option("--hidden", hidden, "hidden width");
        o_layers = app->add_option("--layers", layers, "mixer layer count");
        o_dropout = app->add_option("--dropout", dropout, "dropout rate");
        o_p = app->add_option("--p", p, "patch size");
        o_seed = app->add_option("--seed", seed, "base seed");
        o_seeds = app->add_option("--seeds", seeds, "number of seeds to sweep");
        o_jobs = app->add_option("--jobs", jobs, "concurrent seed jobs");
        o_agg = app->add_option("--aggregate", aggregate, "patch aggregation: mean|sum|max");
        app->add_flag("--two-layer-mix", two_layer_mix, "two-linear mixing blocks");
        app->add_flag("--residual", residual, "residual feature mixing");
        app->add_flag("--shuffle-patches", shuffle_patches, "shuffle patch order before training");
        o_limit = app->add_option("--dense-limit", dense_limit, "dense eigendecomposition cap");
    }

    void fill(const ConfigLayer &cfg) {
        cfg.fill(o_lr, "lr", lr);
        cfg.fill(o_wd, "weight_decay", weight_decay);
        cfg.fill(o_epochs, "max_epochs", max_epochs);
        cfg.fill(o_patience, "patience", patience);
        cfg.fill(o_hidden, "hidden", hidden);
        cfg.fill(o_layers, "layers", layers);
        cfg.fill(o_dropout, "dropout", dropout);
        cfg.fill(o_p, "p", p);
        cfg.fill(o_seed, "seed", seed);
        cfg.fill(o_seeds, "seeds", seeds);
        cfg.fill(o_jobs, "jobs", jobs);
        cfg.fill(o_agg, "aggregate", aggregate);
        cfg.fill(o_limit, "dense_limit", dense_limit);
    }

    TrainConfig build(const FilterSpec &extractor, int K) const {
        TrainConfig c;
        c.lr = lr;
        c.weight_decay = weight_decay;
        c.max_epochs = max_epochs;
        c.patience = patience;
        c.hidden = hidden;
        c.layers = layers;
        c.dropout = dropout;
        c.p = p;
        c.K = K;
        c.seed = seed;
        c.extractor = extractor;
        c.aggregate = aggregate_from_name(aggregate);
        c.two_layer_mix = two_layer_mix;
        c.residual = residual;
        c.dense_limit = dense_limit;
        c.shuffle_patches = shuffle_patches;
        return c;
    }

    nlohmann::json echo() const {
        return {{"lr", lr},
                {"weight_decay", weight_decay},
                {"max_epochs", max_epochs},
                {"patience", patience},
                {"hidden", hidden},
                {"layers", layers},
                {"dropout", dropout},
                {"p", p},
                {"seed", seed},
                {"seeds", seeds},
                {"jobs", jobs},
                {"aggregate", aggregate},
                {"two_layer_mix", two_layer_mix},
                {"residual", residual},
                {"shuffle_patches", shuffle_patches},
                {"dense_limit", dense_limit}};
    }
};

// ------------------------------------------------------------- seed sweep

struct SweepOutcome {
    std::vector<TrainReport> reports; // one per seed, in seed order
};

/// Runs the seed sweep with patches extracted once per candidate and
/// shared across seeds. `jobs` > 1 distributes seeds over threads; rows
/// stay in seed order, so output is independent of scheduling.
SweepOutcome run_sweep(const Graph &g, const TrainConfig &cfg, const std::string &model,
                       int seeds, int jobs, const PatchSet *preloaded) {
    SweepOutcome out;
    out.reports.resize(seeds);

    std::vector<std::pair<FilterSpec, PatchSet>> psets;
    if (model == "gpatcher") {
        if (preloaded) {
            psets.emplace_back(cfg.extractor, *preloaded);
        } else {
            std::vector<FilterSpec> cands =
                cfg.candidates.empty() ? std::vector<FilterSpec>{cfg.extractor} : cfg.candidates;
            for (const auto &spec : cands)
                psets.emplace_back(spec, extract_patches(g, spec, cfg.p, cfg.dense_limit));
        }
    }

    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;

    auto worker = [&]() {
        while (true) {
            const int s = next.fetch_add(1);
            if (s >= seeds)
                return;
            try {
                TrainConfig c = cfg;
                c.seed = cfg.seed + static_cast<std::uint64_t>(s);
                if (model == "mlp") {
                    out.reports[s] = baseline_mlp(g, c);
                } else if (model == "gcn") {
                    out.reports[s] = baseline_gcn(g, c);
                } else {
                    TrainReport best;
                    bool have = false;
                    for (const auto &[spec, ps] : psets) {
                        TrainReport r;
                        if (c.shuffle_patches) {
                            PatchSet sps = shuffle_patch_order(ps, c.seed);
                            r = train_on_patches(g, sps, c);
                        } else {
                            r = train_on_patches(g, ps, c);
                        }
                        r.chosen = spec;
                        if (!have || r.val_accuracy > best.val_accuracy) {
                            best = std::move(r);
                            have = true;
                        }
                    }
                    out.reports[s] = std::move(best);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error)
                    first_error = std::current_exception();
                return;
            }
        }
    };

    const int nthreads = std::max(1, std::min(jobs, seeds));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back(worker);
        for (auto &t : pool)
            t.join();
    }
    if (first_error)
        std::rethrow_exception(first_error);
    return out;
}

void write_sweep_csv(const std::string &path, const SweepOutcome &sweep, std::uint64_t seed0) {
    CsvWriter csv(path, g_invocation,
                  {"row", "seed", "epochs", "best_epoch", "val_acc", "test_acc"});
    std::vector<double> val, test;
    for (std::size_t s = 0; s < sweep.reports.size(); ++s) {
        const auto &r = sweep.reports[s];
        val.push_back(r.val_accuracy);
        test.push_back(r.test_accuracy);
        csv.write_row({"run", std::to_string(seed0 + s), std::to_string(r.epochs.size()),
                       std::to_string(r.best_epoch), CsvWriter::cell(r.val_accuracy),
                       CsvWriter::cell(r.test_accuracy)});
    }
    csv.write_row({"mean", "", "", "", CsvWriter::cell(mean_of(val)), CsvWriter::cell(mean_of(test))});
    csv.write_row({"std", "", "", "", CsvWriter::cell(sample_std(val)), CsvWriter::cell(sample_std(test))});
}

// ------------------------------------------------------------ subcommands

struct AnalyzeCmd {
    GraphOpts graph;
    std::string out, checkpoint, config;
    int dense_limit = kDefaultDenseLimit;
    CLI::Option *o_limit = nullptr;

    void run() {
        ConfigLayer cfg{load_config_file(config)};
        graph.fill(cfg);
        cfg.fill(o_limit, "dense_limit", dense_limit);

        std::string label;
        Graph g = graph.load(&label);
        HeterophilyVector het = node_heterophily(g);

        std::string lam_min, lam_max, mean_resp;
        if (g.n <= dense_limit) {
            NormalizedAdjacency adj = normalize_adjacency(g, false);
            SpectralDecomposition s = eigendecompose(adj, dense_limit);
            lam_min = CsvWriter::cell(s.lambdas.front());
            lam_max = CsvWriter::cell(s.lambdas.back());
            if (!checkpoint.empty()) {
                Checkpoint ck = load_checkpoint(checkpoint);
                FrequencyResponse fr = frequency_response(ck.extractor, s.lambdas);
                double sum = 0.0;
                for (double v : fr.g)
                    sum += v;
                mean_resp = CsvWriter::cell(sum / fr.g.size());
            }
        }

        CsvWriter csv(out, g_invocation,
                      {"name", "nodes", "undirected_edges", "directed_edges", "classes",
                       "feature_dim", "heterophily_defined", "heterophily_mean", "lambda_min",
                       "lambda_max", "mean_response"});
        csv.write_row({label, std::to_string(g.n), std::to_string(g.undirected_edge_count()),
                       std::to_string(g.directed_edge_count()), std::to_string(g.num_classes),
                       std::to_string(g.feature_dim()), std::to_string(het.defined_count),
                       het.defined_count > 0 ? CsvWriter::cell(het.graph_level) : std::string(),
                       lam_min, lam_max, mean_resp});

        nlohmann::json echo = graph.echo();
        echo["checkpoint"] = checkpoint;
        echo["dense_limit"] = dense_limit;
        write_config_echo(out, "analyze", echo);
    }
};

struct ExtractCmd {
    GraphOpts graph;
    ExtractorOpts extractor;
    std::string out, config;
    int p = 32;
    int dense_limit = kDefaultDenseLimit;
    CLI::Option *o_p = nullptr, *o_limit = nullptr;

    void run() {
        ConfigLayer cfg{load_config_file(config)};
        graph.fill(cfg);
        extractor.fill(cfg);
        cfg.fill(o_p, "p", p);
        cfg.fill(o_limit, "dense_limit", dense_limit);

        Graph g = graph.load();
        FilterSpec spec = extractor.build();
        PatchSet ps = extract_patches(g, spec, p, dense_limit);
        save_patchset(ps, out);
        std::cerr << "extracted " << g.n << " patches of size " << ps.p << " -> " << out << "\n";

        nlohmann::json echo = graph.echo();
        echo["extractor"] = filter_spec_to_json(spec);
        echo["p"] = p;
        echo["dense_limit"] = dense_limit;
        write_config_echo(out, "extract", echo);
    }
};

struct TrainCmd {
    GraphOpts graph;
    ExtractorOpts extractor;
    TrainOpts topts;
    std::string out, config, patches, save_ckpt;
    std::string model = "gpatcher";
    CLI::Option *o_model = nullptr;

    void run() {
        ConfigLayer cfg{load_config_file(config)};
        graph.fill(cfg);
        extractor.fill(cfg);
        topts.fill(cfg);
        cfg.fill(o_model, "model", model);
        if (model != "gpatcher" && model != "mlp" && model != "gcn")
            throw Error(ErrorCode::InvalidArgument, "unknown model: " + model);

        Graph g = graph.load();
        FilterSpec spec = extractor.build();
        TrainConfig tc = topts.build(spec, extractor.K);

        PatchSet loaded;
        const PatchSet *pre = nullptr;
        if (!patches.empty()) {
            loaded = load_patchset(patches, g);
            pre = &loaded;
        }

        SweepOutcome sweep = run_sweep(g, tc, model, topts.seeds, topts.jobs, pre);
        write_sweep_csv(out, sweep, topts.seed);

        if (!save_ckpt.empty() && model == "gpatcher") {
            std::size_t best = 0;
            for (std::size_t s = 1; s < sweep.reports.size(); ++s)
                if (sweep.reports[s].val_accuracy > sweep.reports[best].val_accuracy)
                    best = s;
            save_checkpoint(sweep.reports[best].model, sweep.reports[best].chosen, save_ckpt);
            std::cerr << "checkpoint (seed " << (topts.seed + best) << ") -> " << save_ckpt << "\n";
        }

        nlohmann::json echo = graph.echo();
        echo["model"] = model;
        echo["extractor"] = filter_spec_to_json(spec);
        echo["train"] = topts.echo();
        echo["patches"] = patches;
        write_config_echo(out, "train", echo);
    }
};

struct AblateCmd {
    GraphOpts graph;
    ExtractorOpts extractor;
    TrainOpts topts;
    std::string kind, out, config;
    std::vector<int> p_grid = {8, 16, 32, 64};
    std::vector<int> k_grid = {10, 50, 100, 200};
    std::vector<int> sizes = {10, 100, 1000, 10000};
    CLI::Option *o_pg = nullptr, *o_kg = nullptr, *o_sizes = nullptr;

    void run() {
        ConfigLayer cfg{load_config_file(config)};
        graph.fill(cfg);
        extractor.fill(cfg);
        topts.fill(cfg);
        cfg.fill(o_pg, "p_grid", p_grid);
        cfg.fill(o_kg, "k_grid", k_grid);
        cfg.fill(o_sizes, "sizes", sizes);

        const AblationKind k = ablation_kind_from_name(kind);
        Graph g;
        if (k != AblationKind::Scalability)
            g = graph.load();

        AblationOptions opt;
        opt.seeds = topts.seeds;
        opt.seed0 = topts.seed;
        opt.p_grid = p_grid;
        opt.k_grid = k_grid;
        opt.sizes = sizes;

        TrainConfig tc = topts.build(extractor.build(), extractor.K);
        AblationResult res = run_ablation(k, g, tc, opt);

        CsvWriter csv(out, g_invocation, res.table.columns);
        for (const auto &row : res.table.rows)
            csv.write_row(row);
        if (!res.timings.rows.empty()) {
            // wall-clock numbers vary run to run; keep them out of the csv
            const std::string tpath = out + ".timings.txt";
            std::ofstream tout(tpath);
            tout << "# " << g_invocation << "\n";
            for (std::size_t i = 0; i < res.timings.columns.size(); ++i)
                tout << (i ? "," : "") << res.timings.columns[i];
            tout << "\n";
            for (const auto &row : res.timings.rows) {
                for (std::size_t i = 0; i < row.size(); ++i)
                    tout << (i ? "," : "") << row[i];
                tout << "\n";
            }
        }

        nlohmann::json echo = graph.echo();
        echo["kind"] = kind;
        echo["extractor"] = filter_spec_to_json(tc.extractor);
        echo["train"] = topts.echo();
        echo["p_grid"] = p_grid;
        echo["k_grid"] = k_grid;
        echo["sizes"] = sizes;
        write_config_echo(out, "ablate", echo);
    }
};

struct VerifyCmd {
    int trials = 100;
    int n = 30;
    std::uint64_t seed = 0;
    std::string out, config;
    CLI::Option *o_trials = nullptr, *o_n = nullptr, *o_seed = nullptr;

    void run() {
        ConfigLayer cfg{load_config_file(config)};
        cfg.fill(o_trials, "trials", trials);
        cfg.fill(o_n, "n", n);
        cfg.fill(o_seed, "seed", seed);
        if (trials < 1)
            throw Error(ErrorCode::InvalidArgument, "need trials >= 1");
        if (n < 1)
            throw Error(ErrorCode::InvalidArgument, "need n >= 1");

        std::unique_ptr<CsvWriter> csv;
        if (!out.empty())
            csv = std::make_unique<CsvWriter>(
                out, g_invocation,
                std::vector<std::string>{"dataset", "filter_family", "lhs", "rhs", "holds",
                                         "excluded"});

        int passed = 0, degenerate = 0, failed = 0;
        const char *families[] = {"adaptive", "heat", "bandpass", "shared", "ppr"};

        for (int t = 0; t < trials; ++t) {
            Rng rng(seed + static_cast<std::uint64_t>(t) * 0x9e3779b97f4a7c15ULL + 1);
            SynthSpec sp;
            sp.n = n;
            sp.classes = n == 1 ? 1 : 2 + rng.uniform_index(3);
            if (sp.classes > sp.n)
                sp.classes = sp.n;
            sp.d = sp.classes + 2;
            sp.mean_degree = std::min<double>(n - 1, 2.0 + rng.uniform() * 6.0);
            sp.h = sp.classes == 1 ? 0.0 : rng.uniform();
            sp.snr = 1.0 + rng.uniform();
            sp.seed = rng.next_u64();
            sp.train_frac = 0.4;
            sp.val_frac = 0.3;
            sp.test_frac = 0.3;
            Graph g = generate_synthetic(sp);

            NormalizedAdjacency adj = normalize_adjacency(g, false);
            SpectralDecomposition sd = eigendecompose(adj);
            HeterophilyVector hv = node_heterophily(g);
            std::vector<double> h_hat = spectral_heterophily(hv, sd);

            const int fam_idx = rng.uniform_index(5);
            FilterSpec fspec = FilterSpec::geometric(0.3 + 0.5 * rng.uniform(), 4);
            switch (fam_idx) {
            case 1: fspec = FilterSpec::heat(4, 0.05 + rng.uniform() * 0.3); break;
            case 2: fspec = FilterSpec::bandpass(2 + rng.uniform_index(4)); break;
            case 3: fspec = FilterSpec::shared(4, 0.2 + rng.uniform()); break;
            case 4: fspec = FilterSpec::ppr(0.2 + 0.6 * rng.uniform()); break;
            default: break;
            }
            FrequencyResponse fr = frequency_response(fspec, sd.lambdas);
            // rescale into the premise range [0, 2]
            double lo = fr.g[0], hi = fr.g[0];
            for (double v : fr.g) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            for (double &v : fr.g)
                v = hi > lo ? 0.05 + 1.9 * (v - lo) / (hi - lo) : 1.0;

            auto ref = reference::mean_bound_eval(fr.g, h_hat);
            bool prod_degenerate = false;
            ResponseMeanBound prod;
            try {
                prod = response_mean_bound(fr, h_hat);
            } catch (const Error &e) {
                if (e.code() != ErrorCode::DegenerateBound)
                    throw;
                prod_degenerate = true;
            }

            std::string lhs_s, rhs_s, holds_s;
            if (prod_degenerate != ref.degenerate) {
                ++failed;
                holds_s = "disagree";
            } else if (prod_degenerate) {
                ++degenerate;
                holds_s = "degenerate";
                lhs_s = CsvWriter::cell(ref.lhs);
            } else {
                const double tol_lr = 1e-9 * std::max(1.0, std::fabs(ref.rhs));
                const bool match = std::fabs(prod.lhs - ref.lhs) <= 1e-9 &&
                                   std::fabs(prod.rhs - ref.rhs) <= tol_lr &&
                                   prod.holds == ref.holds;
                if (match && prod.holds) {
                    ++passed;
                } else {
                    ++failed;
                }
                lhs_s = CsvWriter::cell(prod.lhs);
                rhs_s = CsvWriter::cell(prod.rhs);
                holds_s = prod.holds ? "true" : "false";
            }

            if (csv)
                csv->write_row({"synth" + std::to_string(t), families[fam_idx], lhs_s, rhs_s,
                                holds_s, std::to_string(ref.excluded)});

            // error-term route comparison on the same spectrum
            std::vector<double> gl(sd.lambdas.size()), delta(sd.lambdas.size()),
                eta(sd.lambdas.size());
            std::vector<double> shifted(sd.lambdas.size());
            for (std::size_t i = 0; i < shifted.size(); ++i)
                shifted[i] = 1.0 - sd.lambdas[i];
            gl = frequency_response(fspec, shifted).g;
            for (std::size_t i = 0; i < delta.size(); ++i) {
                delta[i] = rng.uniform() < 0.15 ? 0.0 : rng.uniform(-1.0, 1.0);
                eta[i] = rng.uniform() < 0.15 ? 0.0 : rng.uniform(-1.0, 1.0);
            }
            auto eref = reference::error_term_eval(gl, delta, eta, h_hat);
            bool prod_empty = false, prod_deg = false;
            ErrorTermBound eprod;
            try {
                FrequencyResponse fg;
                fg.g = gl;
                fg.family = fspec.family;
                eprod = error_term_bound(fg, delta, eta, h_hat);
            } catch (const Error &e) {
                if (e.code() == ErrorCode::EmptyIndexSet)
                    prod_empty = true;
                else if (e.code() == ErrorCode::DegenerateBound)
                    prod_deg = true;
                else
                    throw;
            }
            if (prod_empty != eref.empty || prod_deg != eref.degenerate) {
                ++failed;
            } else if (!prod_empty && !prod_deg) {
                const double vt = 1e-9 * std::max(1.0, std::fabs(eref.value));
                if (std::fabs(eprod.value - eref.value) > vt ||
                    std::fabs(eprod.min_coef - eref.min_coef) > 1e-9)
                    ++failed;
            }
        }

        std::cout << passed << " passed, " << degenerate << " degenerate-skipped, " << failed
                  << " failed\n";
        if (!out.empty()) {
            nlohmann::json echo = {{"trials", trials}, {"n", n}, {"seed", seed}};
            write_config_echo(out, "verify-bounds", echo);
        }
        if (failed > 0)
            throw BoundViolation{"bound violations: " + std::to_string(failed)};
    }
};

struct SynthCmd {
    SynthSpec spec;
    std::string out, name = "synthetic", config;
    CLI::Option *o_n = nullptr, *o_classes = nullptr, *o_d = nullptr, *o_deg = nullptr,
                *o_h = nullptr, *o_snr = nullptr, *o_seed = nullptr, *o_tf = nullptr,
                *o_vf = nullptr, *o_ef = nullptr;

    void run() {
        ConfigLayer cfg{load_config_file(config)};
        cfg.fill(o_n, "n", spec.n);
        cfg.fill(o_classes, "classes", spec.classes);
        cfg.fill(o_d, "d", spec.d);
        cfg.fill(o_deg, "mean_degree", spec.mean_degree);
        cfg.fill(o_h, "h", spec.h);
        cfg.fill(o_snr, "snr", spec.snr);
        cfg.fill(o_seed, "seed", spec.seed);
        cfg.fill(o_tf, "train_frac", spec.train_frac);
        cfg.fill(o_vf, "val_frac", spec.val_frac);
        cfg.fill(o_ef, "test_frac", spec.test_frac);

        Graph g = generate_synthetic(spec);
        const std::string manifest = save_dataset(g, out, name);
        std::cout << manifest << "\n";

        nlohmann::json echo = {{"n", spec.n},
                               {"classes", spec.classes},
                               {"d", spec.d},
                               {"mean_degree", spec.mean_degree},
                               {"h", spec.h},
                               {"snr", spec.snr},
                               {"seed", spec.seed},
                               {"train_frac", spec.train_frac},
                               {"val_frac", spec.val_frac},
                               {"test_frac", spec.test_frac},
                               {"name", name}};
        write_config_echo((fs::path(out) / name).string(), "synth", echo);
    }
};

struct ScalabilityCmd {
    TrainOpts topts;
    ExtractorOpts extractor;
    std::string out, config;
    std::vector<int> sizes = {10, 100, 1000, 10000};
    std::vector<int> p_grid = {8, 16, 32, 64};
    CLI::Option *o_sizes = nullptr, *o_pg = nullptr;

    void run() {
        ConfigLayer cfg{load_config_file(config)};
        topts.fill(cfg);
        extractor.fill(cfg);
        cfg.fill(o_sizes, "sizes", sizes);
        cfg.fill(o_pg, "p_grid", p_grid);

        AblationOptions opt;
        opt.seeds = 1;
        opt.seed0 = topts.seed;
        opt.p_grid = p_grid;
        opt.sizes = sizes;

        FilterSpec spec = extractor.build();
        if (spec.family != FilterFamily::Ppr)
            spec = FilterSpec::ppr(extractor.c, extractor.tol, extractor.max_steps);
        TrainConfig tc = topts.build(spec, extractor.K);

        Graph dummy;
        AblationResult res = run_ablation(AblationKind::Scalability, dummy, tc, opt);

        CsvWriter csv(out, g_invocation, res.table.columns);
        for (const auto &row : res.table.rows)
            csv.write_row(row);
        const std::string tpath = out + ".timings.txt";
        std::ofstream tout(tpath);
        tout << "# " << g_invocation << "\n";
        for (std::size_t i = 0; i < res.timings.columns.size(); ++i)
            tout << (i ? "," : "") << res.timings.columns[i];
        tout << "\n";
        for (const auto &row : res.timings.rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                tout << (i ? "," : "") << row[i];
            tout << "\n";
        }

        nlohmann::json echo = {{"sizes", sizes}, {"p_grid", p_grid}, {"seed", topts.seed}};
        echo["extractor"] = filter_spec_to_json(spec);
        write_config_echo(out, "scalability", echo);
    }
};

} // namespace

int main(int argc, char **argv) {
    for (int i = 0; i < argc; ++i) {
        if (i)
            g_invocation += ' ';
        g_invocation += argv[i];
    }

    CLI::App app{"heterophily-aware patch extraction and mixing for node classification"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "print help");

    auto analyze = std::make_shared<AnalyzeCmd>();
    {
        CLI::App *sub = app.add_subcommand("analyze", "dataset heterophily and spectrum summary");
        sub->set_help_flag("--help", "print help");
        analyze->graph.add(sub);
        sub->add_option("--out", analyze->out, "output csv")->required();
        sub->add_option("--checkpoint", analyze->checkpoint, "trained checkpoint for mean response");
        sub->add_option("--config", analyze->config, "json config file");
        analyze->o_limit = sub->add_option("--dense-limit", analyze->dense_limit,
                                           "dense eigendecomposition cap");
        sub->callback([analyze] { analyze->run(); });
    }

    auto extract = std::make_shared<ExtractCmd>();
    {
        CLI::App *sub = app.add_subcommand("extract", "extract and cache patches");
        sub->set_help_flag("--help", "print help");
        extract->graph.add(sub);
        extract->extractor.add(sub);
        extract->o_p = sub->add_option("--p", extract->p, "patch size");
        sub->add_option("--out", extract->out, "output patch json")->required();
        sub->add_option("--config", extract->config, "json config file");
        extract->o_limit =
            sub->add_option("--dense-limit", extract->dense_limit, "dense eigendecomposition cap");
        sub->callback([extract] { extract->run(); });
    }

    auto train = std::make_shared<TrainCmd>();
    {
        CLI::App *sub = app.add_subcommand("train", "train the classifier or a baseline");
        sub->set_help_flag("--help", "print help");
        train->graph.add(sub);
        train->extractor.add(sub);
        train->topts.add(sub);
        train->o_model = sub->add_option("--model", train->model, "gpatcher|mlp|gcn");
        sub->add_option("--patches", train->patches, "pre-extracted patch json");
        sub->add_option("--save-checkpoint", train->save_ckpt, "write best-seed checkpoint here");
        sub->add_option("--out", train->out, "output csv")->required();
        sub->add_option("--config", train->config, "json config file");
        sub->callback([train] { train->run(); });
    }

    auto ablate = std::make_shared<AblateCmd>();
    {
        CLI::App *sub = app.add_subcommand("ablate", "run an ablation protocol");
        sub->set_help_flag("--help", "print help");
        sub->add_option("kind", ablate->kind,
                        "induced|alt_filters|patch_order|sensitivity|scalability")
            ->required();
        ablate->graph.add(sub);
        ablate->extractor.add(sub);
        ablate->topts.add(sub);
        ablate->o_pg = sub->add_option("--p-grid", ablate->p_grid, "patch sizes")->delimiter(',');
        ablate->o_kg = sub->add_option("--k-grid", ablate->k_grid, "filter counts")->delimiter(',');
        ablate->o_sizes = sub->add_option("--sizes", ablate->sizes, "node counts")->delimiter(',');
        sub->add_option("--out", ablate->out, "output csv")->required();
        sub->add_option("--config", ablate->config, "json config file");
        sub->callback([ablate] { ablate->run(); });
    }

    auto verify = std::make_shared<VerifyCmd>();
    {
        CLI::App *sub = app.add_subcommand("verify-bounds", "numeric checks of the two bounds");
        sub->set_help_flag("--help", "print help");
        verify->o_trials = sub->add_option("--trials", verify->trials, "trial count");
        verify->o_n = sub->add_option("--n", verify->n, "graph size per trial");
        verify->o_seed = sub->add_option("--seed", verify->seed, "base seed");
        sub->add_option("--out", verify->out, "optional per-trial csv");
        sub->add_option("--config", verify->config, "json config file");
        sub->callback([verify] { verify->run(); });
    }

    auto synth = std::make_shared<SynthCmd>();
    {
        CLI::App *sub = app.add_subcommand("synth", "generate and save a synthetic dataset");
        sub->set_help_flag("--help", "print help");
        synth->o_n = sub->add_option("--n", synth->spec.n, "node count")->required();
        synth->o_classes = sub->add_option("--classes", synth->spec.classes, "class count");
        synth->o_d = sub->add_option("--d", synth->spec.d, "feature width");
        synth->o_deg = sub->add_option("--mean-degree", synth->spec.mean_degree, "mean degree");
        synth->o_h = sub->add_option("--h", synth->spec.h, "inter-class edge probability");
        synth->o_snr = sub->add_option("--snr", synth->spec.snr, "signal-to-noise");
        synth->o_seed = sub->add_option("--seed", synth->spec.seed, "seed");
        synth->o_tf = sub->add_option("--train-frac", synth->spec.train_frac, "train fraction");
        synth->o_vf = sub->add_option("--val-frac", synth->spec.val_frac, "val fraction");
        synth->o_ef = sub->add_option("--test-frac", synth->spec.test_frac, "test fraction");
        sub->add_option("--out", synth->out, "output directory")->required();
        sub->add_option("--name", synth->name, "dataset name");
        sub->add_option("--config", synth->config, "json config file");
        sub->callback([synth] { synth->run(); });
    }

    auto scal = std::make_shared<ScalabilityCmd>();
    {
        CLI::App *sub = app.add_subcommand("scalability", "size/patch grid timing protocol");
        sub->set_help_flag("--help", "print help");
        scal->topts.add(sub);
        scal->extractor.add(sub);
        scal->o_sizes = sub->add_option("--sizes", scal->sizes, "node counts")->delimiter(',');
        scal->o_pg = sub->add_option("--p-grid", scal->p_grid, "patch sizes")->delimiter(',');
        sub->add_option("--out", scal->out, "output csv")->required();
        sub->add_option("--config", scal->config, "json config file");
        sub->callback([scal] { scal->run(); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    } catch (const BoundViolation &v) {
        std::cerr << v.what << "\n";
        return 1;
    } catch (const Error &e) {
        std::cerr << "error (" << error_code_name(e.code()) << "): " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
