#include "gpatch/ablation.hpp"

#include <chrono>
#include <cmath>

#include "gpatch/csv.hpp"
#include "gpatch/error.hpp"
#include "gpatch/patcher.hpp"
#include "gpatch/synth.hpp"

namespace gpatch {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) { return format_double(v); }

TrainConfig with_seed(const TrainConfig &cfg, std::uint64_t seed) {
    TrainConfig c = cfg;
    c.seed = seed;
    return c;
}

std::vector<double> seed_sweep_on_patches(const Graph &g, const PatchSet &ps,
                                          const TrainConfig &cfg, const AblationOptions &opt) {
    std::vector<double> accs;
    accs.reserve(opt.seeds);
    for (int s = 0; s < opt.seeds; ++s)
        accs.push_back(train_on_patches(g, ps, with_seed(cfg, opt.seed0 + s)).test_accuracy);
    return accs;
}

void push_stat_row(AblationTable &t, std::initializer_list<std::string> prefix,
                   const std::vector<double> &accs) {
    std::vector<std::string> row(prefix);
    row.push_back(std::to_string(accs.size()));
    row.push_back(fmt(mean_of(accs)));
    row.push_back(fmt(sample_std(accs)));
    t.rows.push_back(std::move(row));
}

AblationResult ablate_induced(const Graph &g, const TrainConfig &cfg, const AblationOptions &opt) {
    AblationResult r;
    r.table.columns = {"model", "graph", "seeds", "mean_test_acc", "std_test_acc"};

    PatchSet ps = extract_patches(g, cfg.extractor, cfg.p, cfg.dense_limit);
    Graph induced = induce_graph(g, ps);

    push_stat_row(r.table, {"gpatcher", "original"}, seed_sweep_on_patches(g, ps, cfg, opt));

    std::vector<double> gcn_orig, gcn_ind, mlp_orig;
    for (int s = 0; s < opt.seeds; ++s) {
        const auto c = with_seed(cfg, opt.seed0 + s);
        gcn_orig.push_back(baseline_gcn(g, c).test_accuracy);
        gcn_ind.push_back(baseline_gcn(induced, c).test_accuracy);
        mlp_orig.push_back(baseline_mlp(g, c).test_accuracy);
    }
    push_stat_row(r.table, {"gcn", "original"}, gcn_orig);
    push_stat_row(r.table, {"gcn", "induced"}, gcn_ind);
    push_stat_row(r.table, {"mlp", "original"}, mlp_orig);
    return r;
}

AblationResult ablate_alt_filters(const Graph &g, const TrainConfig &cfg,
                                  const AblationOptions &opt) {
    AblationResult r;
    r.table.columns = {"family", "seeds", "mean_test_acc", "std_test_acc"};
    const std::vector<FilterSpec> families = {
        FilterSpec::geometric(0.5, cfg.K),
        FilterSpec::heat(cfg.K),
        FilterSpec::bandpass(cfg.K),
        FilterSpec::shared(cfg.K),
        FilterSpec::ppr(),
    };
    for (const auto &spec : families) {
        PatchSet ps = extract_patches(g, spec, cfg.p, cfg.dense_limit);
        push_stat_row(r.table, {filter_family_name(spec.family)},
                      seed_sweep_on_patches(g, ps, cfg, opt));
    }
    return r;
}

AblationResult ablate_patch_order(const Graph &g, const TrainConfig &cfg,
                                  const AblationOptions &opt) {
    AblationResult r;
    r.table.columns = {"seed", "ranked", "shuffled"};
    PatchSet ps = extract_patches(g, cfg.extractor, cfg.p, cfg.dense_limit);
    std::vector<double> ranked, shuffled;
    for (int s = 0; s < opt.seeds; ++s) {
        const std::uint64_t seed = opt.seed0 + s;
        const auto c = with_seed(cfg, seed);
        ranked.push_back(train_on_patches(g, ps, c).test_accuracy);
        PatchSet sps = shuffle_patch_order(ps, seed);
        shuffled.push_back(train_on_patches(g, sps, c).test_accuracy);
        r.table.rows.push_back({std::to_string(seed), fmt(ranked.back()), fmt(shuffled.back())});
    }
    r.table.rows.push_back({"mean", fmt(mean_of(ranked)), fmt(mean_of(shuffled))});
    r.table.rows.push_back({"std", fmt(sample_std(ranked)), fmt(sample_std(shuffled))});
    return r;
}

FilterSpec with_filter_count(const FilterSpec &base, int K) {
    switch (base.family) {
    case FilterFamily::Adaptive:
        return FilterSpec::geometric(base.constant_term > 0.0 ? 1.0 - base.constant_term : 0.5, K);
    case FilterFamily::Heat:
        return FilterSpec::heat(K, base.heat_t0);
    case FilterFamily::Bandpass:
        return FilterSpec::bandpass(K, base.band_low, base.band_high);
    case FilterFamily::Shared:
        return FilterSpec::shared(K, base.shared_w);
    case FilterFamily::Ppr:
        return base; // no filter count; grid still runs
    }
    return base;
}

AblationResult ablate_sensitivity(const Graph &g, const TrainConfig &cfg,
                                  const AblationOptions &opt) {
    AblationResult r;
    r.table.columns = {"p", "K", "seeds", "mean_test_acc", "std_test_acc"};
    for (int p : opt.p_grid) {
        for (int K : opt.k_grid) {
            TrainConfig c = cfg;
            c.p = p;
            c.K = K;
            c.extractor = with_filter_count(cfg.extractor, K);
            PatchSet ps = extract_patches(g, c.extractor, p, c.dense_limit);
            push_stat_row(r.table, {std::to_string(p), std::to_string(K)},
                          seed_sweep_on_patches(g, ps, c, opt));
        }
    }
    return r;
}

AblationResult ablate_scalability(const TrainConfig &cfg, const AblationOptions &opt) {
    AblationResult r;
    r.table.columns = {"n", "p", "undirected_edges", "extract_steps", "extract_converged"};
    r.timings.columns = {"n", "p", "extract_seconds", "epoch_seconds"};
    // The grid profiles the walk-based extractor, the variant meant for
    // large graphs; spectral settings in cfg only contribute c/tol.
    const bool walk = cfg.extractor.family == FilterFamily::Ppr;
    const double c = walk ? cfg.extractor.ppr_c : 0.5;
    const double tol = walk ? cfg.extractor.ppr_tol : 1e-8;
    const int max_steps = walk ? cfg.extractor.ppr_max_steps : 1000;
    ScalabilitySuite suite = generate_scalability_suite(opt.sizes, opt.p_grid, opt.seed0);
    for (std::size_t i = 0; i < suite.graphs.size(); ++i) {
        const Graph &g = suite.graphs[i];
        const NormalizedAdjacency adj = normalize_adjacency(g, false);
        for (int p : suite.patch_sizes) {
            const int pe = std::min(p, g.n);
            std::int64_t steps = 0;
            bool converged = true;
            auto t0 = Clock::now();
            PatchSet ps =
                extract_ppr_patches_streaming(adj, g, c, tol, max_steps, pe, &steps, &converged);
            const double extract_s = seconds_since(t0);

            MixerConfig mc;
            mc.d = g.feature_dim();
            mc.p = ps.p;
            mc.hidden = cfg.hidden;
            mc.classes = g.num_classes;
            mc.layers = cfg.layers;
            mc.dropout = cfg.dropout;
            mc.aggregate = cfg.aggregate;
            MixerModel model = init_params(mc, cfg.seed);
            Rng rng(cfg.seed + 1);
            t0 = Clock::now();
            auto fwd = mixer_forward(model, ps, true, &rng);
            Matrix dlogits;
            masked_cross_entropy(fwd.logits, g.labels, g.train_mask, &dlogits);
            mixer_backward(model, fwd.trace, ps, dlogits);
            const double epoch_s = seconds_since(t0);

            r.table.rows.push_back({std::to_string(g.n), std::to_string(pe),
                                    std::to_string(g.undirected_edge_count()),
                                    std::to_string(steps), converged ? "1" : "0"});
            r.timings.rows.push_back({std::to_string(g.n), std::to_string(pe), fmt(extract_s),
                                      fmt(epoch_s)});
        }
    }
    return r;
}

} // namespace

const char *ablation_kind_name(AblationKind k) {
    switch (k) {
    case AblationKind::Induced: return "induced";
    case AblationKind::AltFilters: return "alt_filters";
    case AblationKind::PatchOrder: return "patch_order";
    case AblationKind::Sensitivity: return "sensitivity";
    case AblationKind::Scalability: return "scalability";
    }
    return "?";
}

AblationKind ablation_kind_from_name(const std::string &name) {
    if (name == "induced") return AblationKind::Induced;
    if (name == "alt_filters") return AblationKind::AltFilters;
    if (name == "patch_order") return AblationKind::PatchOrder;
    if (name == "sensitivity") return AblationKind::Sensitivity;
    if (name == "scalability") return AblationKind::Scalability;
    throw Error(ErrorCode::InvalidArgument, "unknown ablation kind: " + name);
}

double mean_of(const std::vector<double> &v) {
    if (v.empty())
        return 0.0;
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / v.size();
}

double sample_std(const std::vector<double> &v) {
    if (v.size() < 2)
        return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
}

AblationResult run_ablation(AblationKind kind, const Graph &g, const TrainConfig &cfg,
                            const AblationOptions &opt) {
    if (opt.seeds < 1)
        throw Error(ErrorCode::InvalidArgument, "need at least one seed");
    switch (kind) {
    case AblationKind::Induced: return ablate_induced(g, cfg, opt);
    case AblationKind::AltFilters: return ablate_alt_filters(g, cfg, opt);
    case AblationKind::PatchOrder: return ablate_patch_order(g, cfg, opt);
    case AblationKind::Sensitivity: return ablate_sensitivity(g, cfg, opt);
    case AblationKind::Scalability: return ablate_scalability(cfg, opt);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown ablation kind");
}

} // namespace gpatch
