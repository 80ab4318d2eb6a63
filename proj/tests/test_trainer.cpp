#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "gpatch/synth.hpp"
#include "gpatch/trainer.hpp"

using namespace gpatch;

namespace {

SynthSpec easy_spec(int n, double h, double snr, std::uint64_t seed) {
    SynthSpec s;
    s.n = n;
    s.classes = 2;
    s.d = 8;
    s.mean_degree = 6.0;
    s.h = h;
    s.snr = snr;
    s.seed = seed;
    return s;
}

TrainConfig small_train(int p, int epochs) {
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    cfg.max_epochs = epochs;
    cfg.patience = epochs;
    cfg.hidden = 16;
    cfg.layers = 2;
    cfg.dropout = 0.0;
    cfg.p = p;
    cfg.seed = 3;
    return cfg;
}

double weight_l2(const MixerModel &m) {
    double s = 0.0;
    MixerParams &params = const_cast<MixerParams &>(m.params);
    for_each_tensor(params, [&](const std::string &, std::vector<double> &v, bool is_w) {
        if (!is_w) return;
        for (double x : v) s += x * x;
    });
    return std::sqrt(s);
}

} // namespace

TEST_CASE("cross entropy and its gradient on a worked example") {
    Matrix logits(2, 2);
    logits(0, 0) = 2.0;
    logits(1, 1) = 2.0;
    const std::vector<int> labels = {0, 1};
    const std::vector<std::uint8_t> mask = {1, 1};
    Matrix dl;
    const double loss = masked_cross_entropy(logits, labels, mask, &dl);
    CHECK(loss == doctest::Approx(0.1269280110429726).epsilon(1e-14));
    CHECK(dl(0, 0) == doctest::Approx(-0.05960146101105879).epsilon(1e-14));
    CHECK(dl(0, 1) == doctest::Approx(0.05960146101105879).epsilon(1e-14));
    CHECK(dl(1, 0) == doctest::Approx(0.05960146101105879).epsilon(1e-14));
    CHECK(dl(1, 1) == doctest::Approx(-0.05960146101105879).epsilon(1e-14));

    // masking node 1 scales the remaining gradient to the new count
    const std::vector<std::uint8_t> m0 = {1, 0};
    Matrix dl0;
    masked_cross_entropy(logits, labels, m0, &dl0);
    CHECK(dl0(0, 0) == doctest::Approx(2.0 * dl(0, 0)).epsilon(1e-14));
    CHECK(dl0(1, 0) == 0.0);
    CHECK(dl0(1, 1) == 0.0);
}

TEST_CASE("loss helpers reject degenerate inputs") {
    Matrix logits(2, 2);
    const std::vector<int> labels = {0, 1};
    CHECK_THROWS_AS(masked_cross_entropy(logits, labels, {0, 0}), Error);
    CHECK_THROWS_AS(masked_cross_entropy(logits, labels, {1}), Error);
    CHECK_THROWS_AS(masked_cross_entropy(logits, {0}, {1, 1}), Error);
    CHECK_THROWS_AS(masked_accuracy(logits, labels, {0, 0}), Error);
}

TEST_CASE("accuracy breaks prediction ties toward the lowest class") {
    Matrix logits(2, 2);
    logits(0, 0) = 1.0;
    logits(0, 1) = 1.0; // tie: predicted class 0
    logits(1, 0) = 1.0;
    logits(1, 1) = 1.0;
    CHECK(masked_accuracy(logits, {0, 1}, {1, 1}) == doctest::Approx(0.5));
    CHECK(masked_accuracy(logits, {0, 0}, {1, 1}) == doctest::Approx(1.0));
}

TEST_CASE("one optimizer step against hand-computed values") {
    MixerConfig mc;
    mc.d = 1;
    mc.p = 1;
    mc.hidden = 1;
    mc.classes = 1;
    mc.layers = 1;

    for (double wd : {0.0, 0.5}) {
        MixerParams params = make_zero_params(mc);
        params.head.w(0, 0) = 1.0;
        MixerParams grads = make_zero_params(mc);
        grads.head.w(0, 0) = 0.5;
        AdamState st{make_zero_params(mc), make_zero_params(mc), 0};
        adam_step(params, grads, st, 0.1, wd);
        CHECK(st.step == 1);
        const double want = wd == 0.0 ? 0.900000002 : 0.8500000019999999;
        CHECK(params.head.w(0, 0) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("weight decay skips biases and layer norms") {
    MixerConfig mc;
    mc.d = 1;
    mc.p = 1;
    mc.hidden = 1;
    mc.classes = 1;
    mc.layers = 1;
    MixerParams params = make_zero_params(mc);
    params.head.w(0, 0) = 1.0;
    params.head.b[0] = 1.0;
    params.layers[0].ln_feat.gamma[0] = 1.0;
    MixerParams grads = make_zero_params(mc);
    AdamState st{make_zero_params(mc), make_zero_params(mc), 0};
    adam_step(params, grads, st, 0.1, 0.5);
    CHECK(params.head.w(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(params.head.b[0] == 1.0);
    CHECK(params.layers[0].ln_feat.gamma[0] == 1.0);
}

TEST_CASE("well-separated classes are learned to high accuracy") {
    Graph g = generate_synthetic(easy_spec(120, 0.5, 8.0, 5));
    TrainConfig cfg = small_train(4, 120);
    PatchSet ps = extract_patches(g, cfg.extractor, cfg.p);
    TrainReport rep = train_on_patches(g, ps, cfg);
    CHECK(evaluate(rep.model, ps, g, g.train_mask) >= 0.95);
    CHECK(rep.test_accuracy >= 0.9);
    CHECK(rep.val_accuracy >= 0.9);
    // training moved the loss
    CHECK(rep.epochs.front().train_loss > rep.epochs.back().train_loss);
}

TEST_CASE("patience zero stops after one epoch") {
    Graph g = generate_synthetic(easy_spec(60, 0.5, 4.0, 7));
    TrainConfig cfg = small_train(4, 50);
    cfg.patience = 0;
    PatchSet ps = extract_patches(g, cfg.extractor, cfg.p);
    TrainReport rep = train_on_patches(g, ps, cfg);
    CHECK(rep.epochs.size() == 1);
    CHECK(rep.best_epoch == 1);
}

TEST_CASE("training is reproducible end to end") {
    Graph g = generate_synthetic(easy_spec(80, 0.5, 2.0, 11));
    TrainConfig cfg = small_train(4, 30);
    cfg.dropout = 0.5; // exercise the stochastic path too
    PatchSet ps = extract_patches(g, cfg.extractor, cfg.p);
    TrainReport a = train_on_patches(g, ps, cfg);
    TrainReport b = train_on_patches(g, ps, cfg);
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        CHECK(a.epochs[i].train_loss == b.epochs[i].train_loss);
        CHECK(a.epochs[i].val_loss == b.epochs[i].val_loss);
    }
    CHECK(a.test_accuracy == b.test_accuracy);
    CHECK(a.best_epoch == b.best_epoch);
    CHECK(a.extractor_key == b.extractor_key);
}

TEST_CASE("the restored checkpoint is the validation loss minimizer") {
    Graph g = generate_synthetic(easy_spec(100, 0.5, 1.5, 13));
    TrainConfig cfg = small_train(4, 60);
    PatchSet ps = extract_patches(g, cfg.extractor, cfg.p);
    TrainReport rep = train_on_patches(g, ps, cfg);
    int arg = 0;
    double best = rep.epochs[0].val_loss;
    for (std::size_t i = 1; i < rep.epochs.size(); ++i)
        if (rep.epochs[i].val_loss < best) {
            best = rep.epochs[i].val_loss;
            arg = static_cast<int>(i);
        }
    CHECK(rep.best_epoch == rep.epochs[arg].epoch);
    CHECK(rep.best_epoch == arg + 1); // epochs are 1-based and in order
}

TEST_CASE("weight decay shrinks the learned weights") {
    Graph g = generate_synthetic(easy_spec(100, 0.5, 2.0, 17));
    TrainConfig cfg = small_train(4, 60);
    PatchSet ps = extract_patches(g, cfg.extractor, cfg.p);
    TrainReport plain = train_on_patches(g, ps, cfg);
    cfg.weight_decay = 0.1;
    TrainReport decayed = train_on_patches(g, ps, cfg);
    CHECK(weight_l2(decayed.model) < weight_l2(plain.model));
}

TEST_CASE("attribute baseline solves one-hot label features") {
    const int n = 40, C = 2;
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    std::vector<int> labels(n);
    Matrix feats(n, C);
    for (int v = 0; v < n; ++v) {
        labels[v] = v % C;
        feats(v, labels[v]) = 1.0;
    }
    std::vector<std::uint8_t> train(n, 0), val(n, 0), test(n, 0);
    for (int v = 0; v < n; ++v) (v % 3 == 0 ? train : v % 3 == 1 ? val : test)[v] = 1;
    Graph g = build_graph(n, edges, std::move(feats), std::move(labels), C, train, val, test);

    TrainConfig cfg = small_train(4, 80);
    TrainReport rep = baseline_mlp(g, cfg);
    CHECK(rep.test_accuracy >= 0.95);
    CHECK(rep.extractor_key == "mlp");
}

TEST_CASE("convolution baseline prefers homophilic graphs") {
    auto mean_acc = [&](double h) {
        double acc = 0.0;
        for (std::uint64_t seed : {1, 2, 3}) {
            SynthSpec s;
            s.n = 300;
            s.classes = 3;
            s.d = 8;
            s.mean_degree = 10.0;
            s.h = h;
            s.snr = 1.0;
            s.seed = seed;
            Graph g = generate_synthetic(s);
            TrainConfig cfg = small_train(4, 80);
            cfg.seed = seed;
            TrainReport rep = baseline_gcn(g, cfg);
            CHECK(rep.extractor_key == "gcn");
            acc += rep.test_accuracy;
        }
        return acc / 3.0;
    };
    CHECK(mean_acc(0.05) > mean_acc(0.95));
}

TEST_CASE("the search entry point equals extraction plus the cache path") {
    Graph g = generate_synthetic(easy_spec(90, 0.5, 2.0, 19));
    TrainConfig cfg = small_train(4, 40);
    TrainReport via_search = train(g, cfg);
    PatchSet ps = extract_patches(g, cfg.extractor, cfg.p, cfg.dense_limit);
    TrainReport direct = train_on_patches(g, ps, cfg);
    CHECK(via_search.test_accuracy == direct.test_accuracy);
    CHECK(via_search.best_epoch == direct.best_epoch);
    CHECK(via_search.extractor_key == direct.extractor_key);
    REQUIRE(via_search.epochs.size() == direct.epochs.size());
    for (std::size_t i = 0; i < via_search.epochs.size(); ++i)
        CHECK(via_search.epochs[i].val_loss == direct.epochs[i].val_loss);
}

TEST_CASE("candidate ties keep the earliest extractor") {
    Graph g = generate_synthetic(easy_spec(80, 0.5, 2.0, 23));
    TrainConfig cfg = small_train(4, 30);
    // same walk, different tolerance: identical patches, distinct keys
    cfg.candidates = {FilterSpec::ppr(0.5, 1e-8), FilterSpec::ppr(0.5, 1e-9)};
    const std::string k0 = patch_cache_key(g, cfg.candidates[0], cfg.p);
    const std::string k1 = patch_cache_key(g, cfg.candidates[1], cfg.p);
    REQUIRE(k0 != k1);
    TrainReport rep = train(g, cfg);
    CHECK(rep.extractor_key == k0);
}
