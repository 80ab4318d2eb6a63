#include "gpatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "gpatch/error.hpp"

namespace gpatch {

namespace {

struct TensorRef {
    std::vector<double> *v;
    bool weight;
};

std::vector<TensorRef> collect(MixerParams &p) {
    std::vector<TensorRef> out;
    for_each_tensor(p, [&](const std::string &, std::vector<double> &vals, bool w) {
        out.push_back(TensorRef{&vals, w});
    });
    return out;
}

std::vector<const std::vector<double> *> collect_const(const MixerParams &p) {
    std::vector<const std::vector<double> *> out;
    for_each_tensor(p, [&](const std::string &, const std::vector<double> &vals, bool) {
        out.push_back(&vals);
    });
    return out;
}

int mask_count(const std::vector<std::uint8_t> &mask) {
    int c = 0;
    for (auto m : mask)
        if (m)
            ++c;
    return c;
}

void require_mask(const std::vector<std::uint8_t> &mask, const char *which) {
    if (mask_count(mask) == 0)
        throw Error(ErrorCode::EmptyMask, std::string(which) + " mask has no nodes");
}

int argmax_row(const Matrix &logits, int row) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
        if (logits(row, c) > logits(row, best))
            best = c;
    return best;
}

} // namespace

void adam_step(MixerParams &params, const MixerParams &grads, AdamState &state, double lr,
               double weight_decay, double beta1, double beta2, double eps) {
    auto pt = collect(params);
    auto gt = collect_const(grads);
    auto mt = collect(state.m);
    auto vt = collect(state.v);
    if (pt.size() != gt.size() || pt.size() != mt.size() || pt.size() != vt.size())
        throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameter layout");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < pt.size(); ++t) {
        auto &p = *pt[t].v;
        const auto &g = *gt[t];
        auto &m = *mt[t].v;
        auto &v = *vt[t].v;
        if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
            throw Error(ErrorCode::ShapeMismatch, "optimizer tensor size mismatch");
        const double wd = pt[t].weight ? weight_decay : 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double step_dir = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            p[i] -= lr * (step_dir + wd * p[i]);
        }
    }
}

double masked_cross_entropy(const Matrix &logits, const std::vector<int> &labels,
                            const std::vector<std::uint8_t> &mask, Matrix *dlogits) {
    const int n = logits.rows();
    const int classes = logits.cols();
    if (static_cast<int>(labels.size()) != n || static_cast<int>(mask.size()) != n)
        throw Error(ErrorCode::ShapeMismatch, "labels or mask length does not match logits");
    const int count = mask_count(mask);
    if (count == 0)
        throw Error(ErrorCode::EmptyMask, "cross entropy over an empty mask");
    if (dlogits)
        *dlogits = Matrix(n, classes);
    double total = 0.0;
    std::vector<double> prob(classes);
    for (int i = 0; i < n; ++i) {
        if (!mask[i])
            continue;
        double mx = logits(i, 0);
        for (int c = 1; c < classes; ++c)
            mx = std::max(mx, logits(i, c));
        double z = 0.0;
        for (int c = 0; c < classes; ++c) {
            prob[c] = std::exp(logits(i, c) - mx);
            z += prob[c];
        }
        total += std::log(z) - (logits(i, labels[i]) - mx);
        if (dlogits) {
            for (int c = 0; c < classes; ++c)
                (*dlogits)(i, c) = (prob[c] / z - (c == labels[i] ? 1.0 : 0.0)) / count;
        }
    }
    return total / count;
}

double masked_accuracy(const Matrix &logits, const std::vector<int> &labels,
                       const std::vector<std::uint8_t> &mask) {
    const int n = logits.rows();
    if (static_cast<int>(labels.size()) != n || static_cast<int>(mask.size()) != n)
        throw Error(ErrorCode::ShapeMismatch, "labels or mask length does not match logits");
    const int count = mask_count(mask);
    if (count == 0)
        throw Error(ErrorCode::EmptyMask, "accuracy over an empty mask");
    int hit = 0;
    for (int i = 0; i < n; ++i)
        if (mask[i] && argmax_row(logits, i) == labels[i])
            ++hit;
    return static_cast<double>(hit) / count;
}

double evaluate(const MixerModel &m, const PatchSet &ps, const Graph &g,
                const std::vector<std::uint8_t> &mask) {
    auto out = mixer_forward(m, ps, false, nullptr);
    return masked_accuracy(out.logits, g.labels, mask);
}

TrainReport train_on_patches(const Graph &g, const PatchSet &ps, const TrainConfig &cfg) {
    require_mask(g.train_mask, "train");
    require_mask(g.val_mask, "val");
    require_mask(g.test_mask, "test");
    const auto t0 = std::chrono::steady_clock::now();

    MixerConfig mc;
    mc.d = g.feature_dim();
    mc.p = ps.p;
    mc.hidden = cfg.hidden;
    mc.classes = g.num_classes;
    mc.layers = cfg.layers;
    mc.dropout = cfg.dropout;
    mc.two_layer_mix = cfg.two_layer_mix;
    mc.residual = cfg.residual;
    mc.aggregate = cfg.aggregate;

    MixerModel model = init_params(mc, cfg.seed);
    AdamState st;
    st.m = make_zero_params(mc);
    st.v = make_zero_params(mc);
    Rng drop_rng(cfg.seed + 0x9e3779b97f4a7c15ULL);

    TrainReport rep;
    MixerParams best = model.params;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;

    for (int e = 1; e <= cfg.max_epochs; ++e) {
        auto fwd = mixer_forward(model, ps, true, &drop_rng);
        Matrix dlogits;
        const double train_loss = masked_cross_entropy(fwd.logits, g.labels, g.train_mask, &dlogits);
        MixerParams grads = mixer_backward(model, fwd.trace, ps, dlogits);
        adam_step(model.params, grads, st, cfg.lr, cfg.weight_decay);

        auto ev = mixer_forward(model, ps, false, nullptr);
        EpochStats es;
        es.epoch = e;
        es.train_loss = train_loss;
        es.train_acc = masked_accuracy(ev.logits, g.labels, g.train_mask);
        es.val_loss = masked_cross_entropy(ev.logits, g.labels, g.val_mask, nullptr);
        es.val_acc = masked_accuracy(ev.logits, g.labels, g.val_mask);
        rep.epochs.push_back(es);

        if (es.val_loss < best_val_loss) {
            best_val_loss = es.val_loss;
            best_epoch = e;
            best = model.params;
        }
        if (e - best_epoch >= cfg.patience)
            break;
    }

    model.params = best;
    rep.best_epoch = best_epoch;
    auto fin = mixer_forward(model, ps, false, nullptr);
    rep.val_accuracy = masked_accuracy(fin.logits, g.labels, g.val_mask);
    rep.test_accuracy = masked_accuracy(fin.logits, g.labels, g.test_mask);
    rep.model = std::move(model);
    rep.extractor_key = ps.cache_key;
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

TrainReport train(const Graph &g, const TrainConfig &cfg) {
    std::vector<FilterSpec> cands =
        cfg.candidates.empty() ? std::vector<FilterSpec>{cfg.extractor} : cfg.candidates;
    TrainReport best;
    bool have = false;
    for (const auto &spec : cands) {
        PatchSet ps = extract_patches(g, spec, cfg.p, cfg.dense_limit);
        if (cfg.shuffle_patches)
            ps = shuffle_patch_order(ps, cfg.seed);
        TrainReport r = train_on_patches(g, ps, cfg);
        r.chosen = spec;
        if (!have || r.val_accuracy > best.val_accuracy) {
            best = std::move(r);
            have = true;
        }
    }
    return best;
}

} // namespace gpatch
