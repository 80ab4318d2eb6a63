#include "gpatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "gpatch/error.hpp"
#include "gpatch/rng.hpp"

namespace gpatch {

namespace {

bool mask_empty(const std::vector<std::uint8_t> &mask) {
    for (auto m : mask)
        if (m)
            return false;
    return true;
}

struct Dense {
    Matrix w;
    std::vector<double> b;
};

struct Net {
    Dense l1, l2;
};

Dense make_dense(int in, int out, Rng &rng) {
    Dense d;
    d.w = Matrix(in, out);
    const double bound = std::sqrt(6.0 / (in + out));
    for (auto &v : d.w.data())
        v = rng.uniform(-bound, bound);
    d.b.assign(out, 0.0);
    return d;
}

Matrix adj_matmul(const NormalizedAdjacency &a, const Matrix &x) {
    Matrix y(a.n, x.cols());
    for (int i = 0; i < a.n; ++i) {
        double *dst = y.row(i);
        for (int e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e) {
            const double w = a.values[e];
            const double *src = x.row(a.col_idx[e]);
            for (int c = 0; c < x.cols(); ++c)
                dst[c] += w * src[c];
        }
    }
    return y;
}

Matrix dense_forward(const Matrix &x, const Dense &d) {
    Matrix z = matmul(x, d.w);
    for (int i = 0; i < z.rows(); ++i) {
        double *r = z.row(i);
        for (int c = 0; c < z.cols(); ++c)
            r[c] += d.b[c];
    }
    return z;
}

// A^T * B, used for weight gradients.
Matrix matmul_at(const Matrix &a, const Matrix &b) {
    Matrix out(a.cols(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        const double *ar = a.row(i);
        const double *br = b.row(i);
        for (int k = 0; k < a.cols(); ++k) {
            const double v = ar[k];
            if (v == 0.0)
                continue;
            double *or_ = out.row(k);
            for (int c = 0; c < b.cols(); ++c)
                or_[c] += v * br[c];
        }
    }
    return out;
}

std::vector<double> colsum(const Matrix &m) {
    std::vector<double> s(m.cols(), 0.0);
    for (int i = 0; i < m.rows(); ++i) {
        const double *r = m.row(i);
        for (int c = 0; c < m.cols(); ++c)
            s[c] += r[c];
    }
    return s;
}

struct AdamBuf {
    std::vector<double> m, v;
};

void adam_tensor(std::vector<double> &p, const std::vector<double> &g, AdamBuf &buf, long step,
                 double lr, double wd) {
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (buf.m.size() != p.size()) {
        buf.m.assign(p.size(), 0.0);
        buf.v.assign(p.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < p.size(); ++i) {
        buf.m[i] = beta1 * buf.m[i] + (1.0 - beta1) * g[i];
        buf.v[i] = beta2 * buf.v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * ((buf.m[i] / bc1) / (std::sqrt(buf.v[i] / bc2) + eps) + wd * p[i]);
    }
}

struct NetGrads {
    Matrix dw1, dw2;
    std::vector<double> db1, db2;
};

struct BaselineTrace {
    Matrix z1;                       // pre-activation of layer 1
    std::vector<std::uint8_t> keep;  // dropout mask over relu output
    Matrix mixed;                    // input to layer 2 (post dropout, post propagation)
};

// One forward pass. `prop` is null for the attribute-only baseline and
// the propagation operator for the graph-convolution one.
Matrix net_forward(const Net &net, const Matrix &x, const NormalizedAdjacency *prop,
                   double dropout, bool training, Rng *rng, BaselineTrace *trace) {
    Matrix in1 = prop ? adj_matmul(*prop, x) : x;
    Matrix z1 = dense_forward(in1, net.l1);
    Matrix act = z1;
    for (auto &v : act.data())
        v = std::max(0.0, v);
    std::vector<std::uint8_t> keep;
    if (training && dropout > 0.0) {
        keep.resize(act.data().size());
        const double scale = 1.0 / (1.0 - dropout);
        for (std::size_t i = 0; i < keep.size(); ++i) {
            keep[i] = rng->uniform() >= dropout ? 1 : 0;
            act.data()[i] = keep[i] ? act.data()[i] * scale : 0.0;
        }
    }
    Matrix mixed = prop ? adj_matmul(*prop, act) : act;
    if (trace) {
        trace->z1 = std::move(z1);
        trace->keep = std::move(keep);
        trace->mixed = mixed;
    }
    return dense_forward(mixed, net.l2);
}

NetGrads net_backward(const Net &net, const Matrix &x, const NormalizedAdjacency *prop,
                      double dropout, const BaselineTrace &trace, const Matrix &dlogits) {
    NetGrads g;
    g.db2 = colsum(dlogits);
    g.dw2 = matmul_at(trace.mixed, dlogits);
    Matrix dmixed = matmul_bt(dlogits, net.l2.w);
    Matrix dact = prop ? adj_matmul(*prop, dmixed) : std::move(dmixed);
    if (!trace.keep.empty()) {
        const double scale = 1.0 / (1.0 - dropout);
        for (std::size_t i = 0; i < dact.data().size(); ++i)
            dact.data()[i] = trace.keep[i] ? dact.data()[i] * scale : 0.0;
    }
    for (std::size_t i = 0; i < dact.data().size(); ++i)
        if (trace.z1.data()[i] <= 0.0)
            dact.data()[i] = 0.0;
    g.db1 = colsum(dact);
    Matrix in1 = prop ? adj_matmul(*prop, x) : x;
    g.dw1 = matmul_at(in1, dact);
    return g;
}

TrainReport run_baseline(const Graph &g, const TrainConfig &cfg, const NormalizedAdjacency *prop,
                         const char *tag) {
    if (mask_empty(g.train_mask))
        throw Error(ErrorCode::EmptyMask, "train mask has no nodes");
    if (mask_empty(g.val_mask))
        throw Error(ErrorCode::EmptyMask, "val mask has no nodes");
    if (mask_empty(g.test_mask))
        throw Error(ErrorCode::EmptyMask, "test mask has no nodes");
    const auto t0 = std::chrono::steady_clock::now();

    Rng init_rng(cfg.seed);
    Net net;
    net.l1 = make_dense(g.feature_dim(), cfg.hidden, init_rng);
    net.l2 = make_dense(cfg.hidden, g.num_classes, init_rng);
    Rng drop_rng(cfg.seed + 0x9e3779b97f4a7c15ULL);

    AdamBuf bw1, bb1, bw2, bb2;
    long step = 0;

    TrainReport rep;
    Net best = net;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;

    for (int e = 1; e <= cfg.max_epochs; ++e) {
        BaselineTrace trace;
        Matrix logits = net_forward(net, g.features, prop, cfg.dropout, true, &drop_rng, &trace);
        Matrix dlogits;
        const double train_loss = masked_cross_entropy(logits, g.labels, g.train_mask, &dlogits);
        NetGrads grads = net_backward(net, g.features, prop, cfg.dropout, trace, dlogits);
        ++step;
        adam_tensor(net.l1.w.data(), grads.dw1.data(), bw1, step, cfg.lr, cfg.weight_decay);
        adam_tensor(net.l1.b, grads.db1, bb1, step, cfg.lr, 0.0);
        adam_tensor(net.l2.w.data(), grads.dw2.data(), bw2, step, cfg.lr, cfg.weight_decay);
        adam_tensor(net.l2.b, grads.db2, bb2, step, cfg.lr, 0.0);

        Matrix ev = net_forward(net, g.features, prop, cfg.dropout, false, nullptr, nullptr);
        EpochStats es;
        es.epoch = e;
        es.train_loss = train_loss;
        es.train_acc = masked_accuracy(ev, g.labels, g.train_mask);
        es.val_loss = masked_cross_entropy(ev, g.labels, g.val_mask, nullptr);
        es.val_acc = masked_accuracy(ev, g.labels, g.val_mask);
        rep.epochs.push_back(es);

        if (es.val_loss < best_val_loss) {
            best_val_loss = es.val_loss;
            best_epoch = e;
            best = net;
        }
        if (e - best_epoch >= cfg.patience)
            break;
    }

    net = best;
    rep.best_epoch = best_epoch;
    Matrix fin = net_forward(net, g.features, prop, cfg.dropout, false, nullptr, nullptr);
    rep.val_accuracy = masked_accuracy(fin, g.labels, g.val_mask);
    rep.test_accuracy = masked_accuracy(fin, g.labels, g.test_mask);
    rep.extractor_key = tag;
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

} // namespace

TrainReport baseline_mlp(const Graph &g, const TrainConfig &cfg) {
    return run_baseline(g, cfg, nullptr, "mlp");
}

TrainReport baseline_gcn(const Graph &g, const TrainConfig &cfg) {
    NormalizedAdjacency prop = normalize_adjacency(g, true);
    return run_baseline(g, cfg, &prop, "gcn");
}

} // namespace gpatch
