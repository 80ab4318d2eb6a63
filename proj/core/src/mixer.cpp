#include "gpatch/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gpatch/error.hpp"
#include "gpatch/serialize.hpp"

namespace gpatch {

const char *aggregate_name(Aggregate a) {
    switch (a) {
    case Aggregate::Mean: return "mean";
    case Aggregate::Sum: return "sum";
    case Aggregate::Max: return "max";
    }
    return "?";
}

Aggregate aggregate_from_name(const std::string &name) {
    if (name == "mean") return Aggregate::Mean;
    if (name == "sum") return Aggregate::Sum;
    if (name == "max") return Aggregate::Max;
    throw Error(ErrorCode::InvalidArgument, "unknown aggregation: " + name);
}

namespace {

int feature_in_width(const MixerConfig &cfg, int layer) {
    return layer == 0 ? cfg.d : cfg.hidden;
}

LinearParams zero_linear(int in, int out) {
    LinearParams l;
    l.w = Matrix(in, out);
    l.b.assign(static_cast<std::size_t>(out), 0.0);
    return l;
}

LayerNormParams zero_ln(int dim) {
    LayerNormParams ln;
    ln.gamma.assign(static_cast<std::size_t>(dim), 0.0);
    ln.beta.assign(static_cast<std::size_t>(dim), 0.0);
    return ln;
}

void glorot_fill(Matrix &w, Rng &rng) {
    const double a = std::sqrt(6.0 / (w.rows() + w.cols()));
    for (double &v : w.data()) v = rng.uniform(-a, a);
}

/// y = gamma * xhat + beta per row; xhat and 1/std cached.
void layer_norm_forward(const std::vector<double> &x, int rows, int dim,
                        const LayerNormParams &ln, double eps, std::vector<double> &y,
                        std::vector<double> &xhat, std::vector<double> &rstd) {
    y.resize(x.size());
    xhat.resize(x.size());
    rstd.resize(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const double *xr = &x[static_cast<std::size_t>(r) * dim];
        double mean = 0.0;
        for (int j = 0; j < dim; ++j) mean += xr[j];
        mean /= dim;
        double var = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= dim;
        const double rs = 1.0 / std::sqrt(var + eps);
        rstd[r] = rs;
        double *xh = &xhat[static_cast<std::size_t>(r) * dim];
        double *yr = &y[static_cast<std::size_t>(r) * dim];
        for (int j = 0; j < dim; ++j) {
            xh[j] = (xr[j] - mean) * rs;
            yr[j] = ln.gamma[j] * xh[j] + ln.beta[j];
        }
    }
}

void layer_norm_backward(const std::vector<double> &dy, const std::vector<double> &xhat,
                         const std::vector<double> &rstd, int rows, int dim,
                         const LayerNormParams &ln, std::vector<double> &dx,
                         LayerNormParams &dln) {
    dx.resize(dy.size());
    for (int r = 0; r < rows; ++r) {
        const double *dyr = &dy[static_cast<std::size_t>(r) * dim];
        const double *xh = &xhat[static_cast<std::size_t>(r) * dim];
        double *dxr = &dx[static_cast<std::size_t>(r) * dim];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double gj = dyr[j] * ln.gamma[j];
            sum_g += gj;
            sum_gx += gj * xh[j];
            dln.gamma[j] += dyr[j] * xh[j];
            dln.beta[j] += dyr[j];
        }
        const double mg = sum_g / dim;
        const double mgx = sum_gx / dim;
        for (int j = 0; j < dim; ++j)
            dxr[j] = (dyr[j] * ln.gamma[j] - mg - xh[j] * mgx) * rstd[r];
    }
}

/// z = x * W + b over rows.
void feature_linear_forward(const std::vector<double> &x, int rows, const LinearParams &l,
                            std::vector<double> &z) {
    const int in = l.w.rows(), out = l.w.cols();
    z.assign(static_cast<std::size_t>(rows) * out, 0.0);
    for (int r = 0; r < rows; ++r) {
        const double *xr = &x[static_cast<std::size_t>(r) * in];
        double *zr = &z[static_cast<std::size_t>(r) * out];
        for (int j = 0; j < out; ++j) zr[j] = l.b[j];
        for (int i = 0; i < in; ++i) {
            const double xi = xr[i];
            if (xi == 0.0) continue;
            const double *wrow = l.w.row(i);
            for (int j = 0; j < out; ++j) zr[j] += xi * wrow[j];
        }
    }
}

void feature_linear_backward(const std::vector<double> &dz, const std::vector<double> &x,
                             int rows, const LinearParams &l, std::vector<double> &dx,
                             LinearParams &dl) {
    const int in = l.w.rows(), out = l.w.cols();
    dx.assign(static_cast<std::size_t>(rows) * in, 0.0);
    for (int r = 0; r < rows; ++r) {
        const double *dzr = &dz[static_cast<std::size_t>(r) * out];
        const double *xr = &x[static_cast<std::size_t>(r) * in];
        double *dxr = &dx[static_cast<std::size_t>(r) * in];
        for (int j = 0; j < out; ++j) dl.b[j] += dzr[j];
        for (int i = 0; i < in; ++i) {
            const double *wrow = l.w.row(i);
            double *dwrow = dl.w.row(i);
            double acc = 0.0;
            const double xi = xr[i];
            for (int j = 0; j < out; ++j) {
                acc += wrow[j] * dzr[j];
                dwrow[j] += xi * dzr[j];
            }
            dxr[i] = acc;
        }
    }
}

/// z[v,s',j] = sum_s W(s',s) x[v,s,j] + b[s'] for each node block.
void patch_linear_forward(const std::vector<double> &x, int n, int p, int width,
                          const LinearParams &l, std::vector<double> &z) {
    z.assign(x.size(), 0.0);
    for (int v = 0; v < n; ++v) {
        const double *xv = &x[static_cast<std::size_t>(v) * p * width];
        double *zv = &z[static_cast<std::size_t>(v) * p * width];
        for (int sp = 0; sp < p; ++sp) {
            double *zrow = zv + static_cast<std::size_t>(sp) * width;
            const double *wrow = l.w.row(sp);
            for (int j = 0; j < width; ++j) zrow[j] = l.b[sp];
            for (int s = 0; s < p; ++s) {
                const double w = wrow[s];
                if (w == 0.0) continue;
                const double *xrow = xv + static_cast<std::size_t>(s) * width;
                for (int j = 0; j < width; ++j) zrow[j] += w * xrow[j];
            }
        }
    }
}

void patch_linear_backward(const std::vector<double> &dz, const std::vector<double> &x, int n,
                           int p, int width, const LinearParams &l, std::vector<double> &dx,
                           LinearParams &dl) {
    dx.assign(x.size(), 0.0);
    for (int v = 0; v < n; ++v) {
        const double *dzv = &dz[static_cast<std::size_t>(v) * p * width];
        const double *xv = &x[static_cast<std::size_t>(v) * p * width];
        double *dxv = &dx[static_cast<std::size_t>(v) * p * width];
        for (int sp = 0; sp < p; ++sp) {
            const double *dzrow = dzv + static_cast<std::size_t>(sp) * width;
            const double *wrow = l.w.row(sp);
            double *dwrow = dl.w.row(sp);
            double bsum = 0.0;
            for (int j = 0; j < width; ++j) bsum += dzrow[j];
            dl.b[sp] += bsum;
            for (int s = 0; s < p; ++s) {
                const double *xrow = xv + static_cast<std::size_t>(s) * width;
                double *dxrow = dxv + static_cast<std::size_t>(s) * width;
                const double w = wrow[s];
                double acc = 0.0;
                for (int j = 0; j < width; ++j) {
                    acc += xrow[j] * dzrow[j];
                    dxrow[j] += w * dzrow[j];
                }
                dwrow[s] += acc;
            }
        }
    }
}

void relu_inplace(std::vector<double> &x) {
    for (double &v : x)
        if (v < 0.0) v = 0.0;
}

void relu_backward_inplace(std::vector<double> &d, const std::vector<double> &z) {
    for (std::size_t i = 0; i < d.size(); ++i)
        if (z[i] <= 0.0) d[i] = 0.0;
}

void dropout_forward(std::vector<double> &x, double rate, Rng &rng,
                     std::vector<std::uint8_t> &mask) {
    mask.resize(x.size());
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool keep = rng.uniform() >= rate;
        mask[i] = keep;
        x[i] = keep ? x[i] * scale : 0.0;
    }
}

void dropout_backward(std::vector<double> &d, const std::vector<std::uint8_t> &mask,
                      double rate) {
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask[i] ? d[i] * scale : 0.0;
}

} // namespace

MixerParams make_zero_params(const MixerConfig &cfg) {
    if (cfg.d <= 0 || cfg.p <= 0 || cfg.hidden <= 0 || cfg.classes <= 0 || cfg.layers <= 0)
        throw Error(ErrorCode::InvalidArgument, "mixer config: dimensions must be positive");
    MixerParams params;
    params.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (int i = 0; i < cfg.layers; ++i) {
        auto &l = params.layers[i];
        const int in = feature_in_width(cfg, i);
        l.ln_feat = zero_ln(in);
        l.feat1 = zero_linear(in, cfg.hidden);
        if (cfg.two_layer_mix) l.feat2 = zero_linear(cfg.hidden, cfg.hidden);
        l.ln_patch = zero_ln(cfg.hidden);
        l.patch1 = zero_linear(cfg.p, cfg.p);
        if (cfg.two_layer_mix) l.patch2 = zero_linear(cfg.p, cfg.p);
    }
    params.head = zero_linear(cfg.hidden, cfg.classes);
    return params;
}

MixerModel init_params(const MixerConfig &cfg, std::uint64_t seed) {
    MixerModel m;
    m.config = cfg;
    m.params = make_zero_params(cfg);
    Rng rng(seed);
    for (auto &l : m.params.layers) {
        std::fill(l.ln_feat.gamma.begin(), l.ln_feat.gamma.end(), 1.0);
        std::fill(l.ln_patch.gamma.begin(), l.ln_patch.gamma.end(), 1.0);
        glorot_fill(l.feat1.w, rng);
        if (cfg.two_layer_mix) glorot_fill(l.feat2.w, rng);
        glorot_fill(l.patch1.w, rng);
        if (cfg.two_layer_mix) glorot_fill(l.patch2.w, rng);
    }
    glorot_fill(m.params.head.w, rng);
    return m;
}

ForwardResult mixer_forward(const MixerModel &m, const PatchSet &ps, bool training, Rng *rng) {
    const MixerConfig &cfg = m.config;
    if (ps.p != cfg.p) throw Error(ErrorCode::ShapeMismatch, "mixer_forward: patch size mismatch");
    if (ps.features.rows() != ps.n * ps.p || ps.features.cols() != cfg.d)
        throw Error(ErrorCode::ShapeMismatch, "mixer_forward: feature tensor shape mismatch");
    const bool use_dropout = training && cfg.dropout > 0.0;
    if (use_dropout && !rng)
        throw Error(ErrorCode::InvalidArgument, "mixer_forward: dropout needs an rng");

    const int n = ps.n, p = cfg.p, h = cfg.hidden;
    const int rows = n * p;

    ForwardResult res;
    res.trace.training = training;
    res.trace.rows = rows;
    res.trace.steps.resize(static_cast<std::size_t>(2 * cfg.layers));

    // Entry masking: padding slots contribute zeros regardless of content.
    std::vector<double> x(ps.features.data());
    for (int r = 0; r < rows; ++r)
        if (!ps.valid[r]) std::fill_n(x.begin() + static_cast<std::size_t>(r) * cfg.d, cfg.d, 0.0);

    std::vector<double> y, act;
    int dim = cfg.d;
    for (int layer = 0; layer < cfg.layers; ++layer) {
        const auto &lp = m.params.layers[layer];

        // Feature mixing.
        StepTrace &ft = res.trace.steps[2 * layer];
        layer_norm_forward(x, rows, dim, lp.ln_feat, cfg.ln_eps, y, ft.xhat, ft.rstd);
        feature_linear_forward(y, rows, lp.feat1, ft.z1);
        if (cfg.two_layer_mix) {
            ft.a1 = ft.z1;
            relu_inplace(ft.a1);
            feature_linear_forward(ft.a1, rows, lp.feat2, ft.z2);
            act = ft.z2;
        } else {
            act = ft.z1;
        }
        relu_inplace(act);
        if (use_dropout) dropout_forward(act, cfg.dropout, *rng, ft.drop_mask);
        if (cfg.residual && dim == h)
            for (std::size_t i = 0; i < act.size(); ++i) act[i] += x[i];
        x.swap(act);
        dim = h;

        // Patch mixing.
        StepTrace &pt = res.trace.steps[2 * layer + 1];
        layer_norm_forward(x, rows, dim, lp.ln_patch, cfg.ln_eps, y, pt.xhat, pt.rstd);
        patch_linear_forward(y, n, p, dim, lp.patch1, pt.z1);
        if (cfg.two_layer_mix) {
            pt.a1 = pt.z1;
            relu_inplace(pt.a1);
            patch_linear_forward(pt.a1, n, p, dim, lp.patch2, pt.z2);
            act = pt.z2;
        } else {
            act = pt.z1;
        }
        relu_inplace(act);
        if (use_dropout) dropout_forward(act, cfg.dropout, *rng, pt.drop_mask);
        if (cfg.residual)
            for (std::size_t i = 0; i < act.size(); ++i) act[i] += x[i];
        x.swap(act);
    }

    // Aggregate over valid slots.
    ForwardTrace &tr = res.trace;
    tr.agg.assign(static_cast<std::size_t>(n) * h, 0.0);
    if (cfg.aggregate == Aggregate::Max) tr.agg_pick.assign(static_cast<std::size_t>(n) * h, -1);
    tr.agg_count.assign(static_cast<std::size_t>(n), 0.0);
    for (int v = 0; v < n; ++v) {
        int count = 0;
        double *av = &tr.agg[static_cast<std::size_t>(v) * h];
        for (int s = 0; s < p; ++s) {
            const int slot = v * p + s;
            if (!ps.valid[slot]) continue;
            ++count;
            const double *xr = &x[static_cast<std::size_t>(slot) * h];
            if (cfg.aggregate == Aggregate::Max) {
                int *pick = &tr.agg_pick[static_cast<std::size_t>(v) * h];
                for (int j = 0; j < h; ++j)
                    if (pick[j] < 0 || xr[j] > av[j]) {
                        av[j] = xr[j];
                        pick[j] = s;
                    }
            } else {
                for (int j = 0; j < h; ++j) av[j] += xr[j];
            }
        }
        tr.agg_count[v] = count;
        if (cfg.aggregate == Aggregate::Mean && count > 0)
            for (int j = 0; j < h; ++j) av[j] /= count;
    }

    res.logits = Matrix(n, cfg.classes);
    for (int v = 0; v < n; ++v) {
        const double *av = &tr.agg[static_cast<std::size_t>(v) * h];
        double *lv = res.logits.row(v);
        for (int cidx = 0; cidx < cfg.classes; ++cidx) lv[cidx] = m.params.head.b[cidx];
        for (int j = 0; j < h; ++j) {
            const double aj = av[j];
            if (aj == 0.0) continue;
            const double *wrow = m.params.head.w.row(j);
            for (int cidx = 0; cidx < cfg.classes; ++cidx) lv[cidx] += aj * wrow[cidx];
        }
    }
    return res;
}

MixerParams mixer_backward(const MixerModel &m, const ForwardTrace &trace, const PatchSet &ps,
                           const Matrix &dlogits) {
    const MixerConfig &cfg = m.config;
    const int n = ps.n, p = cfg.p, h = cfg.hidden;
    const int rows = n * p;
    if (dlogits.rows() != n || dlogits.cols() != cfg.classes)
        throw Error(ErrorCode::ShapeMismatch, "mixer_backward: dlogits shape mismatch");
    if (trace.rows != rows)
        throw Error(ErrorCode::ShapeMismatch, "mixer_backward: trace does not match patch set");
    const bool use_dropout = trace.training && cfg.dropout > 0.0;

    MixerParams grads = make_zero_params(cfg);

    // Head.
    std::vector<double> dagg(static_cast<std::size_t>(n) * h, 0.0);
    for (int v = 0; v < n; ++v) {
        const double *dl = dlogits.row(v);
        const double *av = &trace.agg[static_cast<std::size_t>(v) * h];
        for (int cidx = 0; cidx < cfg.classes; ++cidx) grads.head.b[cidx] += dl[cidx];
        double *dav = &dagg[static_cast<std::size_t>(v) * h];
        for (int j = 0; j < h; ++j) {
            const double *wrow = m.params.head.w.row(j);
            double *dwrow = grads.head.w.row(j);
            double acc = 0.0;
            for (int cidx = 0; cidx < cfg.classes; ++cidx) {
                acc += wrow[cidx] * dl[cidx];
                dwrow[cidx] += av[j] * dl[cidx];
            }
            dav[j] = acc;
        }
    }

    // Aggregation.
    std::vector<double> dx(static_cast<std::size_t>(rows) * h, 0.0);
    for (int v = 0; v < n; ++v) {
        const double *dav = &dagg[static_cast<std::size_t>(v) * h];
        if (cfg.aggregate == Aggregate::Max) {
            const int *pick = &trace.agg_pick[static_cast<std::size_t>(v) * h];
            for (int j = 0; j < h; ++j)
                if (pick[j] >= 0) dx[static_cast<std::size_t>(v * p + pick[j]) * h + j] += dav[j];
        } else {
            const double denom = cfg.aggregate == Aggregate::Mean
                                     ? std::max(trace.agg_count[v], 1.0)
                                     : 1.0;
            for (int s = 0; s < p; ++s) {
                if (!ps.valid[v * p + s]) continue;
                double *dxr = &dx[static_cast<std::size_t>(v * p + s) * h];
                for (int j = 0; j < h; ++j) dxr[j] += dav[j] / denom;
            }
        }
    }

    std::vector<double> dact, dz, dxhat, dln_in;
    for (int layer = cfg.layers - 1; layer >= 0; --layer) {
        const auto &lp = m.params.layers[layer];
        auto &gl = grads.layers[layer];

        // Patch step.
        {
            const StepTrace &pt = trace.steps[2 * layer + 1];
            dact = dx;
            if (use_dropout) dropout_backward(dact, pt.drop_mask, cfg.dropout);
            if (cfg.two_layer_mix) {
                relu_backward_inplace(dact, pt.z2);
                patch_linear_backward(dact, pt.a1, n, p, h, lp.patch2, dz, gl.patch2);
                relu_backward_inplace(dz, pt.z1);
            } else {
                relu_backward_inplace(dact, pt.z1);
                dz.swap(dact);
            }
            // Rebuild the LN output consumed by the linear from the cache.
            std::vector<double> ln_out(pt.xhat.size());
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < h; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(r) * h + j;
                    ln_out[idx] = lp.ln_patch.gamma[j] * pt.xhat[idx] + lp.ln_patch.beta[j];
                }
            patch_linear_backward(dz, ln_out, n, p, h, lp.patch1, dxhat, gl.patch1);
            layer_norm_backward(dxhat, pt.xhat, pt.rstd, rows, h, lp.ln_patch, dln_in,
                                gl.ln_patch);
            if (cfg.residual)
                for (std::size_t i = 0; i < dln_in.size(); ++i) dln_in[i] += dx[i];
            dx.swap(dln_in);
        }

        // Feature step.
        {
            const StepTrace &ft = trace.steps[2 * layer];
            const int in = feature_in_width(cfg, layer);
            dact = dx;
            if (use_dropout) dropout_backward(dact, ft.drop_mask, cfg.dropout);
            if (cfg.two_layer_mix) {
                relu_backward_inplace(dact, ft.z2);
                feature_linear_backward(dact, ft.a1, rows, lp.feat2, dz, gl.feat2);
                relu_backward_inplace(dz, ft.z1);
            } else {
                relu_backward_inplace(dact, ft.z1);
                dz.swap(dact);
            }
            std::vector<double> ln_out(ft.xhat.size());
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < in; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(r) * in + j;
                    ln_out[idx] = lp.ln_feat.gamma[j] * ft.xhat[idx] + lp.ln_feat.beta[j];
                }
            feature_linear_backward(dz, ln_out, rows, lp.feat1, dxhat, gl.feat1);
            layer_norm_backward(dxhat, ft.xhat, ft.rstd, rows, in, lp.ln_feat, dln_in,
                                gl.ln_feat);
            if (cfg.residual && in == h)
                for (std::size_t i = 0; i < dln_in.size(); ++i) dln_in[i] += dx[i];
            dx.swap(dln_in);
        }
    }
    return grads;
}

namespace {

nlohmann::json config_to_json(const MixerConfig &cfg) {
    return nlohmann::json{{"d", cfg.d},
                          {"p", cfg.p},
                          {"hidden", cfg.hidden},
                          {"classes", cfg.classes},
                          {"layers", cfg.layers},
                          {"dropout", cfg.dropout},
                          {"ln_eps", cfg.ln_eps},
                          {"two_layer_mix", cfg.two_layer_mix},
                          {"residual", cfg.residual},
                          {"aggregate", aggregate_name(cfg.aggregate)}};
}

MixerConfig config_from_json(const nlohmann::json &j) {
    MixerConfig cfg;
    cfg.d = j.at("d").get<int>();
    cfg.p = j.at("p").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.classes = j.at("classes").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.ln_eps = j.at("ln_eps").get<double>();
    cfg.two_layer_mix = j.at("two_layer_mix").get<bool>();
    cfg.residual = j.at("residual").get<bool>();
    cfg.aggregate = aggregate_from_name(j.at("aggregate").get<std::string>());
    return cfg;
}

} // namespace

void save_checkpoint(const MixerModel &m, const FilterSpec &extractor, const std::string &path) {
    nlohmann::json j;
    j["version"] = 1;
    j["config"] = config_to_json(m.config);
    j["extractor"] = filter_spec_to_json(extractor);
    nlohmann::json tensors;
    for_each_tensor(m.params, [&](const std::string &name, const std::vector<double> &v, bool) {
        tensors[name] = v;
    });
    j["tensors"] = std::move(tensors);
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ParseError, "cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, "cannot read checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
    }
    Checkpoint ck;
    ck.model.config = config_from_json(j.at("config"));
    ck.extractor = filter_spec_from_json(j.at("extractor"));
    ck.model.params = make_zero_params(ck.model.config);
    const auto &tensors = j.at("tensors");
    for_each_tensor(ck.model.params, [&](const std::string &name, std::vector<double> &v, bool) {
        const auto it = tensors.find(name);
        if (it == tensors.end())
            throw Error(ErrorCode::ParseError, "checkpoint missing tensor: " + name);
        const auto loaded = it->get<std::vector<double>>();
        if (loaded.size() != v.size())
            throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor size mismatch: " + name);
        v = loaded;
    });
    return ck;
}

} // namespace gpatch
