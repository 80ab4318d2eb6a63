#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpatch/mixer.hpp"
#include "gpatch/rng.hpp"

using namespace gpatch;

namespace {

PatchSet all_valid_patches(int n, int p, int d, std::uint64_t seed) {
    PatchSet ps;
    ps.n = n;
    ps.p = p;
    ps.indices.assign(static_cast<std::size_t>(n) * p, 0);
    ps.valid.assign(static_cast<std::size_t>(n) * p, 1);
    ps.features = Matrix(n * p, d);
    Rng rng(seed);
    for (int v = 0; v < n; ++v)
        for (int s = 0; s < p; ++s) ps.indices[ps.slot(v, s)] = (v + s) % n;
    for (auto &x : ps.features.data()) x = rng.normal();
    return ps;
}

double scalar_loss(const Matrix &logits, const Matrix &coef) {
    double l = 0.0;
    for (std::size_t i = 0; i < logits.data().size(); ++i)
        l += logits.data()[i] * coef.data()[i];
    return l;
}

Matrix loss_coefficients(int n, int classes, std::uint64_t seed) {
    Matrix c(n, classes);
    Rng rng(seed);
    for (auto &x : c.data()) x = rng.uniform(-1.0, 1.0);
    return c;
}

/// Central-difference check of every parameter against the analytic
/// gradients of the linear probe loss sum(coef * logits). Biases and
/// layer-norm shifts are nudged off zero first: a zero-initialized row
/// can park a pre-activation exactly on the relu kink, where the
/// analytic slope-zero convention and the two-sided difference disagree.
void check_gradients(MixerModel &m, const PatchSet &ps, double tol) {
    Rng nudge(12345);
    for_each_tensor(m.params, [&](const std::string &name, std::vector<double> &v, bool) {
        const bool shift = name.size() >= 2 && (name.rfind(".b") == name.size() - 2 ||
                                                name.rfind(".beta") == name.size() - 5);
        if (!shift) return;
        for (double &x : v) x += nudge.uniform(-0.05, 0.05);
    });
    const Matrix coef = loss_coefficients(ps.n, m.config.classes, 99);
    ForwardResult fr = mixer_forward(m, ps);
    MixerParams analytic = mixer_backward(m, fr.trace, ps, coef);

    const double eps = 1e-5;
    double worst = 0.0;
    for_each_tensor(m.params, [&](const std::string &name, std::vector<double> &v, bool) {
        std::vector<double> *grad = nullptr;
        for_each_tensor(analytic, [&](const std::string &gname, std::vector<double> &gv, bool) {
            if (gname == name) grad = &gv;
        });
        REQUIRE(grad != nullptr);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + eps;
            const double up = scalar_loss(mixer_forward(m, ps).logits, coef);
            v[i] = keep - eps;
            const double dn = scalar_loss(mixer_forward(m, ps).logits, coef);
            v[i] = keep;
            const double fd = (up - dn) / (2.0 * eps);
            const double a = (*grad)[i];
            const double rel = std::fabs(fd - a) / std::max(std::fabs(fd) + std::fabs(a), 1e-10);
            worst = std::max(worst, rel);
        }
    });
    CHECK(worst < tol);
}

} // namespace

TEST_CASE("zero parameters emit zero logits") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m{cfg, make_zero_params(cfg)};
    PatchSet ps = all_valid_patches(5, 2, 3, 1);
    ForwardResult fr = mixer_forward(m, ps);
    for (double v : fr.logits.data()) CHECK(v == 0.0);
}

TEST_CASE("config validation rejects empty shapes") {
    MixerConfig cfg;
    cfg.d = 0;
    cfg.p = 2;
    cfg.classes = 2;
    CHECK_THROWS_AS(make_zero_params(cfg), Error);
    cfg.d = 3;
    cfg.layers = 0;
    CHECK_THROWS_AS(make_zero_params(cfg), Error);
}

TEST_CASE("forward pass matches a straight-line reimplementation") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    cfg.layers = 2;
    cfg.dropout = 0.0;
    MixerModel m = init_params(cfg, 42);
    PatchSet ps = all_valid_patches(5, cfg.p, cfg.d, 7);
    ForwardResult fr = mixer_forward(m, ps);

    const int rows = ps.n * cfg.p;
    std::vector<double> x(ps.features.data());
    int dim = cfg.d;
    auto ln = [&](const LayerNormParams &lnp) {
        std::vector<double> y(x.size());
        for (int r = 0; r < rows; ++r) {
            double mean = 0.0, var = 0.0;
            for (int j = 0; j < dim; ++j) mean += x[r * dim + j];
            mean /= dim;
            for (int j = 0; j < dim; ++j) {
                const double c = x[r * dim + j] - mean;
                var += c * c;
            }
            var /= dim;
            const double rs = 1.0 / std::sqrt(var + cfg.ln_eps);
            for (int j = 0; j < dim; ++j)
                y[r * dim + j] = lnp.gamma[j] * (x[r * dim + j] - mean) * rs + lnp.beta[j];
        }
        return y;
    };
    for (int layer = 0; layer < cfg.layers; ++layer) {
        const auto &lp = m.params.layers[layer];
        std::vector<double> y = ln(lp.ln_feat);
        std::vector<double> z(static_cast<std::size_t>(rows) * cfg.hidden, 0.0);
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < cfg.hidden; ++j) {
                double s = lp.feat1.b[j];
                for (int i = 0; i < dim; ++i) s += y[r * dim + i] * lp.feat1.w(i, j);
                z[r * cfg.hidden + j] = std::max(s, 0.0);
            }
        x = z;
        dim = cfg.hidden;
        y = ln(lp.ln_patch);
        std::vector<double> q(x.size(), 0.0);
        for (int v = 0; v < ps.n; ++v)
            for (int sp = 0; sp < cfg.p; ++sp)
                for (int j = 0; j < dim; ++j) {
                    double s = lp.patch1.b[sp];
                    for (int si = 0; si < cfg.p; ++si)
                        s += lp.patch1.w(sp, si) * y[(v * cfg.p + si) * dim + j];
                    q[(v * cfg.p + sp) * dim + j] = std::max(s, 0.0);
                }
        x = q;
    }
    Matrix want(ps.n, cfg.classes);
    for (int v = 0; v < ps.n; ++v)
        for (int c = 0; c < cfg.classes; ++c) {
            double s = m.params.head.b[c];
            for (int j = 0; j < dim; ++j) {
                double mean_j = 0.0;
                for (int sp = 0; sp < cfg.p; ++sp) mean_j += x[(v * cfg.p + sp) * dim + j];
                mean_j /= cfg.p;
                s += mean_j * m.params.head.w(j, c);
            }
            want(v, c) = s;
        }
    for (int v = 0; v < ps.n; ++v)
        for (int c = 0; c < cfg.classes; ++c)
            CHECK(fr.logits(v, c) == doctest::Approx(want(v, c)).epsilon(1e-12));
}

TEST_CASE("single-slot patches keep nodes independent") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 1;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m = init_params(cfg, 5);
    PatchSet a = all_valid_patches(6, 1, 3, 11);
    PatchSet b = a;
    // poke one coordinate of node 2 (a uniform shift would be invisible
    // to the layer norm)
    b.features(2, 0) += 10.0;
    ForwardResult fa = mixer_forward(m, a);
    ForwardResult fb = mixer_forward(m, b);
    for (int v = 0; v < 6; ++v)
        for (int c = 0; c < 2; ++c) {
            if (v == 2) continue;
            CHECK(fa.logits(v, c) == fb.logits(v, c));
        }
    CHECK(fa.logits(2, 0) != fb.logits(2, 0));
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m = init_params(cfg, 8);
    PatchSet ps = all_valid_patches(4, 2, 3, 13);
    ForwardResult fr = mixer_forward(m, ps);
    MixerParams g = mixer_backward(m, fr.trace, ps, Matrix(4, 2));
    for_each_tensor(g, [&](const std::string &, std::vector<double> &v, bool) {
        for (double x : v) CHECK(x == 0.0);
    });
}

TEST_CASE("analytic gradients match central differences") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    cfg.layers = 2;
    cfg.dropout = 0.0;
    MixerModel m = init_params(cfg, 21);
    PatchSet ps = all_valid_patches(4, 2, 3, 17);
    ps.valid[ps.slot(0, 1)] = 0; // one padded slot on node 0
    check_gradients(m, ps, 1e-4);
}

TEST_CASE("gradients hold up with two-layer mixing and residuals") {
    MixerConfig cfg;
    cfg.d = 4; // equal to hidden so the feature residual engages
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 3;
    cfg.layers = 2;
    cfg.dropout = 0.0;
    cfg.two_layer_mix = true;
    cfg.residual = true;
    cfg.aggregate = Aggregate::Sum;
    MixerModel m = init_params(cfg, 23);
    PatchSet ps = all_valid_patches(4, 2, 4, 19);
    check_gradients(m, ps, 1e-4);
}

TEST_CASE("duplicated node blocks double every gradient") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m = init_params(cfg, 31);

    PatchSet one = all_valid_patches(1, 2, 3, 29);
    PatchSet two;
    two.n = 2;
    two.p = 2;
    two.indices = {0, 0, 0, 0};
    two.valid.assign(4, 1);
    two.features = Matrix(4, 3);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) {
            two.features(r, c) = one.features(r, c);
            two.features(r + 2, c) = one.features(r, c);
        }

    Matrix dl1(1, 2);
    dl1(0, 0) = 0.7;
    dl1(0, 1) = -0.3;
    Matrix dl2(2, 2);
    for (int c = 0; c < 2; ++c) {
        dl2(0, c) = dl1(0, c);
        dl2(1, c) = dl1(0, c);
    }

    ForwardResult f1 = mixer_forward(m, one);
    ForwardResult f2 = mixer_forward(m, two);
    CHECK(f2.logits(0, 0) == f1.logits(0, 0));
    CHECK(f2.logits(1, 1) == f1.logits(0, 1));

    MixerParams g1 = mixer_backward(m, f1.trace, one, dl1);
    MixerParams g2 = mixer_backward(m, f2.trace, two, dl2);
    // accumulation order interleaves the blocks, so the doubling is exact
    // only up to rounding
    for_each_tensor(g1, [&](const std::string &name, std::vector<double> &v1, bool) {
        for_each_tensor(g2, [&](const std::string &name2, std::vector<double> &v2, bool) {
            if (name2 != name) return;
            for (std::size_t i = 0; i < v1.size(); ++i)
                CHECK(v2[i] == doctest::Approx(2.0 * v1[i]).epsilon(1e-12));
        });
    });
}

TEST_CASE("padding slots are inert") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 3;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m = init_params(cfg, 37);
    PatchSet clean = all_valid_patches(3, 3, 3, 41);
    clean.valid[clean.slot(1, 2)] = 0;
    for (int c = 0; c < 3; ++c) clean.features(clean.slot(1, 2), c) = 0.0;

    PatchSet dirty = clean;
    for (int c = 0; c < 3; ++c) dirty.features(dirty.slot(1, 2), c) = 1e6; // garbage

    const Matrix coef = loss_coefficients(3, 2, 43);
    ForwardResult fc = mixer_forward(m, clean);
    ForwardResult fd = mixer_forward(m, dirty);
    CHECK(fc.logits.data() == fd.logits.data());

    MixerParams gc = mixer_backward(m, fc.trace, clean, coef);
    MixerParams gd = mixer_backward(m, fd.trace, dirty, coef);
    for_each_tensor(gc, [&](const std::string &name, std::vector<double> &v1, bool) {
        for_each_tensor(gd, [&](const std::string &name2, std::vector<double> &v2, bool) {
            if (name2 == name) CHECK(v1 == v2);
        });
    });
}

TEST_CASE("slot order changes the prediction") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m = init_params(cfg, 47);
    PatchSet a = all_valid_patches(2, 2, 3, 53);
    PatchSet b = a;
    for (int c = 0; c < 3; ++c) std::swap(b.features(b.slot(0, 0), c), b.features(b.slot(0, 1), c));
    std::swap(b.indices[b.slot(0, 0)], b.indices[b.slot(0, 1)]);
    ForwardResult fa = mixer_forward(m, a);
    ForwardResult fb = mixer_forward(m, b);
    double diff = 0.0;
    for (int c = 0; c < 2; ++c) diff += std::fabs(fa.logits(0, c) - fb.logits(0, c));
    CHECK(diff > 0.0);
}

TEST_CASE("forward runs are bit-for-bit repeatable") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 8;
    cfg.classes = 3;
    MixerModel m = init_params(cfg, 59);
    PatchSet ps = all_valid_patches(6, 2, 3, 61);
    ForwardResult a = mixer_forward(m, ps);
    ForwardResult b = mixer_forward(m, ps);
    CHECK(a.logits.data() == b.logits.data());
}

TEST_CASE("dropout is seed-driven and evaluation-silent") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 8;
    cfg.classes = 2;
    cfg.dropout = 0.5;
    MixerModel m = init_params(cfg, 67);
    PatchSet ps = all_valid_patches(6, 2, 3, 71);

    Rng r1(7), r2(7), r3(8);
    ForwardResult a = mixer_forward(m, ps, true, &r1);
    ForwardResult b = mixer_forward(m, ps, true, &r2);
    ForwardResult c = mixer_forward(m, ps, true, &r3);
    CHECK(a.logits.data() == b.logits.data());
    bool differs = false;
    for (std::size_t i = 0; i < a.logits.data().size(); ++i)
        if (a.logits.data()[i] != c.logits.data()[i]) differs = true;
    CHECK(differs);

    // training with dropout requires a generator
    CHECK_THROWS_AS(mixer_forward(m, ps, true, nullptr), Error);

    // evaluation ignores the generator entirely
    Rng r4(9);
    ForwardResult ev1 = mixer_forward(m, ps, false, &r4);
    ForwardResult ev2 = mixer_forward(m, ps, false, nullptr);
    CHECK(ev1.logits.data() == ev2.logits.data());

    // rate zero makes training and evaluation coincide
    m.config.dropout = 0.0;
    ForwardResult t0 = mixer_forward(m, ps, true, nullptr);
    CHECK(t0.logits.data() == ev2.logits.data());
}

TEST_CASE("initialization is deterministic and bounded") {
    MixerConfig cfg;
    cfg.d = 5;
    cfg.p = 3;
    cfg.hidden = 7;
    cfg.classes = 4;
    cfg.two_layer_mix = true;
    MixerModel a = init_params(cfg, 101);
    MixerModel b = init_params(cfg, 101);
    MixerModel c = init_params(cfg, 102);

    bool same = true, all_equal_to_c = true;
    for_each_tensor(a.params, [&](const std::string &name, std::vector<double> &va, bool is_w) {
        for_each_tensor(b.params, [&](const std::string &n2, std::vector<double> &vb, bool) {
            if (n2 == name && va != vb) same = false;
        });
        for_each_tensor(c.params, [&](const std::string &n2, std::vector<double> &vc, bool) {
            if (n2 == name && va != vc) all_equal_to_c = false;
        });
        if (is_w) {
            // uniform glorot bound from the tensor's own shape is checked
            // per layer below; here just confirm nothing is wildly off
            for (double x : va) CHECK(std::fabs(x) <= 1.5);
        }
    });
    CHECK(same);
    CHECK_FALSE(all_equal_to_c);

    const auto &l0 = a.params.layers[0];
    const double bound_feat = std::sqrt(6.0 / (cfg.d + cfg.hidden));
    for (double x : l0.feat1.w.data()) CHECK(std::fabs(x) <= bound_feat);
    for (double x : l0.ln_feat.gamma) CHECK(x == 1.0);
    for (double x : l0.ln_feat.beta) CHECK(x == 0.0);
    for (double x : l0.feat1.b) CHECK(x == 0.0);
    for (double x : a.params.head.b) CHECK(x == 0.0);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    cfg.two_layer_mix = true;
    cfg.residual = true;
    cfg.aggregate = Aggregate::Max;
    MixerModel m = init_params(cfg, 103);

    char tmpl[] = "/tmp/mixer_test_XXXXXX";
    const char *dir = mkdtemp(tmpl);
    REQUIRE(dir != nullptr);
    const std::string path = std::string(dir) + "/model.ckpt";
    save_checkpoint(m, FilterSpec::heat(8, 0.2), path);

    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.model.config.d == cfg.d);
    CHECK(ck.model.config.hidden == cfg.hidden);
    CHECK(ck.model.config.two_layer_mix == cfg.two_layer_mix);
    CHECK(ck.model.config.residual == cfg.residual);
    CHECK(ck.model.config.aggregate == Aggregate::Max);
    CHECK(ck.extractor.cache_key() == FilterSpec::heat(8, 0.2).cache_key());

    for_each_tensor(m.params, [&](const std::string &name, std::vector<double> &va, bool) {
        for_each_tensor(ck.model.params, [&](const std::string &n2, std::vector<double> &vb, bool) {
            if (n2 == name) CHECK(va == vb);
        });
    });

    // dropping a tensor is a parse failure, resizing one a shape failure
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    in.close();
    nlohmann::json missing = j;
    missing["tensors"].erase("head.w");
    const std::string miss_path = std::string(dir) + "/missing.ckpt";
    {
        std::ofstream out(miss_path);
        out << missing.dump();
    }
    try {
        load_checkpoint(miss_path);
        CHECK(false);
    } catch (const Error &e) {
        CHECK(e.code() == ErrorCode::ParseError);
    }

    nlohmann::json resized = j;
    resized["tensors"]["head.b"] = std::vector<double>{1.0};
    const std::string resize_path = std::string(dir) + "/resized.ckpt";
    {
        std::ofstream out(resize_path);
        out << resized.dump();
    }
    try {
        load_checkpoint(resize_path);
        CHECK(false);
    } catch (const Error &e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("sum aggregation is the mean scaled by the slot count") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m = init_params(cfg, 107);
    PatchSet ps = all_valid_patches(4, 2, 3, 109);

    m.config.aggregate = Aggregate::Mean;
    ForwardResult fm = mixer_forward(m, ps);
    m.config.aggregate = Aggregate::Sum;
    ForwardResult fs = mixer_forward(m, ps);
    for (int v = 0; v < 4; ++v)
        for (int c = 0; c < 2; ++c) {
            const double b = m.params.head.b[c];
            CHECK(fs.logits(v, c) - b ==
                  doctest::Approx(2.0 * (fm.logits(v, c) - b)).epsilon(1e-12));
        }
}

TEST_CASE("max equals mean when patches have one slot") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 1;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m = init_params(cfg, 113);
    PatchSet ps = all_valid_patches(5, 1, 3, 127);
    const Matrix coef = loss_coefficients(5, 2, 131);

    m.config.aggregate = Aggregate::Mean;
    ForwardResult fm = mixer_forward(m, ps);
    MixerParams gm = mixer_backward(m, fm.trace, ps, coef);
    m.config.aggregate = Aggregate::Max;
    ForwardResult fx = mixer_forward(m, ps);
    MixerParams gx = mixer_backward(m, fx.trace, ps, coef);

    CHECK(fm.logits.data() == fx.logits.data());
    for_each_tensor(gm, [&](const std::string &name, std::vector<double> &v1, bool) {
        for_each_tensor(gx, [&](const std::string &n2, std::vector<double> &v2, bool) {
            if (n2 == name) CHECK(v1 == v2);
        });
    });
}

TEST_CASE("shape mismatches are rejected") {
    MixerConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.hidden = 4;
    cfg.classes = 2;
    MixerModel m = init_params(cfg, 137);

    PatchSet wrong_p = all_valid_patches(4, 3, 3, 139);
    CHECK_THROWS_AS(mixer_forward(m, wrong_p), Error);

    PatchSet wrong_d = all_valid_patches(4, 2, 5, 149);
    CHECK_THROWS_AS(mixer_forward(m, wrong_d), Error);

    PatchSet ps = all_valid_patches(4, 2, 3, 151);
    ForwardResult fr = mixer_forward(m, ps);
    CHECK_THROWS_AS(mixer_backward(m, fr.trace, ps, Matrix(4, 3)), Error);
    CHECK_THROWS_AS(mixer_backward(m, fr.trace, ps, Matrix(3, 2)), Error);
}
