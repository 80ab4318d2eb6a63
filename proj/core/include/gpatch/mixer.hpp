#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpatch/filters.hpp"
#include "gpatch/matrix.hpp"
#include "gpatch/patcher.hpp"
#include "gpatch/rng.hpp"

namespace gpatch {

enum class Aggregate { Mean, Sum, Max };

const char *aggregate_name(Aggregate a);
Aggregate aggregate_from_name(const std::string &name);

struct MixerConfig {
    int d = 0;         // input feature width
    int p = 0;         // patch size
    int hidden = 64;
    int classes = 0;
    int layers = 2;
    double dropout = 0.5;
    double ln_eps = 1e-5;
    bool two_layer_mix = false;   // linear-relu-linear mixing MLPs
    bool residual = false;
    Aggregate aggregate = Aggregate::Mean;
};

struct LinearParams {
    Matrix w;
    std::vector<double> b;
};

struct LayerNormParams {
    std::vector<double> gamma;
    std::vector<double> beta;
};

/// One mixer layer: feature mixing (rows of the n*p slot matrix) followed
/// by patch mixing (slot axis within each node block). The second linear
/// of each pair is used only in two_layer_mix mode.
struct MixerLayerParams {
    LayerNormParams ln_feat;
    LinearParams feat1, feat2;
    LayerNormParams ln_patch;
    LinearParams patch1, patch2;
};

struct MixerParams {
    std::vector<MixerLayerParams> layers;
    LinearParams head;
};

struct MixerModel {
    MixerConfig config;
    MixerParams params;
};

/// Visits every parameter tensor as (name, values, is_weight_matrix).
/// Weight matrices are the only tensors subject to weight decay.
template <typename Params, typename Fn>
void for_each_tensor(Params &&p, Fn &&fn) {
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        auto &l = p.layers[i];
        const std::string base = "layer" + std::to_string(i) + ".";
        fn(base + "ln_feat.gamma", l.ln_feat.gamma, false);
        fn(base + "ln_feat.beta", l.ln_feat.beta, false);
        fn(base + "feat1.w", l.feat1.w.data(), true);
        fn(base + "feat1.b", l.feat1.b, false);
        if (!l.feat2.b.empty() || l.feat2.w.rows() > 0) {
            fn(base + "feat2.w", l.feat2.w.data(), true);
            fn(base + "feat2.b", l.feat2.b, false);
        }
        fn(base + "ln_patch.gamma", l.ln_patch.gamma, false);
        fn(base + "ln_patch.beta", l.ln_patch.beta, false);
        fn(base + "patch1.w", l.patch1.w.data(), true);
        fn(base + "patch1.b", l.patch1.b, false);
        if (!l.patch2.b.empty() || l.patch2.w.rows() > 0) {
            fn(base + "patch2.w", l.patch2.w.data(), true);
            fn(base + "patch2.b", l.patch2.b, false);
        }
    }
    fn("head.w", p.head.w.data(), true);
    fn("head.b", p.head.b, false);
}

/// Zero-valued parameter set with the shapes the config dictates.
MixerParams make_zero_params(const MixerConfig &cfg);

/// Deterministic initialization: linear maps uniform in
/// +-sqrt(6/(fan_in+fan_out)), biases zero, layer-norm scale 1 shift 0.
MixerModel init_params(const MixerConfig &cfg, std::uint64_t seed);

/// Cached activations from one forward pass, enough for exact gradients.
struct StepTrace {
    std::vector<double> xhat;            // normalized pre-scale input, rows x in
    std::vector<double> rstd;            // per-row inverse stddev
    std::vector<double> z1;              // first linear output, pre-activation
    std::vector<double> a1;              // relu(z1), only in two_layer_mix
    std::vector<double> z2;              // second linear output, two_layer_mix
    std::vector<std::uint8_t> drop_mask; // kept entries, only when training
};

struct ForwardTrace {
    bool training = false;
    int rows = 0;                        // n*p
    std::vector<StepTrace> steps;        // 2 per layer: feature then patch
    std::vector<double> agg;             // n x hidden aggregated representation
    std::vector<int> agg_pick;           // argmax slots (Max aggregation)
    std::vector<double> agg_count;       // valid slots per node (Mean)
};

struct ForwardResult {
    Matrix logits;                       // n x classes
    ForwardTrace trace;
};

/// Runs the mixer on a patch set. Invalid slots are zero-masked on entry.
/// `rng` drives dropout and must be non-null when training with a
/// positive dropout rate.
ForwardResult mixer_forward(const MixerModel &m, const PatchSet &ps, bool training = false,
                            Rng *rng = nullptr);

/// Exact reverse-mode gradients of a scalar loss with upstream gradient
/// `dlogits` (n x classes) through the traced forward pass.
MixerParams mixer_backward(const MixerModel &m, const ForwardTrace &trace, const PatchSet &ps,
                           const Matrix &dlogits);

/// Checkpoint: JSON container of config, extractor description, and named
/// tensors; numeric round-trip is bit-exact.
struct Checkpoint {
    MixerModel model;
    FilterSpec extractor;
};

void save_checkpoint(const MixerModel &m, const FilterSpec &extractor, const std::string &path);
Checkpoint load_checkpoint(const std::string &path);

} // namespace gpatch
