#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpatch/filters.hpp"
#include "gpatch/graph.hpp"
#include "gpatch/mixer.hpp"
#include "gpatch/patcher.hpp"

namespace gpatch {

struct TrainConfig {
    double lr = 0.005;
    double weight_decay = 5e-4;
    int max_epochs = 500;
    int patience = 50;
    int hidden = 64;
    int layers = 2;
    double dropout = 0.5;
    int p = 32;
    int K = 100;
    std::uint64_t seed = 0;
    FilterSpec extractor = FilterSpec::ppr();
    // Validation search candidates for the extractor; empty means just
    // `extractor`. Patches are re-extracted per candidate and the model
    // with the best validation accuracy wins (ties: earliest).
    std::vector<FilterSpec> candidates;
    Aggregate aggregate = Aggregate::Mean;
    bool two_layer_mix = false;
    bool residual = false;
    int dense_limit = kDefaultDenseLimit;
    // Patch-order ablation: shuffle each patch row before training.
    bool shuffle_patches = false;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;            // 1-based epoch with the lowest val loss
    double test_accuracy = 0.0;
    double val_accuracy = 0.0;     // at the restored checkpoint
    double wall_seconds = 0.0;     // not part of any deterministic output
    std::string extractor_key;     // chosen candidate
    FilterSpec chosen;
    MixerModel model;              // restored best-val parameters; baselines
                                   // leave this empty
};

/// Full training run: extraction (with candidate search), full-batch
/// epochs of cross-entropy + Adam with decoupled weight decay, early
/// stopping on validation loss, best-checkpoint restore, test evaluation.
TrainReport train(const Graph &g, const TrainConfig &cfg);

/// Same loop on pre-extracted patches (cache path; no candidate search).
TrainReport train_on_patches(const Graph &g, const PatchSet &ps, const TrainConfig &cfg);

/// Accuracy of argmax predictions on the masked nodes; prediction ties
/// resolve to the lowest class index. Throws EmptyMask.
double evaluate(const MixerModel &m, const PatchSet &ps, const Graph &g,
                const std::vector<std::uint8_t> &mask);

/// Mean softmax cross-entropy over masked rows; when `dlogits` is given
/// it receives the loss gradient (zero rows outside the mask).
double masked_cross_entropy(const Matrix &logits, const std::vector<int> &labels,
                            const std::vector<std::uint8_t> &mask, Matrix *dlogits = nullptr);

double masked_accuracy(const Matrix &logits, const std::vector<int> &labels,
                       const std::vector<std::uint8_t> &mask);

/// Adam with decoupled weight decay over mixer parameters. Decay applies
/// to weight matrices only, never biases or layer-norm parameters.
struct AdamState {
    MixerParams m;
    MixerParams v;
    long step = 0;
};

void adam_step(MixerParams &params, const MixerParams &grads, AdamState &state, double lr,
               double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

/// Attribute-only 2-layer perceptron baseline (same loop and optimizer).
TrainReport baseline_mlp(const Graph &g, const TrainConfig &cfg);

/// 2-layer graph-convolution baseline: self-loop normalized propagation,
/// ReLU between layers.
TrainReport baseline_gcn(const Graph &g, const TrainConfig &cfg);

} // namespace gpatch
