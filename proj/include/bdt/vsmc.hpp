#pragma once

#include "bdt/filter.hpp"
#include "bdt/model.hpp"
#include "bdt/simulator.hpp"
#include "bdt/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace bdt {

/// One semi-supervised unit: a labeled frame plus its unlabeled forward
/// and backward neighbor frames (backward already time-reversed).
struct SemiSupervisedBatch {
    LabeledFrame labeled;
    std::vector<FrameObservations> forward;
    std::vector<FrameObservations> backward;
};

struct ElboReport {
    double elbo = 0.0;
    double supervised = 0.0;
    double forward_sum = 0.0;
    double backward_sum = 0.0;
    std::vector<double> forward_log_mean_weights;
    std::vector<double> backward_log_mean_weights;
    std::vector<double> forward_ess;
    std::vector<double> backward_ess;
    MotionGrad grad;
};

/// Surrogate ELBO: the labeled frame's detection log-likelihood plus the
/// accumulated log-mean-weights of particle-filter runs over the forward
/// and (reversed, same dynamics) backward frames, each initialized with
/// every particle at the ground truth.
ElboReport elbo_estimate(const SemiSupervisedBatch& batch, const ModelParams& params,
                         int num_particles, std::uint64_t seed);

/// Same runs, also accumulating the weighted per-particle gradient
/// sum_t sum_l w_hat_t^l d log w_t^l / d (A, b, s). Gradients of the
/// discrete sampling distribution are omitted.
ElboReport elbo_gradient(const SemiSupervisedBatch& batch, const ModelParams& params,
                         int num_particles, std::uint64_t seed);

struct TrainConfig {
    double learning_rate = 0.05;
    double clip_norm = 10.0;
    int max_epochs_stage1 = 200;
    int max_epochs_stage2 = 40;
    double plateau_rel = 1e-4;
    int plateau_window = 5;
    int particles = 64;
    std::uint64_t seed = 1;
};

struct LossCurveRow {
    int epoch = 0;
    int stage = 1;
    double objective = 0.0;  ///< maximized; stage 1 reports -supervised loss
};

struct TrainData {
    std::vector<SemiSupervisedBatch> batches;
    /// Maximal consecutive labeled stretches, for the supervised stage.
    std::vector<std::vector<LabeledFrame>> labeled_runs;
};

struct TrainResult {
    MotionParams motion;
    std::vector<LossCurveRow> curve;
    int stage1_epochs = 0;
};

/// Two-stage training: gradient descent on the supervised loss until it
/// plateaus, then gradient ascent on supervised + ELBO with clipping.
/// Aborts with diagnostics if the objective diverges.
TrainResult train(const TrainData& data, const ModelParams& params0,
                  const TrainConfig& config);

/// Splits a simulated scene into semi-supervised batches: every
/// `label_stride`-th frame is labeled, with up to `neighbor_frames`
/// unlabeled frames on each side. Labeled runs carry stride-1 stretches.
TrainData build_train_data(const Scene& scene, int label_stride, int neighbor_frames);

}  // namespace bdt
