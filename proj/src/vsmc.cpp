#include "bdt/vsmc.hpp"

#include "bdt/clustering.hpp"
#include "bdt/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bdt {

namespace {

// Log-mean-weight accumulation over one directional run, optionally with
// the weighted per-particle gradient of each frame's log weight.
void run_direction(std::span<const FrameObservations> frames,
                   std::span<const ObjectState> init_objects,
                   const ModelParams& params, int num_particles, std::uint64_t seed,
                   bool with_grad, std::vector<double>* log_mean_weights,
                   std::vector<double>* ess_log, MotionGrad* grad, double* total) {
    if (frames.empty()) return;
    FilterState state = init_filter_at(num_particles, seed, init_objects,
                                       params.eps_pd * Mat4::Identity());
    for (const auto& frame : frames) {
        StepTrace trace;
        step(state, frame, params, &trace);
        log_mean_weights->push_back(trace.log_mean_weight);
        ess_log->push_back(trace.ess);
        *total += trace.log_mean_weight;
        if (with_grad) {
            for (std::size_t l = 0; l < trace.records.size(); ++l) {
                MotionGrad g = importance_weight_motion_grad(trace.records[l],
                                                             params.motion);
                g *= trace.norm_weights[l];
                *grad += g;
            }
        }
    }
}

ElboReport elbo_impl(const SemiSupervisedBatch& batch, const ModelParams& params,
                     int num_particles, std::uint64_t seed, bool with_grad) {
    if (num_particles < 2)
        throw std::invalid_argument("elbo_estimate: need at least two particles");
    ElboReport report;

    // Supervised detection term of the labeled frame.
    if (!batch.labeled.obs.anchors.empty()) {
        const auto clusters = make_clusters(batch.labeled.obs, params);
        const auto assignment =
            assign_clusters_to_objects(clusters, batch.labeled.obs.anchors,
                                       batch.labeled.objects, params.iou_min);
        report.supervised = joint_emission_log_prob(batch.labeled.obs.anchors, clusters,
                                                    batch.labeled.objects, assignment,
                                                    params);
    }

    run_direction(batch.forward, batch.labeled.objects, params, num_particles,
                  mix_seed(seed, 0xf0f0), with_grad, &report.forward_log_mean_weights,
                  &report.forward_ess, &report.grad, &report.forward_sum);
    run_direction(batch.backward, batch.labeled.objects, params, num_particles,
                  mix_seed(seed, 0x0b0b), with_grad, &report.backward_log_mean_weights,
                  &report.backward_ess, &report.grad, &report.backward_sum);

    report.elbo = report.supervised + report.forward_sum + report.backward_sum;
    if (!std::isfinite(report.elbo))
        throw std::runtime_error("elbo_estimate: non-finite objective");
    return report;
}

}  // namespace

ElboReport elbo_estimate(const SemiSupervisedBatch& batch, const ModelParams& params,
                         int num_particles, std::uint64_t seed) {
    return elbo_impl(batch, params, num_particles, seed, false);
}

ElboReport elbo_gradient(const SemiSupervisedBatch& batch, const ModelParams& params,
                         int num_particles, std::uint64_t seed) {
    return elbo_impl(batch, params, num_particles, seed, true);
}

namespace {

ModelParams with_motion(const ModelParams& params, const MotionParams& motion) {
    ModelParams out = params;
    out.motion = motion;
    out.finalize();
    return out;
}

void clip(MotionGrad& g, double max_norm) {
    const double n = g.norm();
    if (n > max_norm && n > 0.0) g *= max_norm / n;
}

}  // namespace

TrainResult train(const TrainData& data, const ModelParams& params0,
                  const TrainConfig& config) {
    if (data.batches.empty() && data.labeled_runs.empty())
        throw std::invalid_argument("train: empty dataset");

    TrainResult result;
    result.motion = params0.motion;
    int epoch = 0;

    auto supervised_pass = [&](const MotionParams& motion, MotionGrad* grad) {
        const ModelParams params = with_motion(params0, motion);
        double loss = 0.0;
        for (const auto& run : data.labeled_runs) {
            const auto r = supervised_loss(run, params);
            loss += r.tracking;  // detection part is constant in the motion
            if (grad) *grad += r.grad;
        }
        return loss;
    };

    // Stage 1: supervised descent to plateau.
    std::vector<double> recent;
    for (int e = 0; e < config.max_epochs_stage1; ++e, ++epoch) {
        MotionGrad grad;
        const double loss = supervised_pass(result.motion, &grad);
        if (!std::isfinite(loss))
            throw std::runtime_error("train: supervised loss diverged at epoch " +
                                     std::to_string(epoch));
        result.curve.push_back({epoch, 1, -loss});
        clip(grad, config.clip_norm);
        result.motion.A -= config.learning_rate * grad.A;
        result.motion.b -= config.learning_rate * grad.b;
        result.motion.log_std -= config.learning_rate * grad.s;

        recent.push_back(loss);
        if (static_cast<int>(recent.size()) > config.plateau_window + 1)
            recent.erase(recent.begin());
        if (static_cast<int>(recent.size()) == config.plateau_window + 1) {
            const double before = recent.front();
            const double after = recent.back();
            const double rel = std::abs(before - after) /
                               std::max(1.0, std::abs(before));
            if (rel < config.plateau_rel) {
                ++epoch;
                break;
            }
        }
    }
    result.stage1_epochs = epoch;

    // Stage 2: ascent on supervised + ELBO. Skipped entirely for a
    // labeled-only dataset.
    if (data.batches.empty()) return result;

    for (int e = 0; e < config.max_epochs_stage2; ++e, ++epoch) {
        const ModelParams params = with_motion(params0, result.motion);
        const int nb = static_cast<int>(data.batches.size());
        std::vector<ElboReport> reports(nb);
        std::string error;
        parallel_for(nb, [&](int i) {
            try {
                reports[i] = elbo_gradient(data.batches[i], params, config.particles,
                                           mix_seed(config.seed, epoch * 1000003ull + i));
            } catch (const std::exception& ex) {
                error = ex.what();
            }
        });
        if (!error.empty()) throw std::runtime_error("train: " + error);

        MotionGrad grad;
        double objective = 0.0;
        for (const auto& r : reports) {
            objective += r.elbo;
            grad += r.grad;
        }
        MotionGrad sup_grad;
        const double sup_loss = supervised_pass(result.motion, &sup_grad);
        objective -= sup_loss;
        sup_grad *= -1.0;  // ascent on -loss
        grad += sup_grad;

        if (!std::isfinite(objective) || !grad.all_finite())
            throw std::runtime_error("train: objective diverged at epoch " +
                                     std::to_string(epoch));
        result.curve.push_back({epoch, 2, objective});
        clip(grad, config.clip_norm);
        result.motion.A += config.learning_rate * grad.A;
        result.motion.b += config.learning_rate * grad.b;
        result.motion.log_std += config.learning_rate * grad.s;
    }
    return result;
}

TrainData build_train_data(const Scene& scene, int label_stride, int neighbor_frames) {
    if (label_stride < 1) throw std::invalid_argument("build_train_data: bad stride");
    TrainData data;
    const int frames = static_cast<int>(scene.observations.size());
    std::vector<LabeledFrame> run;
    for (int t = 0; t < frames; ++t) {
        if (t % label_stride != 0) {
            if (!run.empty()) {
                data.labeled_runs.push_back(std::move(run));
                run.clear();
            }
            continue;
        }
        LabeledFrame lf;
        lf.obs = scene.observations[t];
        lf.objects = scene.truth[t];
        run.push_back(lf);

        SemiSupervisedBatch batch;
        batch.labeled = lf;
        for (int k = 1; k <= neighbor_frames && t + k < frames; ++k)
            batch.forward.push_back(scene.observations[t + k]);
        for (int k = 1; k <= neighbor_frames && t - k >= 0; ++k)
            batch.backward.push_back(scene.observations[t - k]);
        data.batches.push_back(std::move(batch));
    }
    if (!run.empty()) data.labeled_runs.push_back(std::move(run));
    return data;
}

}  // namespace bdt
