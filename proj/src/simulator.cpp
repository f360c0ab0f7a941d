#include "bdt/simulator.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bdt {

namespace {

constexpr std::uint64_t kSaltTruth = 0x74727574ull;
constexpr std::uint64_t kSaltAnchors = 0x616e6368ull;

Vec4 sample_mvn(const Vec4& mean, const Eigen::LLT<Mat4>& chol, RandomStream& rng) {
    Vec4 z;
    for (int d = 0; d < 4; ++d) z[d] = rng.normal();
    return mean + chol.matrixL() * z;
}

Box clip_to_arena(const Box& box, const Box& arena) {
    Vec4 v = box.v;
    v[0] = std::clamp(v[0], arena.x1(), arena.x2());
    v[1] = std::clamp(v[1], arena.y1(), arena.y2());
    v[2] = std::clamp(v[2], arena.x1(), arena.x2());
    v[3] = std::clamp(v[3], arena.y1(), arena.y2());
    return Box(v);
}

// Draw a valid (non-degenerate, in-arena) box; retries cover the rare
// corner-inverting samples.
Box sample_valid_box(const Vec4& mean, const Eigen::LLT<Mat4>& chol, const Box& arena,
                     RandomStream& rng, bool clip) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        Box b(sample_mvn(mean, chol, rng));
        if (clip) b = clip_to_arena(b, arena);
        if (b.valid()) return b;
    }
    // Fall back to a minimal valid box around the mean.
    Vec4 v = mean;
    v[2] = std::max(v[2], v[0] + 1e-3);
    v[3] = std::max(v[3], v[1] + 1e-3);
    return Box(v);
}

}  // namespace

std::vector<std::vector<ObjectState>> generate_truth(const SimConfig& config,
                                                     std::uint64_t seed) {
    const auto& model = config.model;
    if (!model.finalized())
        throw std::invalid_argument("generate_truth: ModelParams not finalized");
    Eigen::LLT<Mat4> prior_chol(model.prior_cov);
    Eigen::LLT<Mat4> motion_chol(Mat4(model.motion.variance().asDiagonal()));

    std::vector<std::vector<ObjectState>> truth(config.frames);
    std::int64_t next_id = 0;

    for (int t = 0; t < config.frames; ++t) {
        RandomStream rng = derive_stream(seed, kSaltTruth, static_cast<std::uint64_t>(t));
        std::vector<ObjectState> frame;

        if (t > 0) {
            for (const auto& prev : truth[t - 1]) {
                if (rng.uniform() < model.lambda_death) continue;  // death
                ObjectState obj = prev;
                const Vec4 mean = model.motion.predict_mean(prev.box.v);
                obj.box = sample_valid_box(mean, motion_chol, config.arena, rng, true);
                frame.push_back(obj);
            }
        }

        int births;
        if (t == 0 && config.init_objects >= 0)
            births = config.init_objects;
        else
            births = rng.poisson(model.birth_rate(t));
        for (int b = 0; b < births; ++b) {
            ObjectState obj;
            obj.box = sample_valid_box(model.prior_mean.v, prior_chol, config.arena,
                                       rng, true);
            obj.class_id = static_cast<int>(rng.uniform() * model.num_classes);
            obj.class_id = std::min(obj.class_id, model.num_classes - 1);
            obj.track_id = next_id++;
            frame.push_back(obj);
        }
        truth[t] = std::move(frame);
    }
    return truth;
}

FrameObservations render_anchors(const std::vector<ObjectState>& truth_frame,
                                 int frame_index, const SimConfig& config,
                                 RandomStream& rng) {
    const auto& model = config.model;
    Eigen::LLT<Mat4> emit_chol(config.emit_cov);
    if (emit_chol.info() != Eigen::Success)
        throw std::invalid_argument("render_anchors: emit_cov not SPD");
    Eigen::LLT<Mat4> prior_chol(model.prior_cov);

    FrameObservations frame;
    frame.frame_index = frame_index;

    std::vector<double> real_alphas(model.num_classes, 1.0);
    auto emit_object = [&](const Vec4& center, int class_id, bool is_real) {
        const int count = 1 + rng.poisson(config.lambda_anchor);
        for (int a = 0; a < count; ++a) {
            AnchorObservation anchor;
            anchor.box = sample_valid_box(center, emit_chol, config.arena, rng, false);
            if (is_real) {
                anchor.appearance = rng.beta(model.alpha + 1.0, 1.0);
                std::fill(real_alphas.begin(), real_alphas.end(), 1.0);
                real_alphas[class_id] = model.alpha + 1.0;
                const auto scores = rng.dirichlet(real_alphas);
                anchor.class_scores =
                    Eigen::Map<const Eigen::VectorXd>(scores.data(), scores.size());
            } else {
                anchor.appearance = rng.beta(1.0, model.alpha + 1.0);
                const std::vector<double> uniform_alphas(model.num_classes, 1.0);
                const auto scores = rng.dirichlet(uniform_alphas);
                anchor.class_scores =
                    Eigen::Map<const Eigen::VectorXd>(scores.data(), scores.size());
            }
            // Appearance scores of exactly 0 or 1 break the Beta density;
            // nudge into the open interval.
            anchor.appearance = std::clamp(anchor.appearance, 1e-12, 1.0 - 1e-12);
            frame.anchors.push_back(std::move(anchor));
        }
    };

    for (const auto& obj : truth_frame) emit_object(obj.box.v, obj.class_id, true);

    const int clutter_clusters = rng.poisson(config.lambda_clutter);
    for (int c = 0; c < clutter_clusters; ++c) {
        const Box center = sample_valid_box(model.prior_mean.v, prior_chol, config.arena,
                                            rng, false);
        emit_object(center.v, 0, false);
    }
    return frame;
}

Scene simulate(const SimConfig& config, std::uint64_t seed) {
    Scene scene;
    scene.truth = generate_truth(config, seed);
    scene.observations.resize(config.frames);
    for (int t = 0; t < config.frames; ++t) {
        RandomStream rng = derive_stream(seed, kSaltAnchors, static_cast<std::uint64_t>(t));
        scene.observations[t] = render_anchors(scene.truth[t], t, config, rng);
    }
    return scene;
}

}  // namespace bdt
