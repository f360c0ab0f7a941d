#pragma once

#include "bdt/rng.hpp"
#include "bdt/types.hpp"

#include <cstdint>
#include <vector>

namespace bdt {

/// Synthetic-world configuration: the generative model's true parameters
/// plus detector-side knobs (anchor multiplicity, clutter rate, emission
/// covariance) that stand in for the detector network.
struct SimConfig {
    ModelParams model;
    int frames = 50;
    double lambda_anchor = 2.0;   ///< anchors per object ~ 1 + Poisson(rate)
    double lambda_clutter = 0.5;  ///< clutter clusters per frame ~ Poisson(rate)
    Mat4 emit_cov = Mat4::Identity();
    Box arena{0.0, 0.0, 100.0, 100.0};
    int init_objects = -1;        ///< frame-0 object count; <0 means Poisson(birth rate)
};

struct Scene {
    std::vector<std::vector<ObjectState>> truth;  ///< per frame
    std::vector<FrameObservations> observations;  ///< per frame
};

/// Samples ground-truth trajectories from the model dynamics: frame-0
/// births, independent survival at 1 - lambda_D, linear-Gaussian motion,
/// Poisson births from the location prior. Truth boxes are clipped to the
/// arena; degenerate draws are retried.
std::vector<std::vector<ObjectState>> generate_truth(const SimConfig& config,
                                                     std::uint64_t seed);

/// Renders one frame of anchors from live objects (Gaussian boxes,
/// Beta(alpha+1,1) appearance, Dirichlet class scores) plus clutter
/// clusters drawn around latent prior locations.
FrameObservations render_anchors(const std::vector<ObjectState>& truth_frame,
                                 int frame_index, const SimConfig& config,
                                 RandomStream& rng);

Scene simulate(const SimConfig& config, std::uint64_t seed);

}  // namespace bdt
