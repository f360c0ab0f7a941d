#pragma once

#include "bdt/filter.hpp"
#include "bdt/metrics.hpp"
#include "bdt/types.hpp"

#include <span>
#include <vector>

namespace bdt {

enum class BaselineKind {
    SingleDetector,
    FrameBayesian,
    GreedyLink,
    GreedyOffsetLink,
    KalmanLink,
};

struct BaselineConfig {
    double nms_iou = 0.5;
    double score_min = 0.15;    ///< single-detector confidence floor
    double p_min = 0.5;         ///< inclusion-probability floor (Bayesian baselines)
    int kalman_min_hits = 2;    ///< confirmation length before Kalman tracks emit
};

/// Greedy NMS over raw anchors; confidence is appearance times best
/// class score.
std::vector<Detection> single_detector(const FrameObservations& frame,
                                       const BaselineConfig& config);

/// Per-frame Bayesian inference: cluster statistics fused with the
/// new-object prior (the unmatched proposal posterior), thresholded on
/// inclusion probability. Emits covariances.
std::vector<Detection> frame_bayesian(const FrameObservations& frame,
                                      const ModelParams& params,
                                      const BaselineConfig& config);

/// Frame-by-frame bipartite linking of single-detector outputs on IoU
/// (optionally against motion-predicted boxes). Unmatched detections
/// start new tracks; unmatched tracks terminate.
TrackOutput greedy_link(std::span<const FrameObservations> frames,
                        const ModelParams& params, const BaselineConfig& config,
                        bool use_motion_offset);

/// Per-track Kalman filtering of cluster means (measurement noise =
/// scatter of the cluster mean), bipartite matching on predicted IoU,
/// confirmation before emission.
TrackOutput kalman_link(std::span<const FrameObservations> frames,
                        const ModelParams& params, const BaselineConfig& config);

/// Uniform entry point; runs the chosen baseline over a sequence and
/// returns per-frame track records (per-frame methods get fresh ids).
TrackOutput run_baseline(BaselineKind kind, std::span<const FrameObservations> frames,
                         const ModelParams& params, const BaselineConfig& config);

}  // namespace bdt
