#pragma once

#include "bdt/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace bdt {

/// One scored detection as consumed by the metrics. Methods without a
/// posterior covariance leave `cov` empty and are evaluated with a fixed
/// isotropic corner covariance.
struct Detection {
    Box box;
    int class_id = 0;
    double confidence = 0.0;
    std::optional<Mat4> cov;
};

struct FrameDetections {
    int frame_index = 0;
    std::vector<Detection> detections;
};

struct FrameTruth {
    int frame_index = 0;
    std::vector<ObjectState> objects;
};

/// Probabilistic detection: Gaussian corner beliefs plus a class simplex.
struct ProbDetection {
    Eigen::Vector2d corner_mean[2];
    Eigen::Matrix2d corner_cov[2];
    Eigen::VectorXd class_dist;
};

/// Builds the probabilistic view of a detection. Covariance blocks come
/// from the 4x4 box covariance when present, else default_std^2 * I. The
/// class distribution is the one-hot of the predicted class.
ProbDetection to_prob_detection(const Detection& det, int num_classes,
                                double default_std);

struct APResult {
    std::map<int, double> per_class;  ///< classes with ground truth only
    double mean = 0.0;
};

/// VOC-style average precision at a fixed IoU threshold: detections are
/// ranked by confidence, greedily matched one-to-one per class, and the
/// all-point interpolated PR curve is integrated. Classes with no ground
/// truth are excluded from the mean.
APResult average_precision(std::span<const FrameDetections> detections,
                           std::span<const FrameTruth> truth,
                           double iou_threshold = 0.5);

/// Pairwise detection quality in [0,1]: geometric mean of spatial quality
/// (per-corner Gaussian likelihood of the ground-truth corners divided by
/// its value at the mean, averaged in log space) and label quality (class
/// probability of the true class).
double pdq_pairwise(const ProbDetection& det, const ObjectState& gt);

/// Frame score: optimal one-to-one assignment maximizing summed pairwise
/// quality; score = sum of assigned qualities / (TP + FP + FN). Pairs of
/// zero quality do not count as true positives. Empty-vs-empty scores 1.
double pdq_frame(std::span<const ProbDetection> detections,
                 std::span<const ObjectState> ground_truths);

/// Mean per-frame PDQ over a sequence.
double pdq_sequence(std::span<const FrameDetections> detections,
                    std::span<const FrameTruth> truth, int num_classes,
                    double default_std);

}  // namespace bdt
