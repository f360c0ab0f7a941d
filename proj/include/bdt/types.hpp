#pragma once

#include "bdt/geometry.hpp"
#include "bdt/logprob.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bdt {

/// One hypothesized object: box, class label, stable track id.
/// The class never changes over a track's lifetime.
struct ObjectState {
    Box box;
    int class_id = 0;
    std::int64_t track_id = 0;
};

/// One detector output: box, appearance score in (0,1), class scores on
/// the simplex.
struct AnchorObservation {
    Box box;
    double appearance = 0.5;
    Eigen::VectorXd class_scores;
};

struct FrameObservations {
    int frame_index = 0;
    std::vector<AnchorObservation> anchors;
};

/// A greedy-IoU group of anchors treated as repeated noisy observations
/// of one candidate object, with fused sufficient statistics.
struct Cluster {
    std::vector<int> anchor_indices;
    Box mean;
    Mat4 scatter = Mat4::Identity();
    int count = 0;
    Eigen::VectorXd fused_class;      ///< posterior class weights (simplex)
    double inclusion_prob = 0.5;      ///< probability the cluster is a real object
    // Per-cluster constants reused by the importance weight:
    double log_class_norm = 0.0;      ///< log sum_k prod_a scores[k]^alpha
    double sum_log_e = 0.0;           ///< sum_a log(e_a)
    double sum_log_1me = 0.0;         ///< sum_a log(1 - e_a)
    Mat4 scatter_inv = Mat4::Identity();
    double log_det_scatter = 0.0;
    double data_quad = 0.0;           ///< sum_a box_a^T scatter^-1 box_a
};

/// Matching between a previous object set and a new candidate set.
struct AssociationResult {
    std::vector<std::pair<int, int>> matches;  ///< (prev index, new index)
    std::vector<int> unmatched_new;
    std::vector<int> unmatched_prev;
};

/// Linear-Gaussian motion map: next ~ N(A x + b, diag(exp(2 s))).
struct MotionParams {
    Mat4 A = Mat4::Identity();
    Vec4 b = Vec4::Zero();
    Vec4 log_std = Vec4::Zero();

    Vec4 predict_mean(const Vec4& x) const { return A * x + b; }
    Vec4 variance() const { return (2.0 * log_std).array().exp(); }
    Vec4 precision() const { return (-2.0 * log_std).array().exp(); }
};

/// Gradient holder shaped like MotionParams.
struct MotionGrad {
    Mat4 A = Mat4::Zero();
    Vec4 b = Vec4::Zero();
    Vec4 s = Vec4::Zero();

    MotionGrad& operator+=(const MotionGrad& o) {
        A += o.A; b += o.b; s += o.s;
        return *this;
    }
    MotionGrad& operator*=(double c) {
        A *= c; b *= c; s *= c;
        return *this;
    }
    double norm() const {
        return std::sqrt(A.squaredNorm() + b.squaredNorm() + s.squaredNorm());
    }
    bool all_finite() const { return A.allFinite() && b.allFinite() && s.allFinite(); }
};

/// Generative-model parameters. Call finalize() after construction; it
/// validates invariants and caches derived quantities. Immutable after
/// that, so instances may be shared across threads.
struct ModelParams {
    double lambda_death = 0.05;    ///< per-object per-frame death probability
    double lambda_birth = 0.2;     ///< Poisson birth rate per frame
    double lambda_birth0 = -1.0;   ///< frame-0 birth rate; <0 means lambda_birth
    double alpha = 1.0;            ///< emission concentration
    Box prior_mean;                ///< new-object location prior mean
    Mat4 prior_cov = Mat4::Identity();
    int num_classes = 2;
    MotionParams motion;
    double iou_min = 0.3;          ///< association gate
    double cluster_iou = 0.5;      ///< greedy clustering threshold
    double eps_pd = 1e-6;          ///< scatter ridge

    // Cached by finalize():
    Mat4 prior_cov_inv = Mat4::Identity();
    double prior_log_det = 0.0;
    double prior_quad = 0.0;           ///< mu0' Sigma0^-1 mu0
    double clutter_log_const = 0.0;    ///< per-anchor location+class marginal
    double real_anchor_log_norm = 0.0; ///< per-anchor Beta+Dirichlet normalizers
    double clutter_anchor_log_norm = 0.0;

    double birth_rate(int frame_index) const {
        return (frame_index == 0 && lambda_birth0 >= 0.0) ? lambda_birth0 : lambda_birth;
    }

    void finalize() {
        if (lambda_death < 0.0 || lambda_death >= 1.0)
            throw std::invalid_argument("ModelParams: lambda_death must be in [0,1)");
        if (lambda_birth < 0.0)
            throw std::invalid_argument("ModelParams: lambda_birth must be >= 0");
        if (alpha < 0.0)
            throw std::invalid_argument("ModelParams: alpha must be >= 0");
        if (num_classes < 1)
            throw std::invalid_argument("ModelParams: num_classes must be >= 1");
        if (iou_min <= 0.0 || iou_min > 1.0)
            throw std::invalid_argument("ModelParams: iou_min must be in (0,1]");
        if (eps_pd <= 0.0)
            throw std::invalid_argument("ModelParams: eps_pd must be > 0");
        if (!motion.A.allFinite() || !motion.b.allFinite() || !motion.log_std.allFinite())
            throw std::invalid_argument("ModelParams: motion parameters must be finite");

        Eigen::LLT<Mat4> llt(prior_cov);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("ModelParams: prior_cov must be SPD");
        prior_cov_inv = llt.solve(Mat4::Identity());
        prior_log_det = log_det_spd(prior_cov);
        prior_quad = prior_mean.v.dot(prior_cov_inv * prior_mean.v);

        // Clutter anchors are scored by a fixed marginal: the expected log
        // prior-predictive density of a location draw (Gaussian-Gaussian
        // pair with the anchor scatter absorbed into the prior) plus the
        // uniform-Dirichlet class marginal at the simplex barycenter.
        const double loc_marginal = -2.0 * kLog2Pi - 0.5 * prior_log_det - 2.0;
        const double cls_marginal = std::lgamma(num_classes + alpha) -
                                    std::lgamma(alpha + 1.0) -
                                    alpha * std::log(static_cast<double>(num_classes));
        clutter_log_const = loc_marginal + cls_marginal;

        real_anchor_log_norm = std::log(alpha + 1.0) +
                               std::lgamma(num_classes + alpha) -
                               std::lgamma(alpha + 1.0);
        clutter_anchor_log_norm = std::log(alpha + 1.0);
        finalized_ = true;
    }

    bool finalized() const { return finalized_; }

private:
    bool finalized_ = false;
};

}  // namespace bdt
