#pragma once

#include "bdt/types.hpp"

#include <span>
#include <utility>
#include <vector>

namespace bdt {

/// Predicted transition moments for one object: mean = A x + b,
/// per-dimension variance exp(2 s).
std::pair<Vec4, Vec4> motion_predict(const ObjectState& state, const MotionParams& motion);

/// Diagonal-Gaussian log-density of the next box under the motion model.
double transition_log_prob(const Box& next_box, const ObjectState& state,
                           const MotionParams& motion);

/// log[ lambda_D^(k_prev - k_survived) (1-lambda_D)^k_survived
///      Poisson(k_new; birth_rate) ].
/// birth_rate < 0 selects params.lambda_birth.
double birth_death_log_prob(int k_prev, int k_survived, int k_new,
                            const ModelParams& params, double birth_rate = -1.0);

/// Uniform association prior: -log C(k_total_new, k_survived).
double association_log_prior(int k_survived, int k_total_new);

/// New-object prior: Gaussian location density plus uniform class mass.
double new_object_log_prior(const Box& box, int class_id, const ModelParams& params);

/// Dirichlet emission of a class-score vector conditioned on the true
/// class: Dir(alpha+1 at true_class, 1 elsewhere). Zero observed mass on
/// the true class yields -inf.
double class_emission_log_prob(const Eigen::VectorXd& class_scores, int true_class,
                               double alpha);

/// Beta emission of the appearance score: real anchors ~ Beta(alpha+1, 1)
/// (favoring high e), clutter ~ Beta(1, alpha+1).
double appearance_emission_log_prob(double e, bool is_real, double alpha);

/// Full-covariance Gaussian emission of an anchor box around an object box.
double location_emission_log_prob(const Box& anchor_box, const Box& object_box,
                                  const Mat4& scatter);

/// Joint transition density of one frame step: association prior,
/// birth/death counts, matched motion terms (with the class-constancy
/// indicator), and new-object priors. Absorbing -inf on class mismatch.
double joint_transition_log_prob(std::span<const ObjectState> prev,
                                 std::span<const ObjectState> next,
                                 const AssociationResult& assoc,
                                 const ModelParams& params,
                                 double birth_rate = -1.0);

/// Joint emission density of all anchors in a frame. `assignment` maps
/// each anchor to an object index, or -1 for clutter. An anchor's scatter
/// is taken from its cluster. Includes all normalizing constants, so the
/// value is a proper log-density.
double joint_emission_log_prob(std::span<const AnchorObservation> anchors,
                               std::span<const Cluster> clusters,
                               std::span<const ObjectState> objects,
                               std::span<const int> assignment,
                               const ModelParams& params);

/// One fully annotated frame: detector outputs plus ground-truth objects.
struct LabeledFrame {
    FrameObservations obs;
    std::vector<ObjectState> objects;
};

struct SupervisedLossResult {
    double loss = 0.0;        ///< tracking + detection negative log-likelihood
    double tracking = 0.0;    ///< 1/2 |r|^2_{D^-1} + 1/2 log det D per matched pair
    double detection = 0.0;   ///< emission NLL (constant in MotionParams)
    MotionGrad grad;          ///< d loss / d (A, b, s)
    int pair_count = 0;
};

/// Supervised loss over a labeled sequence. Associations are given by
/// matching track ids between consecutive frames. The detection part is
/// computed from each frame's anchors via greedy cluster-to-label
/// assignment and is constant in the motion parameters.
SupervisedLossResult supervised_loss(std::span<const LabeledFrame> frames,
                                     const ModelParams& params);

/// Tracking-only part of the supervised loss for one matched pair, with
/// its analytic gradient accumulated into `grad`.
double tracking_pair_loss(const Vec4& prev_box, const Vec4& next_box,
                          const MotionParams& motion, MotionGrad* grad);

/// Deterministic cluster-to-label assignment used for detection terms:
/// each cluster goes to the labeled object with maximal IoU against the
/// cluster mean (if above the gate), else to clutter. Returns per-anchor
/// object indices (-1 for clutter).
std::vector<int> assign_clusters_to_objects(std::span<const Cluster> clusters,
                                            std::span<const AnchorObservation> anchors,
                                            std::span<const ObjectState> objects,
                                            double iou_gate);

}  // namespace bdt
