#include "bdt/model.hpp"

#include "bdt/clustering.hpp"

#include <cmath>
#include <stdexcept>

namespace bdt {

std::pair<Vec4, Vec4> motion_predict(const ObjectState& state, const MotionParams& motion) {
    return {motion.predict_mean(state.box.v), motion.variance()};
}

double transition_log_prob(const Box& next_box, const ObjectState& state,
                           const MotionParams& motion) {
    const auto [mean, var] = motion_predict(state, motion);
    return log_normal_diag(next_box.v, mean, var);
}

double birth_death_log_prob(int k_prev, int k_survived, int k_new,
                            const ModelParams& params, double birth_rate) {
    if (k_survived < 0 || k_survived > k_prev)
        throw std::domain_error("birth_death_log_prob: require 0 <= k_survived <= k_prev");
    if (k_new < 0)
        throw std::domain_error("birth_death_log_prob: k_new must be >= 0");
    const double rate = birth_rate >= 0.0 ? birth_rate : params.lambda_birth;
    return xlogy(k_prev - k_survived, params.lambda_death) +
           xlogy(k_survived, 1.0 - params.lambda_death) +
           log_poisson(k_new, rate);
}

double association_log_prior(int k_survived, int k_total_new) {
    if (k_survived > k_total_new)
        throw std::domain_error("association_log_prior: k_survived > k_total_new");
    return -log_binomial(k_total_new, k_survived);
}

double new_object_log_prior(const Box& box, int class_id, const ModelParams& params) {
    if (class_id < 0 || class_id >= params.num_classes)
        throw std::domain_error("new_object_log_prior: class_id out of range");
    return log_normal_full(box.v, params.prior_mean.v, params.prior_cov) -
           std::log(static_cast<double>(params.num_classes));
}

double class_emission_log_prob(const Eigen::VectorXd& class_scores, int true_class,
                               double alpha) {
    if (true_class < 0 || true_class >= class_scores.size())
        throw std::domain_error("class_emission_log_prob: true_class out of range");
    const int k = static_cast<int>(class_scores.size());
    const double norm = std::lgamma(k + alpha) - std::lgamma(alpha + 1.0);
    const double s = class_scores[true_class];
    if (s <= 0.0) return kNegInf;
    return norm + alpha * std::log(s);
}

double appearance_emission_log_prob(double e, bool is_real, double alpha) {
    if (!(e > 0.0 && e < 1.0))
        throw std::domain_error("appearance_emission_log_prob: e must be in (0,1)");
    const double norm = std::log(alpha + 1.0);
    return is_real ? norm + alpha * std::log(e) : norm + alpha * std::log1p(-e);
}

double location_emission_log_prob(const Box& anchor_box, const Box& object_box,
                                  const Mat4& scatter) {
    return log_normal_full(anchor_box.v, object_box.v, scatter);
}

double joint_transition_log_prob(std::span<const ObjectState> prev,
                                 std::span<const ObjectState> next,
                                 const AssociationResult& assoc,
                                 const ModelParams& params,
                                 double birth_rate) {
    const int k_prev = static_cast<int>(prev.size());
    const int k_total = static_cast<int>(next.size());
    const int k_survived = static_cast<int>(assoc.matches.size());
    const int k_new = k_total - k_survived;
    if (k_new < 0 || k_survived > k_prev)
        throw std::domain_error("joint_transition_log_prob: inconsistent association");

    double lp = association_log_prior(k_survived, k_total) +
                birth_death_log_prob(k_prev, k_survived, k_new, params, birth_rate);
    for (const auto& [pi, ni] : assoc.matches) {
        if (prev[pi].class_id != next[ni].class_id) return kNegInf;
        lp += transition_log_prob(next[ni].box, prev[pi], params.motion);
    }
    for (int ni : assoc.unmatched_new)
        lp += new_object_log_prior(next[ni].box, next[ni].class_id, params);
    return lp;
}

double joint_emission_log_prob(std::span<const AnchorObservation> anchors,
                               std::span<const Cluster> clusters,
                               std::span<const ObjectState> objects,
                               std::span<const int> assignment,
                               const ModelParams& params) {
    if (assignment.size() != anchors.size())
        throw std::invalid_argument("joint_emission_log_prob: assignment size mismatch");

    std::vector<int> anchor_cluster(anchors.size(), -1);
    for (std::size_t c = 0; c < clusters.size(); ++c)
        for (int a : clusters[c].anchor_indices) anchor_cluster[a] = static_cast<int>(c);

    double lp = 0.0;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
        const int obj = assignment[a];
        if (obj < 0) {
            lp += appearance_emission_log_prob(anchors[a].appearance, false, params.alpha) +
                  params.clutter_log_const;
            continue;
        }
        const int c = anchor_cluster[a];
        if (c < 0)
            throw std::invalid_argument("joint_emission_log_prob: anchor not in any cluster");
        lp += appearance_emission_log_prob(anchors[a].appearance, true, params.alpha);
        lp += location_emission_log_prob(anchors[a].box, objects[obj].box,
                                         clusters[c].scatter);
        lp += class_emission_log_prob(anchors[a].class_scores, objects[obj].class_id,
                                      params.alpha);
        if (lp == kNegInf) return kNegInf;
    }
    return lp;
}

double tracking_pair_loss(const Vec4& prev_box, const Vec4& next_box,
                          const MotionParams& motion, MotionGrad* grad) {
    const Vec4 g = motion.predict_mean(prev_box);
    const Vec4 prec = motion.precision();
    const Vec4 r = next_box - g;
    double loss = 0.0;
    for (int d = 0; d < 4; ++d)
        loss += 0.5 * r[d] * r[d] * prec[d] + motion.log_std[d];
    if (grad) {
        const Vec4 dg = -(prec.array() * r.array()).matrix();  // d loss / d g
        grad->b += dg;
        grad->A += dg * prev_box.transpose();
        for (int d = 0; d < 4; ++d)
            grad->s[d] += 1.0 - r[d] * r[d] * prec[d];
    }
    return loss;
}

std::vector<int> assign_clusters_to_objects(std::span<const Cluster> clusters,
                                            std::span<const AnchorObservation> anchors,
                                            std::span<const ObjectState> objects,
                                            double iou_gate) {
    std::vector<int> assignment(anchors.size(), -1);
    for (const auto& cluster : clusters) {
        int best = -1;
        double best_iou = iou_gate;
        for (std::size_t o = 0; o < objects.size(); ++o) {
            const double v = iou(cluster.mean, objects[o].box);
            if (v >= best_iou) {
                best_iou = v;
                best = static_cast<int>(o);
            }
        }
        for (int a : cluster.anchor_indices) assignment[a] = best;
    }
    return assignment;
}

SupervisedLossResult supervised_loss(std::span<const LabeledFrame> frames,
                                     const ModelParams& params) {
    SupervisedLossResult out;
    for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
        for (const auto& cur : frames[t].objects) {
            for (const auto& nxt : frames[t + 1].objects) {
                if (nxt.track_id != cur.track_id) continue;
                if (nxt.class_id != cur.class_id)
                    throw std::invalid_argument("supervised_loss: class changed on a track");
                out.tracking += tracking_pair_loss(cur.box.v, nxt.box.v,
                                                   params.motion, &out.grad);
                out.pair_count += 1;
            }
        }
    }
    // Detection terms: constant in the motion parameters, included so the
    // reported loss is the full negative joint log-likelihood (additive
    // constants dropped).
    for (const auto& frame : frames) {
        if (frame.obs.anchors.empty()) continue;
        const auto clusters = make_clusters(frame.obs, params);
        const auto assignment = assign_clusters_to_objects(
            clusters, frame.obs.anchors, frame.objects, params.iou_min);
        out.detection -= joint_emission_log_prob(frame.obs.anchors, clusters,
                                                 frame.objects, assignment, params);
    }
    out.loss = out.tracking + out.detection;
    return out;
}

}  // namespace bdt
