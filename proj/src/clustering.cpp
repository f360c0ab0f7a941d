#include "bdt/clustering.hpp"

#include <algorithm>
#include <cmath>

namespace bdt {

double anchor_score(const AnchorObservation& anchor) {
    double best = 0.0;
    for (int k = 0; k < anchor.class_scores.size(); ++k)
        best = std::max(best, anchor.class_scores[k]);
    return anchor.appearance * best;
}

namespace {

// Value-based total order on anchors; makes member traversal independent
// of input permutation.
bool anchor_less(const AnchorObservation& a, const AnchorObservation& b) {
    for (int d = 0; d < 4; ++d) {
        if (a.box.v[d] != b.box.v[d]) return a.box.v[d] < b.box.v[d];
    }
    if (a.appearance != b.appearance) return a.appearance < b.appearance;
    for (int k = 0; k < std::min(a.class_scores.size(), b.class_scores.size()); ++k) {
        if (a.class_scores[k] != b.class_scores[k])
            return a.class_scores[k] < b.class_scores[k];
    }
    return a.class_scores.size() < b.class_scores.size();
}

}  // namespace

std::vector<Cluster> cluster_anchors(const FrameObservations& frame,
                                     double iou_threshold) {
    const auto& anchors = frame.anchors;
    const int n = static_cast<int>(anchors.size());
    std::vector<bool> assigned(n, false);
    std::vector<Cluster> clusters;

    for (int remaining = n; remaining > 0;) {
        int center = -1;
        for (int i = 0; i < n; ++i) {
            if (assigned[i]) continue;
            if (center < 0 || anchor_score(anchors[i]) > anchor_score(anchors[center]) ||
                (anchor_score(anchors[i]) == anchor_score(anchors[center]) &&
                 anchor_less(anchors[center], anchors[i])))
                center = i;
        }
        Cluster cluster;
        cluster.anchor_indices.push_back(center);
        assigned[center] = true;
        --remaining;
        for (int i = 0; i < n; ++i) {
            if (assigned[i]) continue;
            if (iou(anchors[center].box, anchors[i].box) > iou_threshold) {
                cluster.anchor_indices.push_back(i);
                assigned[i] = true;
                --remaining;
            }
        }
        std::sort(cluster.anchor_indices.begin(), cluster.anchor_indices.end(),
                  [&](int a, int b) { return anchor_less(anchors[a], anchors[b]); });
        cluster.count = static_cast<int>(cluster.anchor_indices.size());
        clusters.push_back(std::move(cluster));
    }
    return clusters;
}

void cluster_statistics(Cluster& cluster, std::span<const AnchorObservation> anchors,
                        double alpha, double eps_pd) {
    const int m = static_cast<int>(cluster.anchor_indices.size());
    const int num_classes =
        m > 0 ? static_cast<int>(anchors[cluster.anchor_indices[0]].class_scores.size()) : 0;
    cluster.count = m;

    Vec4 mean = Vec4::Zero();
    Mat4 second = Mat4::Zero();
    Eigen::VectorXd log_class = Eigen::VectorXd::Zero(num_classes);
    double logit = 0.0;  // sum_a alpha * (log e - log(1-e))
    cluster.sum_log_e = 0.0;
    cluster.sum_log_1me = 0.0;

    for (int idx : cluster.anchor_indices) {
        const auto& a = anchors[idx];
        mean += a.box.v;
        second += a.box.v * a.box.v.transpose();
        for (int k = 0; k < num_classes; ++k) {
            const double s = a.class_scores[k];
            log_class[k] += alpha * (s > 0.0 ? std::log(s) : kNegInf);
        }
        const double le = std::log(a.appearance);
        const double l1e = std::log1p(-a.appearance);
        cluster.sum_log_e += le;
        cluster.sum_log_1me += l1e;
        logit += alpha * (le - l1e);
    }
    mean /= m;
    cluster.mean = Box(mean);
    cluster.scatter = (alpha / m) * second - alpha * mean * mean.transpose() +
                      eps_pd * Mat4::Identity();

    cluster.log_class_norm = logsumexp(std::span<const double>(log_class.data(),
                                                               log_class.size()));
    cluster.fused_class = Eigen::VectorXd::Zero(num_classes);
    for (int k = 0; k < num_classes; ++k)
        cluster.fused_class[k] = std::exp(log_class[k] - cluster.log_class_norm);

    // p = 1 / (1 + exp(-logit)), computed stably from the log odds.
    cluster.inclusion_prob = 1.0 / (1.0 + std::exp(-logit));

    Eigen::LLT<Mat4> llt(cluster.scatter);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("cluster_statistics: scatter not SPD");
    cluster.scatter_inv = llt.solve(Mat4::Identity());
    cluster.log_det_scatter = log_det_spd(cluster.scatter);
    cluster.data_quad = 0.0;
    for (int idx : cluster.anchor_indices) {
        const Vec4& x = anchors[idx].box.v;
        cluster.data_quad += x.dot(cluster.scatter_inv * x);
    }
}

std::vector<Cluster> make_clusters(const FrameObservations& frame,
                                   const ModelParams& params) {
    auto clusters = cluster_anchors(frame, params.cluster_iou);
    for (auto& c : clusters)
        cluster_statistics(c, frame.anchors, params.alpha, params.eps_pd);
    return clusters;
}

}  // namespace bdt
