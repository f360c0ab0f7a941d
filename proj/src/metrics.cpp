#include "bdt/metrics.hpp"

#include "bdt/assignment.hpp"
#include "bdt/logprob.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace bdt {

ProbDetection to_prob_detection(const Detection& det, int num_classes,
                                double default_std) {
    ProbDetection out;
    out.corner_mean[0] = Eigen::Vector2d(det.box.x1(), det.box.y1());
    out.corner_mean[1] = Eigen::Vector2d(det.box.x2(), det.box.y2());
    if (det.cov) {
        out.corner_cov[0] = det.cov->block<2, 2>(0, 0);
        out.corner_cov[1] = det.cov->block<2, 2>(2, 2);
    } else {
        out.corner_cov[0] = default_std * default_std * Eigen::Matrix2d::Identity();
        out.corner_cov[1] = out.corner_cov[0];
    }
    out.class_dist = Eigen::VectorXd::Zero(num_classes);
    if (det.class_id >= 0 && det.class_id < num_classes)
        out.class_dist[det.class_id] = 1.0;
    return out;
}

APResult average_precision(std::span<const FrameDetections> detections,
                           std::span<const FrameTruth> truth,
                           double iou_threshold) {
    struct Det {
        double conf;
        int frame;
        int index;
        const Detection* det;
    };

    std::map<int, std::vector<Det>> dets_by_class;
    std::map<int, int> gt_count;
    std::map<int, const FrameTruth*> truth_by_frame;
    for (const auto& ft : truth) {
        truth_by_frame[ft.frame_index] = &ft;
        for (const auto& gt : ft.objects) gt_count[gt.class_id] += 1;
    }
    for (const auto& fd : detections)
        for (std::size_t i = 0; i < fd.detections.size(); ++i)
            dets_by_class[fd.detections[i].class_id].push_back(
                {fd.detections[i].confidence, fd.frame_index, static_cast<int>(i),
                 &fd.detections[i]});

    APResult result;
    double sum = 0.0;
    int classes = 0;
    for (const auto& [cls, count] : gt_count) {
        auto it = dets_by_class.find(cls);
        std::vector<Det> dets = it == dets_by_class.end() ? std::vector<Det>{} : it->second;
        std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
            if (a.conf != b.conf) return a.conf > b.conf;
            if (a.frame != b.frame) return a.frame < b.frame;
            return a.index < b.index;
        });

        // Greedy one-to-one matching in confidence order.
        std::map<int, std::vector<char>> used;
        std::vector<char> is_tp(dets.size(), 0);
        for (std::size_t d = 0; d < dets.size(); ++d) {
            auto tf = truth_by_frame.find(dets[d].frame);
            if (tf == truth_by_frame.end()) continue;
            const auto& objects = tf->second->objects;
            auto& used_flags = used[dets[d].frame];
            if (used_flags.empty()) used_flags.assign(objects.size(), 0);
            int best = -1;
            double best_iou = iou_threshold;
            for (std::size_t g = 0; g < objects.size(); ++g) {
                if (objects[g].class_id != cls || used_flags[g]) continue;
                const double v = iou(dets[d].det->box, objects[g].box);
                if (v >= best_iou) {
                    best_iou = v;
                    best = static_cast<int>(g);
                }
            }
            if (best >= 0) {
                used_flags[best] = 1;
                is_tp[d] = 1;
            }
        }

        // All-point interpolated area under the PR curve.
        std::vector<double> precision, recall;
        int tp = 0;
        for (std::size_t d = 0; d < dets.size(); ++d) {
            tp += is_tp[d];
            precision.push_back(static_cast<double>(tp) / static_cast<double>(d + 1));
            recall.push_back(static_cast<double>(tp) / count);
        }
        double ap = 0.0;
        double prev_recall = 0.0;
        for (std::size_t d = 0; d < dets.size(); ++d) {
            if (!is_tp[d]) continue;
            double max_p = 0.0;
            for (std::size_t e = d; e < dets.size(); ++e) max_p = std::max(max_p, precision[e]);
            ap += (recall[d] - prev_recall) * max_p;
            prev_recall = recall[d];
        }
        result.per_class[cls] = ap;
        sum += ap;
        ++classes;
    }
    result.mean = classes > 0 ? sum / classes : 0.0;
    return result;
}

double pdq_pairwise(const ProbDetection& det, const ObjectState& gt) {
    const Eigen::Vector2d gt_corner[2] = {
        Eigen::Vector2d(gt.box.x1(), gt.box.y1()),
        Eigen::Vector2d(gt.box.x2(), gt.box.y2()),
    };
    double mean_log_ratio = 0.0;
    for (int c = 0; c < 2; ++c) {
        Eigen::LLT<Eigen::Matrix2d> llt(det.corner_cov[c]);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("pdq_pairwise: corner covariance not SPD");
        const Eigen::Vector2d r = gt_corner[c] - det.corner_mean[c];
        const Eigen::Vector2d z = llt.matrixL().solve(r);
        mean_log_ratio += -0.5 * z.squaredNorm();
    }
    mean_log_ratio /= 2.0;
    const double spatial = std::exp(mean_log_ratio);
    const double label =
        (gt.class_id >= 0 && gt.class_id < det.class_dist.size()) ? det.class_dist[gt.class_id]
                                                                  : 0.0;
    return std::sqrt(spatial * label);
}

double pdq_frame(std::span<const ProbDetection> detections,
                 std::span<const ObjectState> ground_truths) {
    const int nd = static_cast<int>(detections.size());
    const int ng = static_cast<int>(ground_truths.size());
    if (nd == 0 && ng == 0) return 1.0;
    if (nd == 0 || ng == 0) return 0.0;

    Eigen::MatrixXd quality(nd, ng);
    for (int d = 0; d < nd; ++d)
        for (int g = 0; g < ng; ++g)
            quality(d, g) = pdq_pairwise(detections[d], ground_truths[g]);

    const Assignment assignment = hungarian_min(-quality);
    double sum = 0.0;
    int tp = 0;
    for (int d = 0; d < nd; ++d) {
        const int g = assignment.row_to_col[d];
        if (g >= 0 && quality(d, g) > 0.0) {
            sum += quality(d, g);
            ++tp;
        }
    }
    const int fp = nd - tp;
    const int fn = ng - tp;
    return sum / static_cast<double>(tp + fp + fn);
}

double pdq_sequence(std::span<const FrameDetections> detections,
                    std::span<const FrameTruth> truth, int num_classes,
                    double default_std) {
    std::map<int, const FrameDetections*> det_by_frame;
    for (const auto& fd : detections) det_by_frame[fd.frame_index] = &fd;

    double total = 0.0;
    int frames = 0;
    for (const auto& ft : truth) {
        std::vector<ProbDetection> probs;
        auto it = det_by_frame.find(ft.frame_index);
        if (it != det_by_frame.end())
            for (const auto& det : it->second->detections)
                probs.push_back(to_prob_detection(det, num_classes, default_std));
        total += pdq_frame(probs, ft.objects);
        ++frames;
    }
    return frames > 0 ? total / frames : 1.0;
}

}  // namespace bdt
