#include "bdt/baselines.hpp"

#include "bdt/assignment.hpp"
#include "bdt/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bdt {

std::vector<Detection> single_detector(const FrameObservations& frame,
                                       const BaselineConfig& config) {
    std::vector<int> order(frame.anchors.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return anchor_score(frame.anchors[a]) > anchor_score(frame.anchors[b]);
    });

    std::vector<Detection> kept;
    for (int idx : order) {
        const auto& anchor = frame.anchors[idx];
        const double score = anchor_score(anchor);
        if (score < config.score_min) continue;
        bool suppressed = false;
        for (const auto& d : kept) {
            if (iou(d.box, anchor.box) > config.nms_iou) {
                suppressed = true;
                break;
            }
        }
        if (suppressed) continue;
        Detection det;
        det.box = anchor.box;
        int best = 0;
        for (int k = 1; k < anchor.class_scores.size(); ++k)
            if (anchor.class_scores[k] > anchor.class_scores[best]) best = k;
        det.class_id = best;
        det.confidence = score;
        kept.push_back(std::move(det));
    }
    return kept;
}

std::vector<Detection> frame_bayesian(const FrameObservations& frame,
                                      const ModelParams& params,
                                      const BaselineConfig& config) {
    std::vector<Detection> out;
    for (const auto& cluster : make_clusters(frame, params)) {
        if (cluster.inclusion_prob < config.p_min) continue;
        // Posterior of the unmatched proposal, taken at its mean.
        const double m = static_cast<double>(cluster.count);
        const Mat4 lambda = params.prior_cov_inv + m * cluster.scatter_inv;
        Eigen::LLT<Mat4> llt(lambda);
        const Vec4 eta = params.prior_cov_inv * params.prior_mean.v +
                         m * (cluster.scatter_inv * cluster.mean.v);
        Detection det;
        det.box = Box(llt.solve(eta));
        det.cov = llt.solve(Mat4::Identity());
        int best = 0;
        for (int k = 1; k < cluster.fused_class.size(); ++k)
            if (cluster.fused_class[k] > cluster.fused_class[best]) best = k;
        det.class_id = best;
        det.confidence = cluster.inclusion_prob;
        out.push_back(std::move(det));
    }
    return out;
}

namespace {

TrackFrame detections_to_frame(int frame_index, const std::vector<Detection>& dets,
                               std::int64_t id_base) {
    TrackFrame tf;
    tf.frame_index = frame_index;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        TrackRecord rec;
        rec.id = id_base + static_cast<std::int64_t>(i);
        rec.box = dets[i].box;
        rec.class_id = dets[i].class_id;
        rec.confidence = dets[i].confidence;
        if (dets[i].cov) rec.cov = *dets[i].cov;
        tf.tracks.push_back(std::move(rec));
    }
    return tf;
}

struct LinkTrack {
    std::int64_t id;
    Detection det;
};

}  // namespace

TrackOutput greedy_link(std::span<const FrameObservations> frames,
                        const ModelParams& params, const BaselineConfig& config,
                        bool use_motion_offset) {
    TrackOutput out;
    std::vector<LinkTrack> tracks;
    std::int64_t next_id = 0;

    for (const auto& frame : frames) {
        const auto dets = single_detector(frame, config);
        const int nt = static_cast<int>(tracks.size());
        const int nd = static_cast<int>(dets.size());

        std::vector<int> det_track(nd, -1);
        if (nt > 0 && nd > 0) {
            Eigen::MatrixXd cost(nt, nd);
            for (int i = 0; i < nt; ++i) {
                Box ref = tracks[i].det.box;
                if (use_motion_offset) ref = Box(params.motion.predict_mean(ref.v));
                for (int j = 0; j < nd; ++j) {
                    const double v = iou(ref, dets[j].box);
                    cost(i, j) = v >= params.iou_min
                                     ? -v
                                     : std::numeric_limits<double>::infinity();
                }
            }
            const Assignment assignment = hungarian_min(cost);
            for (int i = 0; i < nt; ++i)
                if (assignment.row_to_col[i] >= 0) det_track[assignment.row_to_col[i]] = i;
        }

        std::vector<LinkTrack> next_tracks;
        TrackFrame tf;
        tf.frame_index = frame.frame_index;
        for (int j = 0; j < nd; ++j) {
            LinkTrack lt;
            lt.id = det_track[j] >= 0 ? tracks[det_track[j]].id : next_id++;
            lt.det = dets[j];
            TrackRecord rec;
            rec.id = lt.id;
            rec.box = lt.det.box;
            rec.class_id = lt.det.class_id;
            rec.confidence = lt.det.confidence;
            tf.tracks.push_back(rec);
            next_tracks.push_back(std::move(lt));
        }
        tracks = std::move(next_tracks);  // unmatched tracks terminate
        out.push_back(std::move(tf));
    }
    return out;
}

TrackOutput kalman_link(std::span<const FrameObservations> frames,
                        const ModelParams& params, const BaselineConfig& config) {
    struct KalmanTrack {
        std::int64_t id;
        Vec4 mean;
        Mat4 cov;
        int class_id;
        double confidence;
        int hits;
    };

    TrackOutput out;
    std::vector<KalmanTrack> tracks;
    std::int64_t next_id = 0;
    const Mat4 process_noise = Mat4(params.motion.variance().asDiagonal());

    for (const auto& frame : frames) {
        const auto clusters = make_clusters(frame, params);
        std::vector<int> candidates;
        for (std::size_t c = 0; c < clusters.size(); ++c)
            if (clusters[c].inclusion_prob >= config.p_min)
                candidates.push_back(static_cast<int>(c));

        // Predict.
        for (auto& trk : tracks) {
            trk.mean = params.motion.predict_mean(trk.mean);
            trk.cov = params.motion.A * trk.cov * params.motion.A.transpose() + process_noise;
        }

        const int nt = static_cast<int>(tracks.size());
        const int nc = static_cast<int>(candidates.size());
        std::vector<int> cand_track(nc, -1);
        if (nt > 0 && nc > 0) {
            Eigen::MatrixXd cost(nt, nc);
            for (int i = 0; i < nt; ++i)
                for (int j = 0; j < nc; ++j) {
                    const double v = iou(Box(tracks[i].mean), clusters[candidates[j]].mean);
                    cost(i, j) = v >= params.iou_min
                                     ? -v
                                     : std::numeric_limits<double>::infinity();
                }
            const Assignment assignment = hungarian_min(cost);
            for (int i = 0; i < nt; ++i)
                if (assignment.row_to_col[i] >= 0) cand_track[assignment.row_to_col[i]] = i;
        }

        std::vector<KalmanTrack> next_tracks;
        for (int j = 0; j < nc; ++j) {
            const auto& cluster = clusters[candidates[j]];
            const double m = static_cast<double>(cluster.count);
            KalmanTrack trk;
            if (cand_track[j] >= 0) {
                // Information-form update with the cluster mean as the
                // measurement; noise is the scatter of the mean.
                const auto& prev = tracks[cand_track[j]];
                const Mat4 lambda = prev.cov.inverse() + m * cluster.scatter_inv;
                Eigen::LLT<Mat4> llt(lambda);
                const Vec4 eta = prev.cov.inverse() * prev.mean +
                                 m * (cluster.scatter_inv * cluster.mean.v);
                trk.id = prev.id;
                trk.mean = llt.solve(eta);
                trk.cov = llt.solve(Mat4::Identity());
                trk.class_id = prev.class_id;
                trk.hits = prev.hits + 1;
            } else {
                const Mat4 lambda = params.prior_cov_inv + m * cluster.scatter_inv;
                Eigen::LLT<Mat4> llt(lambda);
                const Vec4 eta = params.prior_cov_inv * params.prior_mean.v +
                                 m * (cluster.scatter_inv * cluster.mean.v);
                trk.id = next_id++;
                trk.mean = llt.solve(eta);
                trk.cov = llt.solve(Mat4::Identity());
                int best = 0;
                for (int k = 1; k < cluster.fused_class.size(); ++k)
                    if (cluster.fused_class[k] > cluster.fused_class[best]) best = k;
                trk.class_id = best;
                trk.hits = 1;
            }
            trk.confidence = cluster.inclusion_prob;
            next_tracks.push_back(trk);
        }
        tracks = std::move(next_tracks);  // missed tracks terminate

        TrackFrame tf;
        tf.frame_index = frame.frame_index;
        for (const auto& trk : tracks) {
            if (trk.hits < config.kalman_min_hits) continue;
            TrackRecord rec;
            rec.id = trk.id;
            rec.box = Box(trk.mean);
            rec.cov = trk.cov;
            rec.class_id = trk.class_id;
            rec.confidence = trk.confidence;
            tf.tracks.push_back(rec);
        }
        out.push_back(std::move(tf));
    }
    return out;
}

TrackOutput run_baseline(BaselineKind kind, std::span<const FrameObservations> frames,
                         const ModelParams& params, const BaselineConfig& config) {
    switch (kind) {
        case BaselineKind::SingleDetector: {
            TrackOutput out;
            std::int64_t base = 0;
            for (const auto& frame : frames) {
                const auto dets = single_detector(frame, config);
                out.push_back(detections_to_frame(frame.frame_index, dets, base));
                base += static_cast<std::int64_t>(dets.size());
            }
            return out;
        }
        case BaselineKind::FrameBayesian: {
            TrackOutput out;
            std::int64_t base = 0;
            for (const auto& frame : frames) {
                const auto dets = frame_bayesian(frame, params, config);
                out.push_back(detections_to_frame(frame.frame_index, dets, base));
                base += static_cast<std::int64_t>(dets.size());
            }
            return out;
        }
        case BaselineKind::GreedyLink:
            return greedy_link(frames, params, config, false);
        case BaselineKind::GreedyOffsetLink:
            return greedy_link(frames, params, config, true);
        case BaselineKind::KalmanLink:
            return kalman_link(frames, params, config);
    }
    return {};
}

}  // namespace bdt
