#pragma once

#include "bdt/types.hpp"

#include <span>
#include <vector>

namespace bdt {

/// Anchor score used to pick greedy cluster centers: appearance times the
/// best class score (our anchors carry no explicit background channel).
double anchor_score(const AnchorObservation& anchor);

/// Greedy IoU clustering. Repeatedly takes the unassigned anchor with the
/// highest score as a center and absorbs unassigned anchors whose IoU with
/// the center exceeds the threshold. Every anchor lands in exactly one
/// cluster; clusters come out in descending center-score order and member
/// indices are sorted canonically (by anchor value), so results do not
/// depend on input order beyond genuine score ties.
std::vector<Cluster> cluster_anchors(const FrameObservations& frame,
                                     double iou_threshold = 0.5);

/// Fills mean, scatter, fused class, inclusion probability and the cached
/// per-cluster log constants from the member anchors. Products over
/// members are done in log space.
void cluster_statistics(Cluster& cluster, std::span<const AnchorObservation> anchors,
                        double alpha, double eps_pd);

/// cluster_anchors + cluster_statistics with thresholds from params.
std::vector<Cluster> make_clusters(const FrameObservations& frame,
                                   const ModelParams& params);

}  // namespace bdt
