#pragma once

#include "bdt/clustering.hpp"
#include "bdt/model.hpp"
#include "bdt/rng.hpp"
#include "bdt/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace bdt {

/// One object inside a particle, carrying the covariance of its most
/// recent proposal update (reported as the track's posterior covariance).
struct TrackedObject {
    ObjectState state;
    Mat4 post_cov = Mat4::Identity();
};

struct Particle {
    std::vector<TrackedObject> objects;
    double log_weight = 0.0;  ///< normalized; logsumexp over particles is 0
    int ancestor = 0;
    std::int64_t next_track_id = 0;
};

struct FilterState {
    std::vector<Particle> particles;
    int frame_index = -1;              ///< last processed frame
    double log_marginal_estimate = 0.0;
    std::uint64_t seed = 0;
};

/// Conjugate fusion of a Gaussian prior with a cluster's repeated
/// observations; the closed form behind both proposal updates.
struct ProposalResult {
    Vec4 mean;                ///< mu'
    Mat4 cov;                 ///< Sigma'
    double log_det_cov = 0.0;
    double quad = 0.0;        ///< mu'^T Sigma'^-1 mu'
    Box sample;
    double log_density = 0.0; ///< log N(sample; mu', Sigma')
};

/// Posterior update for an object matched to a cluster: precision
/// diag(exp(-2s)) around the motion prediction fused with M_i cluster
/// observations. Class and track id are inherited by the caller.
ProposalResult proposal_update_matched(const ObjectState& prev, const Cluster& cluster,
                                       const MotionParams& motion, RandomStream& rng);

/// Posterior update for an unmatched (new) object: new-object prior fused
/// with the cluster observations.
ProposalResult proposal_update_unmatched(const Cluster& cluster, const ModelParams& params,
                                         RandomStream& rng);

/// Inclusion and class sampling over the frame's clusters (Steps 1-4 of
/// the initial sample). Boxes start at the cluster means; track ids are
/// birth-event ids derived from (frame, cluster) so they agree across
/// particles that include the same cluster.
struct InitialSample {
    std::vector<int> included;        ///< cluster indices, ascending
    std::vector<char> include_mask;   ///< per cluster
    std::vector<ObjectState> objects; ///< one per included cluster
};
InitialSample initial_sample(std::span<const Cluster> clusters, int frame_index,
                             RandomStream& rng);

/// Hungarian association between previous objects and the sampled new
/// candidates. Affinity is log IoU(motion-predicted prev, cluster mean)
/// plus the log fused class score at the previous object's class; pairs
/// below the IoU gate are rejected after solving.
AssociationResult associate(std::span<const ObjectState> prev_objects,
                            std::span<const ObjectState> new_objects,
                            std::span<const Cluster> clusters,
                            std::span<const int> new_to_cluster,
                            const MotionParams& motion, double iou_min);

/// Everything recorded while propagating one particle through one frame;
/// enough to recompute the weight by direct density ratios and to form
/// motion-parameter gradients.
struct MatchedUpdate {
    int prev_index = -1;
    int cluster_index = -1;
    int ancestor_class = 0;
    Vec4 ancestor_box;
    Vec4 predicted_mean;     ///< g = A x + b
    ProposalResult proposal;
};
struct UnmatchedUpdate {
    int cluster_index = -1;
    int sampled_class = 0;
    ProposalResult proposal;
};
struct ParticleRecord {
    InitialSample init;
    AssociationResult assoc;          ///< indices into (prev objects, init.objects)
    std::vector<MatchedUpdate> matched;
    std::vector<UnmatchedUpdate> unmatched;
    int k_prev = 0;
    int k_survived = 0;
    int k_total_new = 0;
    double log_weight_increment = 0.0;
};

/// Closed-form Theorem-1 importance weight of one propagation: count
/// terms, appearance/inclusion terms, quadratic-form and determinant
/// residues of the conjugate fusions, and the matched fused-class factor.
double importance_weight(const ParticleRecord& record,
                         std::span<const Cluster> clusters,
                         const ModelParams& params, int frame_index);

/// Gradient of the closed-form log weight over the motion parameters
/// (only matched updates contribute).
MotionGrad importance_weight_motion_grad(const ParticleRecord& record,
                                         const MotionParams& motion);

double effective_sample_size(std::span<const Particle> particles);

/// Systematic resampling in place; records ancestors and resets weights
/// to uniform. Throws on a degenerate (all zero-weight) particle set.
void resample(FilterState& state, RandomStream& rng);

struct StepTrace {
    std::vector<Cluster> clusters;
    std::vector<ParticleRecord> records;
    std::vector<double> norm_weights;  ///< post-update, pre-resample
    double log_mean_weight = 0.0;
    double ess = 0.0;
    bool resampled = false;
};

/// One full filter step: cluster the frame, propagate every particle
/// (inclusion sample, association, proposal updates), weight, accumulate
/// the marginal-likelihood increment, and resample when ESS < N/2.
/// Per-particle work uses counter-derived RNG streams, so results are
/// identical for any worker-thread count.
void step(FilterState& state, const FrameObservations& frame, const ModelParams& params,
          StepTrace* trace = nullptr);

FilterState init_filter(int num_particles, std::uint64_t seed);

/// Initializes every particle at the given objects (used by the
/// semi-supervised runs that condition on a labeled frame).
FilterState init_filter_at(int num_particles, std::uint64_t seed,
                           std::span<const ObjectState> objects, const Mat4& cov);

struct TrackRecord {
    std::int64_t id = 0;
    Box box;
    Mat4 cov = Mat4::Identity();
    int class_id = 0;
    double confidence = 1.0;
};
struct TrackFrame {
    int frame_index = 0;
    std::vector<TrackRecord> tracks;
};
using TrackOutput = std::vector<TrackFrame>;

/// Tracks of the highest-weight particle with ensemble existence
/// confidences (weight mass of particles containing the same track id).
TrackFrame extract_frame_tracks(const FilterState& state);

struct FilterRun {
    TrackOutput tracks;
    double log_marginal = 0.0;
};

FilterRun run_filter(std::span<const FrameObservations> frames, const ModelParams& params,
                     int num_particles, std::uint64_t seed,
                     std::vector<StepTrace>* traces = nullptr);

}  // namespace bdt
