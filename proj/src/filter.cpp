#include "bdt/filter.hpp"

#include "bdt/assignment.hpp"
#include "bdt/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bdt {

namespace {

constexpr std::uint64_t kSaltPropagate = 0x70726f70ull;
constexpr std::uint64_t kSaltResample = 0x72657361ull;

// Birth-event track ids: same (frame, cluster) birth gets the same id in
// every particle, which is what makes cross-particle id matching (and the
// existence confidence) meaningful.
std::int64_t birth_track_id(int frame_index, int cluster_index) {
    return (static_cast<std::int64_t>(frame_index) + 1) * (1ll << 20) + cluster_index;
}

// Fuse a Gaussian prior (given as precision and precision*mean) with the
// cluster's M repeated observations, then sample.
ProposalResult fuse_and_sample(const Mat4& prior_precision, const Vec4& prior_eta,
                               const Cluster& cluster, RandomStream& rng) {
    const double m = static_cast<double>(cluster.count);
    const Mat4 lambda = prior_precision + m * cluster.scatter_inv;
    const Vec4 eta = prior_eta + m * (cluster.scatter_inv * cluster.mean.v);

    Eigen::LLT<Mat4> llt(lambda);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("proposal update: fused precision not SPD");

    ProposalResult out;
    out.mean = llt.solve(eta);
    out.cov = llt.solve(Mat4::Identity());
    double log_det_lambda = 0.0;
    for (int d = 0; d < 4; ++d) log_det_lambda += 2.0 * std::log(llt.matrixL()(d, d));
    out.log_det_cov = -log_det_lambda;
    out.quad = eta.dot(out.mean);

    Vec4 z;
    for (int d = 0; d < 4; ++d) z[d] = rng.normal();
    // With Lambda = L L^T, x = mu' + L^-T z has covariance Lambda^-1.
    const Vec4 offset = llt.matrixL().transpose().solve(z);
    out.sample = Box(out.mean + offset);
    out.log_density = -0.5 * (4.0 * kLog2Pi - log_det_lambda + z.squaredNorm());
    return out;
}

}  // namespace

ProposalResult proposal_update_matched(const ObjectState& prev, const Cluster& cluster,
                                       const MotionParams& motion, RandomStream& rng) {
    const Vec4 g = motion.predict_mean(prev.box.v);
    const Vec4 prec = motion.precision();
    return fuse_and_sample(prec.asDiagonal(), (prec.array() * g.array()).matrix(),
                           cluster, rng);
}

ProposalResult proposal_update_unmatched(const Cluster& cluster, const ModelParams& params,
                                         RandomStream& rng) {
    return fuse_and_sample(params.prior_cov_inv,
                           params.prior_cov_inv * params.prior_mean.v, cluster, rng);
}

InitialSample initial_sample(std::span<const Cluster> clusters, int frame_index,
                             RandomStream& rng) {
    InitialSample out;
    out.include_mask.assign(clusters.size(), 0);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const bool include = rng.bernoulli(clusters[c].inclusion_prob);
        if (!include) continue;
        out.include_mask[c] = 1;
        out.included.push_back(static_cast<int>(c));

        ObjectState obj;
        obj.box = clusters[c].mean;
        obj.track_id = birth_track_id(frame_index, static_cast<int>(c));
        // Class ~ Categorical(fused class), single uniform through the CDF.
        double u = rng.uniform();
        int cls = static_cast<int>(clusters[c].fused_class.size()) - 1;
        for (int k = 0; k < clusters[c].fused_class.size(); ++k) {
            u -= clusters[c].fused_class[k];
            if (u <= 0.0) { cls = k; break; }
        }
        obj.class_id = cls;
        out.objects.push_back(obj);
    }
    return out;
}

AssociationResult associate(std::span<const ObjectState> prev_objects,
                            std::span<const ObjectState> new_objects,
                            std::span<const Cluster> clusters,
                            std::span<const int> new_to_cluster,
                            const MotionParams& motion, double iou_min) {
    AssociationResult result;
    const int np = static_cast<int>(prev_objects.size());
    const int nn = static_cast<int>(new_objects.size());
    if (np == 0 || nn == 0) {
        for (int j = 0; j < nn; ++j) result.unmatched_new.push_back(j);
        for (int i = 0; i < np; ++i) result.unmatched_prev.push_back(i);
        return result;
    }

    Eigen::MatrixXd iou_mat(np, nn);
    Eigen::MatrixXd cost(np, nn);
    for (int i = 0; i < np; ++i) {
        const Box predicted(motion.predict_mean(prev_objects[i].box.v));
        for (int j = 0; j < nn; ++j) {
            const auto& cluster = clusters[new_to_cluster[j]];
            const double overlap = iou(predicted, cluster.mean);
            iou_mat(i, j) = overlap;
            const double cls = cluster.fused_class[prev_objects[i].class_id];
            if (overlap <= 0.0 || cls <= 0.0) {
                cost(i, j) = std::numeric_limits<double>::infinity();
            } else {
                cost(i, j) = -(std::log(overlap) + std::log(cls));
            }
        }
    }

    const Assignment assignment = hungarian_min(cost);
    std::vector<char> new_used(nn, 0);
    for (int i = 0; i < np; ++i) {
        const int j = assignment.row_to_col[i];
        if (j >= 0 && iou_mat(i, j) >= iou_min) {
            result.matches.emplace_back(i, j);
            new_used[j] = 1;
        } else {
            result.unmatched_prev.push_back(i);
        }
    }
    for (int j = 0; j < nn; ++j)
        if (!new_used[j]) result.unmatched_new.push_back(j);
    return result;
}

double importance_weight(const ParticleRecord& record,
                         std::span<const Cluster> clusters,
                         const ModelParams& params, int frame_index) {
    const int deaths = record.k_prev - record.k_survived;
    const int births = record.k_total_new - record.k_survived;
    double lw = xlogy(deaths, params.lambda_death) +
                xlogy(record.k_survived, 1.0 - params.lambda_death) +
                log_poisson(births, params.birth_rate(frame_index)) -
                log_binomial(record.k_total_new, record.k_survived);

    // Appearance emissions combined with the inclusion proposal, plus the
    // per-anchor normalizers and (for excluded clusters) the clutter
    // marginal; stable in the logit t = alpha (sum log e - sum log(1-e)).
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto& cl = clusters[c];
        const double t = params.alpha * (cl.sum_log_e - cl.sum_log_1me);
        if (record.init.include_mask[c]) {
            lw += params.alpha * cl.sum_log_e + log1p_exp(-t);
            lw += cl.count * params.real_anchor_log_norm + cl.log_class_norm;
        } else {
            lw += params.alpha * cl.sum_log_1me + log1p_exp(t);
            lw += cl.count * (params.clutter_anchor_log_norm + params.clutter_log_const);
        }
    }

    const Vec4 motion_prec = params.motion.precision();
    const double log_det_motion = 2.0 * params.motion.log_std.sum();
    for (const auto& m : record.matched) {
        const auto& cl = clusters[m.cluster_index];
        lw += -2.0 * cl.count * kLog2Pi - 0.5 * log_det_motion -
              0.5 * cl.count * cl.log_det_scatter + 0.5 * m.proposal.log_det_cov;
        const double prior_quad =
            (m.predicted_mean.array().square() * motion_prec.array()).sum();
        lw += -0.5 * (prior_quad + cl.data_quad - m.proposal.quad);
        lw += cl.fused_class[m.ancestor_class] > 0.0
                  ? std::log(cl.fused_class[m.ancestor_class])
                  : kNegInf;
    }
    for (const auto& u : record.unmatched) {
        const auto& cl = clusters[u.cluster_index];
        lw += -2.0 * cl.count * kLog2Pi - 0.5 * params.prior_log_det -
              0.5 * cl.count * cl.log_det_scatter + 0.5 * u.proposal.log_det_cov;
        lw += -0.5 * (params.prior_quad + cl.data_quad - u.proposal.quad);
        lw += -std::log(static_cast<double>(params.num_classes));
    }
    return lw;
}

MotionGrad importance_weight_motion_grad(const ParticleRecord& record,
                                         const MotionParams& motion) {
    MotionGrad grad;
    const Vec4 prec = motion.precision();
    for (const auto& m : record.matched) {
        const Vec4 diff = m.proposal.mean - m.predicted_mean;
        const Vec4 db = (prec.array() * diff.array()).matrix();
        grad.b += db;
        grad.A += db * m.ancestor_box.transpose();
        for (int d = 0; d < 4; ++d) {
            grad.s[d] += -1.0 + prec[d] * (m.proposal.cov(d, d) + diff[d] * diff[d]);
        }
    }
    return grad;
}

double effective_sample_size(std::span<const Particle> particles) {
    double sum_sq = 0.0;
    for (const auto& p : particles) {
        const double w = std::exp(p.log_weight);
        sum_sq += w * w;
    }
    return 1.0 / sum_sq;
}

void resample(FilterState& state, RandomStream& rng) {
    const int n = static_cast<int>(state.particles.size());
    std::vector<double> weights(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        weights[i] = std::exp(state.particles[i].log_weight);
        total += weights[i];
    }
    if (!(total > 0.0)) throw std::runtime_error("resample: degenerate particle set");

    const double u0 = rng.uniform();
    std::vector<Particle> next;
    next.reserve(n);
    double cumulative = weights[0] / total;
    int src = 0;
    for (int i = 0; i < n; ++i) {
        const double target = (u0 + i) / n;
        while (target > cumulative && src + 1 < n) {
            ++src;
            cumulative += weights[src] / total;
        }
        Particle p = state.particles[src];
        p.ancestor = src;
        p.log_weight = -std::log(static_cast<double>(n));
        next.push_back(std::move(p));
    }
    state.particles = std::move(next);
}

namespace {

// Propagate one particle through one frame; returns the record and the
// new object set.
ParticleRecord propagate_particle(const Particle& particle,
                                  std::span<const Cluster> clusters,
                                  const ModelParams& params, int frame_index,
                                  RandomStream& rng,
                                  std::vector<TrackedObject>* new_objects) {
    ParticleRecord record;
    record.k_prev = static_cast<int>(particle.objects.size());
    record.init = initial_sample(clusters, frame_index, rng);
    record.k_total_new = static_cast<int>(record.init.included.size());

    std::vector<ObjectState> prev_states;
    prev_states.reserve(particle.objects.size());
    for (const auto& o : particle.objects) prev_states.push_back(o.state);

    record.assoc = associate(prev_states, record.init.objects, clusters,
                             record.init.included, params.motion, params.iou_min);
    record.k_survived = static_cast<int>(record.assoc.matches.size());

    new_objects->clear();
    new_objects->resize(record.k_total_new);

    std::vector<char> matched_new(record.k_total_new, 0);
    std::vector<int> match_of_new(record.k_total_new, -1);
    for (std::size_t k = 0; k < record.assoc.matches.size(); ++k) {
        matched_new[record.assoc.matches[k].second] = 1;
        match_of_new[record.assoc.matches[k].second] = static_cast<int>(k);
    }

    // Proposal draws in candidate order so the stream layout does not
    // depend on the association outcome.
    for (int j = 0; j < record.k_total_new; ++j) {
        const int cluster_idx = record.init.included[j];
        const auto& cluster = clusters[cluster_idx];
        TrackedObject obj;
        if (matched_new[j]) {
            const auto& match = record.assoc.matches[match_of_new[j]];
            const ObjectState& prev = prev_states[match.first];
            MatchedUpdate mu;
            mu.prev_index = match.first;
            mu.cluster_index = cluster_idx;
            mu.ancestor_box = prev.box.v;
            mu.predicted_mean = params.motion.predict_mean(prev.box.v);
            mu.ancestor_class = prev.class_id;
            mu.proposal = proposal_update_matched(prev, cluster, params.motion, rng);
            obj.state.box = mu.proposal.sample;
            obj.state.class_id = prev.class_id;
            obj.state.track_id = prev.track_id;
            obj.post_cov = mu.proposal.cov;
            record.matched.push_back(mu);
        } else {
            UnmatchedUpdate uu;
            uu.cluster_index = cluster_idx;
            uu.sampled_class = record.init.objects[j].class_id;
            uu.proposal = proposal_update_unmatched(cluster, params, rng);
            obj.state.box = uu.proposal.sample;
            obj.state.class_id = uu.sampled_class;
            obj.state.track_id = record.init.objects[j].track_id;
            obj.post_cov = uu.proposal.cov;
            record.unmatched.push_back(uu);
        }
        (*new_objects)[j] = obj;
    }

    record.log_weight_increment = importance_weight(record, clusters, params, frame_index);
    return record;
}

}  // namespace

void step(FilterState& state, const FrameObservations& frame, const ModelParams& params,
          StepTrace* trace) {
    const int n = static_cast<int>(state.particles.size());
    const auto clusters = make_clusters(frame, params);

    std::vector<ParticleRecord> records(n);
    std::vector<std::vector<TrackedObject>> new_objects(n);

    parallel_for(n, [&](int l) {
        RandomStream rng = derive_stream(state.seed, kSaltPropagate,
                                         static_cast<std::uint64_t>(frame.frame_index),
                                         static_cast<std::uint64_t>(l));
        records[l] = propagate_particle(state.particles[l], clusters, params,
                                        frame.frame_index, rng, &new_objects[l]);
    });

    // Marginal-likelihood increment and weight update, sequential in
    // particle order for bit-stable results.
    std::vector<double> log_unnorm(n);
    for (int l = 0; l < n; ++l) {
        log_unnorm[l] = state.particles[l].log_weight + records[l].log_weight_increment;
        state.particles[l].objects = std::move(new_objects[l]);
        state.particles[l].ancestor = l;
        std::int64_t max_id = state.particles[l].next_track_id;
        for (const auto& o : state.particles[l].objects)
            max_id = std::max(max_id, o.state.track_id + 1);
        state.particles[l].next_track_id = max_id;
    }
    const double log_mean = logsumexp(log_unnorm);
    if (log_mean == kNegInf)
        throw std::runtime_error("degenerate particle set at frame " +
                                 std::to_string(frame.frame_index));
    state.log_marginal_estimate += log_mean;
    for (int l = 0; l < n; ++l)
        state.particles[l].log_weight = log_unnorm[l] - log_mean;
    if (trace) {
        trace->norm_weights.resize(n);
        for (int l = 0; l < n; ++l)
            trace->norm_weights[l] = std::exp(state.particles[l].log_weight);
    }

    const double ess = effective_sample_size(state.particles);
    bool resampled = false;
    if (ess < 0.5 * n) {
        RandomStream rng = derive_stream(state.seed, kSaltResample,
                                         static_cast<std::uint64_t>(frame.frame_index));
        resample(state, rng);
        resampled = true;
    }
    state.frame_index = frame.frame_index;

    if (trace) {
        trace->clusters = clusters;
        trace->records = std::move(records);
        trace->log_mean_weight = log_mean;
        trace->ess = ess;
        trace->resampled = resampled;
    }
}

FilterState init_filter(int num_particles, std::uint64_t seed) {
    if (num_particles < 1)
        throw std::invalid_argument("init_filter: need at least one particle");
    FilterState state;
    state.seed = seed;
    state.particles.resize(num_particles);
    const double lw = -std::log(static_cast<double>(num_particles));
    for (int l = 0; l < num_particles; ++l) {
        state.particles[l].log_weight = lw;
        state.particles[l].ancestor = l;
    }
    return state;
}

FilterState init_filter_at(int num_particles, std::uint64_t seed,
                           std::span<const ObjectState> objects, const Mat4& cov) {
    FilterState state = init_filter(num_particles, seed);
    for (auto& p : state.particles) {
        for (const auto& o : objects) {
            TrackedObject t;
            t.state = o;
            t.post_cov = cov;
            p.objects.push_back(t);
            p.next_track_id = std::max(p.next_track_id, o.track_id + 1);
        }
    }
    return state;
}

TrackFrame extract_frame_tracks(const FilterState& state) {
    TrackFrame out;
    out.frame_index = state.frame_index;
    if (state.particles.empty()) return out;

    int best = 0;
    for (std::size_t l = 1; l < state.particles.size(); ++l)
        if (state.particles[l].log_weight > state.particles[best].log_weight)
            best = static_cast<int>(l);

    for (const auto& obj : state.particles[best].objects) {
        TrackRecord rec;
        rec.id = obj.state.track_id;
        rec.box = obj.state.box;
        rec.cov = obj.post_cov;
        rec.class_id = obj.state.class_id;
        double conf = 0.0;
        for (const auto& p : state.particles) {
            for (const auto& other : p.objects) {
                if (other.state.track_id == rec.id) {
                    conf += std::exp(p.log_weight);
                    break;
                }
            }
        }
        rec.confidence = std::min(conf, 1.0);
        out.tracks.push_back(rec);
    }
    return out;
}

FilterRun run_filter(std::span<const FrameObservations> frames, const ModelParams& params,
                     int num_particles, std::uint64_t seed,
                     std::vector<StepTrace>* traces) {
    FilterState state = init_filter(num_particles, seed);
    FilterRun run;
    for (const auto& frame : frames) {
        StepTrace trace;
        step(state, frame, params, traces ? &trace : nullptr);
        if (traces) traces->push_back(std::move(trace));
        run.tracks.push_back(extract_frame_tracks(state));
    }
    run.log_marginal = state.log_marginal_estimate;
    return run;
}

}  // namespace bdt
