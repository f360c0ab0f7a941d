#pragma once

#include <Eigen/Dense>
#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace bdt {

/// Sentinel for log-probability zero. IEEE -inf is absorbing under
/// addition, which is exactly the semantics impossible events need.
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

/// k * log(p) with the 0 * log(0) = 0 convention used by count likelihoods.
inline double xlogy(double k, double p) {
    if (k == 0.0) return 0.0;
    return k * std::log(p);
}

inline double log_binomial(int n, int k) {
    if (k < 0 || n < 0 || k > n)
        throw std::domain_error("log_binomial: require 0 <= k <= n");
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

inline double log_poisson(int k, double rate) {
    if (k < 0) throw std::domain_error("log_poisson: negative count");
    if (rate < 0.0) throw std::domain_error("log_poisson: negative rate");
    if (rate == 0.0) return k == 0 ? 0.0 : kNegInf;
    return k * std::log(rate) - rate - std::lgamma(k + 1.0);
}

/// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double logsumexp(std::span<const double> xs) {
    double m = kNegInf;
    for (double x : xs) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

/// Log-density of a diagonal Gaussian given per-dimension variances.
inline double log_normal_diag(const Eigen::Vector4d& x, const Eigen::Vector4d& mean,
                              const Eigen::Vector4d& var) {
    double lp = 0.0;
    for (int d = 0; d < 4; ++d) {
        const double r = x[d] - mean[d];
        lp += -0.5 * (kLog2Pi + std::log(var[d]) + r * r / var[d]);
    }
    return lp;
}

/// Log-density of a full-covariance Gaussian. Throws if the covariance
/// fails the Cholesky factorization (not SPD).
inline double log_normal_full(const Eigen::Vector4d& x, const Eigen::Vector4d& mean,
                              const Eigen::Matrix4d& cov) {
    Eigen::LLT<Eigen::Matrix4d> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("log_normal_full: covariance not SPD");
    const Eigen::Vector4d r = x - mean;
    const Eigen::Vector4d z = llt.matrixL().solve(r);
    double log_det = 0.0;
    for (int d = 0; d < 4; ++d) log_det += 2.0 * std::log(llt.matrixL()(d, d));
    return -0.5 * (4.0 * kLog2Pi + log_det + z.squaredNorm());
}

inline double log_det_spd(const Eigen::Matrix4d& m) {
    Eigen::LLT<Eigen::Matrix4d> llt(m);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("log_det_spd: matrix not SPD");
    double log_det = 0.0;
    for (int d = 0; d < 4; ++d) log_det += 2.0 * std::log(llt.matrixL()(d, d));
    return log_det;
}

}  // namespace bdt
