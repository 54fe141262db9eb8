#pragma once

// Worked model families with closed-form limiting predictions: the rank-1
// common-mean matrix and the 2x2 block-mean matrix.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <sstream>
#include <utility>

#include "spikesv/errors.hpp"
#include "spikesv/model.hpp"
#include "spikesv/predictor.hpp"

namespace spikesv {

struct Rank1Prediction {
    double gamma = 0.0;       // (1/N) sum mu_j^2
    double sqrt_rho = 0.0;    // sqrt(M sum mu_j^2)
    double shift_mean = 0.0;  // sigma^2 (sqrt(c) + 1/sqrt(c)) / (2 sqrt(gamma))
    double variance = 0.0;    // sigma^2
};

// K = 1 with mean mu_j in column j, common variance sigma2. The largest
// singular value fluctuates around sqrt_rho + shift_mean with the given
// variance.
inline std::pair<PerturbationModel, Rank1Prediction> rank1_model(
    const Vector& mu, double sigma2, Index m_rows, Index n_cols,
    NoiseKind family = NoiseKind::gaussian) {
    if (mu.size() != n_cols) throw validation_error("rank1_model: mu must have N entries");
    const double sum_mu2 = mu.squaredNorm();
    if (!(sum_mu2 > 0.0)) throw validation_error("rank1_model: means must not be all zero");
    if (sigma2 < 0.0) throw validation_error("rank1_model: sigma2 must be nonnegative");

    Matrix f = Matrix::Constant(m_rows, 1, 1.0 / std::sqrt(static_cast<double>(m_rows)));
    Matrix g = std::sqrt(static_cast<double>(m_rows)) * mu;

    NoiseProfile noise = [&] {
        switch (family) {
            case NoiseKind::gaussian:
                return NoiseProfile::gaussian(std::sqrt(sigma2));
            case NoiseKind::uniform_centered:
                return NoiseProfile::uniform_centered(std::sqrt(3.0 * sigma2));
            default:
                throw validation_error("rank1_model supports gaussian or uniform noise");
        }
    }();

    Rank1Prediction pred;
    pred.gamma = sum_mu2 / static_cast<double>(n_cols);
    pred.sqrt_rho = std::sqrt(static_cast<double>(m_rows) * sum_mu2);
    const double c = static_cast<double>(m_rows) / static_cast<double>(n_cols);
    pred.shift_mean = sigma2 * (std::sqrt(c) + 1.0 / std::sqrt(c)) / (2.0 * std::sqrt(pred.gamma));
    pred.variance = sigma2;
    return {PerturbationModel(std::move(f), std::move(g), std::move(noise)), pred};
}

// (2M) x (2N) observation with i.i.d. blocks A_1..A_4 of means mu_1..mu_4
// and variances sigma2_1..sigma2_4, laid out [[A1, A2], [A3, A4]].
struct BlockSpec {
    std::array<double, 4> mu{};
    std::array<double, 4> sigma2{};
    Index rows = 0;  // per block; full matrix is 2 rows x 2 cols blocks
    Index cols = 0;
    NoiseKind entry_family = NoiseKind::uniform_centered;
};

namespace detail {

inline void check_block_spec(const BlockSpec& spec) {
    if (spec.rows < 1 || spec.cols < 1)
        throw validation_error("block model needs positive per-block dimensions");
    if (spec.entry_family != NoiseKind::gaussian &&
        spec.entry_family != NoiseKind::uniform_centered)
        throw validation_error("block model entries must be gaussian or uniform");
    for (double s2 : spec.sigma2)
        if (s2 < 0.0) throw validation_error("block variances must be nonnegative");
    const auto& mu = spec.mu;
    double scale = 0.0;
    for (double m : mu) scale = std::max(scale, m * m);
    if (std::abs(mu[1] * mu[2] - mu[0] * mu[3]) <= 1e-12 * std::max(scale, 1e-300))
        throw validation_error(
            "block means are linearly dependent (mu2*mu3 = mu1*mu4 makes the mean rank "
            "deficient)");
    const double dot = mu[0] * mu[2] + mu[1] * mu[3];
    const double len_diff = mu[0] * mu[0] + mu[1] * mu[1] - mu[2] * mu[2] - mu[3] * mu[3];
    if (std::abs(dot) <= 1e-12 * scale && std::abs(len_diff) <= 1e-12 * scale)
        throw validation_error(
            "block means give orthogonal right factors of equal length (mu1 = +/-mu4, "
            "mu2 = -/+mu3); the two growth rates coincide");
}

// Q = R0 / (4MN) for the block mean structure.
inline Eigen::Matrix2d block_q(const BlockSpec& spec) {
    const auto& mu = spec.mu;
    Eigen::Matrix2d q;
    q << mu[0] * mu[0] + mu[1] * mu[1], mu[0] * mu[2] + mu[1] * mu[3],
        mu[0] * mu[2] + mu[1] * mu[3], mu[2] * mu[2] + mu[3] * mu[3];
    return 0.25 * q;
}

}  // namespace detail

inline PerturbationModel block_model(const BlockSpec& spec) {
    detail::check_block_spec(spec);
    const Index m = spec.rows, n = spec.cols;
    const double root_m = std::sqrt(static_cast<double>(m));

    Matrix f = Matrix::Zero(2 * m, 2);
    f.col(0).head(m).setConstant(1.0 / root_m);
    f.col(1).tail(m).setConstant(1.0 / root_m);

    Matrix g(2 * n, 2);
    g.col(0).head(n).setConstant(root_m * spec.mu[0]);
    g.col(0).tail(n).setConstant(root_m * spec.mu[1]);
    g.col(1).head(n).setConstant(root_m * spec.mu[2]);
    g.col(1).tail(n).setConstant(root_m * spec.mu[3]);

    Matrix param(2 * m, 2 * n);
    const bool uniform = spec.entry_family == NoiseKind::uniform_centered;
    auto block_param = [&](int b) {
        return uniform ? std::sqrt(3.0 * spec.sigma2[static_cast<std::size_t>(b)])
                       : std::sqrt(spec.sigma2[static_cast<std::size_t>(b)]);
    };
    param.topLeftCorner(m, n).setConstant(block_param(0));
    param.topRightCorner(m, n).setConstant(block_param(1));
    param.bottomLeftCorner(m, n).setConstant(block_param(2));
    param.bottomRightCorner(m, n).setConstant(block_param(3));

    NoiseProfile noise = uniform ? NoiseProfile::uniform_centered(std::move(param))
                                 : NoiseProfile::gaussian(std::move(param));
    return PerturbationModel(std::move(f), std::move(g), std::move(noise));
}

struct BlockPrediction {
    Eigen::Vector2d gamma;
    Eigen::Matrix2d v;    // sign-fixed eigenvector columns of Q
    Eigen::Vector2d m;    // shifts at the given finite M, N
    Eigen::Matrix2d cov;  // limiting covariance of the two fluctuations
};

// Centers, shifts and the limiting bivariate normal covariance. The
// covariance comes from the limit of Z0, whose four independent block sums
// make Z0 a linear image of four standard normals zeta_1..zeta_4; the
// quadratic forms in v_r are expanded exactly in that basis.
inline BlockPrediction block_predictions(const BlockSpec& spec) {
    detail::check_block_spec(spec);
    const auto& mu = spec.mu;

    BlockPrediction out;
    const EigenData eig = spectral_data(detail::block_q(spec));
    out.gamma = eig.values;
    out.v = eig.vectors;

    const double m_rows = static_cast<double>(spec.rows);
    const double n_cols = static_cast<double>(spec.cols);
    const double s13 = spec.sigma2[0] + spec.sigma2[2];
    const double s24 = spec.sigma2[1] + spec.sigma2[3];
    Eigen::Matrix2d sigma_r;
    sigma_r << mu[0] * mu[0] * s13 + mu[1] * mu[1] * s24, mu[0] * mu[2] * s13 + mu[1] * mu[3] * s24,
        mu[0] * mu[2] * s13 + mu[1] * mu[3] * s24, mu[2] * mu[2] * s13 + mu[3] * mu[3] * s24;
    sigma_r *= 0.5 * m_rows * n_cols;
    Eigen::Matrix2d sigma_s = Eigen::Matrix2d::Zero();
    sigma_s(0, 0) = 0.5 * (spec.sigma2[0] + spec.sigma2[1]);
    sigma_s(1, 1) = 0.5 * (spec.sigma2[2] + spec.sigma2[3]);

    const double c = m_rows / n_cols;
    for (Index r = 0; r < 2; ++r)
        out.m(r) = shift(sigma_r, sigma_s, out.gamma(r), out.v.col(r), c, 2 * spec.rows,
                         2 * spec.cols);

    // zeta coefficients of v_r^T Z0 v_r (one zeta per block)
    auto coef = [&](Index r) {
        const double v1 = out.v(0, r), v2 = out.v(1, r);
        const double left = v1 * mu[0] + v2 * mu[2];
        const double right = v1 * mu[1] + v2 * mu[3];
        Eigen::Vector4d k;
        k << std::sqrt(spec.sigma2[0]) * v1 * left, std::sqrt(spec.sigma2[1]) * v1 * right,
            std::sqrt(spec.sigma2[2]) * v2 * left, std::sqrt(spec.sigma2[3]) * v2 * right;
        return (0.5 * k).eval();
    };
    const Eigen::Vector4d k1 = coef(0), k2 = coef(1);
    out.cov(0, 0) = k1.dot(k1) / out.gamma(0);
    out.cov(1, 1) = k2.dot(k2) / out.gamma(1);
    out.cov(0, 1) = out.cov(1, 0) = k1.dot(k2) / std::sqrt(out.gamma(0) * out.gamma(1));
    return out;
}

}  // namespace spikesv
