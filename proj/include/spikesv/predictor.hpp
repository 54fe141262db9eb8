#pragma once

// Deterministic and fluctuation quantities of the singular value expansion
//
//     lambda_r = sqrt(rho_r) + Z_r + m_r + eps_r,   r = 1..K,
//
// where rho_r are the eigenvalues of R0 = G^T G, Z_r is the quadratic form
// of the centered matrix Z0 = G^T C^T F / sqrt(MN) in the eigenvectors of
// R0/(MN), and m_r is the variance-driven shift. All finite-N surrogates
// (gamma_r, v_r) are taken from R0/(MN).

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "spikesv/errors.hpp"
#include "spikesv/model.hpp"

namespace spikesv {

// G^T G, symmetrized to kill rounding skew.
inline Matrix gram_matrix(const Matrix& g) {
    Matrix r0 = g.transpose() * g;
    return ((r0 + r0.transpose()) * 0.5).eval();
}

struct EigenData {
    Vector values;   // strictly descending
    Matrix vectors;  // unit columns, first component above 1e-12 made positive
};

namespace detail {

// Flip columns so the first component with |x| > 1e-12 is positive.
inline void fix_signs(Matrix& vectors) {
    for (Index c = 0; c < vectors.cols(); ++c) {
        for (Index i = 0; i < vectors.rows(); ++i) {
            const double x = vectors(i, c);
            if (std::abs(x) > 1e-12) {
                if (x < 0.0) vectors.col(c) = -vectors.col(c);
                break;
            }
        }
    }
}

}  // namespace detail

// Eigendecomposition of a small symmetric matrix with the deterministic
// ordering and sign convention used throughout. Degenerate spectra (gap
// below 1e-12 * ||S||) are rejected: repeated eigenvalues are outside the
// supported regime.
inline EigenData spectral_data(const Matrix& s) {
    if (s.rows() != s.cols())
        throw validation_error("spectral_data expects a square matrix");
    const double scale = std::max(s.cwiseAbs().maxCoeff(), 1e-300);
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw validation_error("spectral_data expects a symmetric matrix (1e-12 relative)");

    Eigen::SelfAdjointEigenSolver<Matrix> es(((s + s.transpose()) * 0.5).eval());
    if (es.info() != Eigen::Success)
        throw numerical_error("symmetric eigendecomposition failed");

    const Index k = s.rows();
    EigenData out;
    out.values.resize(k);
    out.vectors.resize(k, k);
    const double norm = std::max(std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(k - 1)));
    for (Index r = 0; r < k; ++r) {
        out.values(r) = es.eigenvalues()(k - 1 - r);
        out.vectors.col(r) = es.eigenvectors().col(k - 1 - r);
    }
    for (Index r = 0; r + 1 < k; ++r) {
        if (out.values(r) - out.values(r + 1) <= 1e-12 * norm) {
            std::ostringstream os;
            os << "degenerate spectrum: eigenvalues " << r + 1 << " and " << r + 2
               << " differ by " << out.values(r) - out.values(r + 1);
            throw numerical_error(os.str());
        }
    }
    detail::fix_signs(out.vectors);
    return out;
}

// Column and row averages of the entry variances:
//   [D_R]_j = (1/M) sum_i sigma_ij^2,   [D_S]_i = (1/N) sum_j sigma_ij^2.
inline std::pair<Vector, Vector> variance_profiles(const PerturbationModel& model) {
    const Index M = model.rows(), N = model.cols();
    const NoiseProfile& noise = model.noise();
    Vector d_r = Vector::Zero(N), d_s = Vector::Zero(M);
    if (noise.constant()) {
        const double v = noise.variance(0, 0);
        d_r.setConstant(v);
        d_s.setConstant(v);
        return {d_r, d_s};
    }
    for (Index j = 0; j < N; ++j)
        for (Index i = 0; i < M; ++i) {
            const double v = noise.variance(i, j);
            d_r(j) += v;
            d_s(i) += v;
        }
    d_r /= static_cast<double>(M);
    d_s /= static_cast<double>(N);
    return {d_r, d_s};
}

// Sigma_R = G^T D_R G and Sigma_S = F^T D_S F, both symmetrized.
inline std::pair<Matrix, Matrix> sigma_matrices(const PerturbationModel& model) {
    const auto [d_r, d_s] = variance_profiles(model);
    Matrix sigma_r = model.right_factors().transpose() * d_r.asDiagonal() * model.right_factors();
    Matrix sigma_s = model.left_factors().transpose() * d_s.asDiagonal() * model.left_factors();
    sigma_r = ((sigma_r + sigma_r.transpose()) * 0.5).eval();
    sigma_s = ((sigma_s + sigma_s.transpose()) * 0.5).eval();
    return {sigma_r, sigma_s};
}

// m_r = 1/(2 sqrt(c gamma_r)) v_r^T ( c/(gamma_r M N) Sigma_R + Sigma_S ) v_r
inline double shift(const Matrix& sigma_r, const Matrix& sigma_s, double gamma_r,
                    const Vector& v_r, double c, Index m_rows, Index n_cols) {
    if (!(gamma_r > 0.0))
        throw validation_error("shift requires gamma_r > 0");
    const double mn = static_cast<double>(m_rows) * static_cast<double>(n_cols);
    const Matrix combined = (c / (gamma_r * mn)) * sigma_r + sigma_s;
    return v_r.dot(combined * v_r) / (2.0 * std::sqrt(c * gamma_r));
}

inline Vector shifts(const Matrix& sigma_r, const Matrix& sigma_s, const Vector& gamma,
                     const Matrix& v, double c, Index m_rows, Index n_cols) {
    Vector out(gamma.size());
    for (Index r = 0; r < gamma.size(); ++r)
        out(r) = shift(sigma_r, sigma_s, gamma(r), v.col(r), c, m_rows, n_cols);
    return out;
}

// Everything deterministic about the top-K singular values of the model.
struct SpectralPrediction {
    Vector rho;       // eigenvalues of R0, descending, strictly positive
    Vector gamma;     // rho / (MN)
    Matrix V;         // eigenvectors of R0/(MN), sign-fixed columns
    Matrix U;         // eigenvectors of R0 (identical columns)
    Matrix sigma_R;   // G^T D_R G
    Matrix sigma_S;   // F^T D_S F
    Vector m;         // shifts
    double c = 0.0;   // aspect ratio M/N
    Vector sqrt_rho;  // sqrt(rho), Newton-refined
};

namespace detail {

inline double refined_sqrt(double x) {
    double s = std::sqrt(x);
    if (s > 0.0) s = 0.5 * (s + x / s);
    return s;
}

}  // namespace detail

inline SpectralPrediction make_prediction(const PerturbationModel& model) {
    const Index K = model.rank();
    const double mn = static_cast<double>(model.rows()) * static_cast<double>(model.cols());

    SpectralPrediction pred;
    const EigenData eig = spectral_data(gram_matrix(model.right_factors()));
    pred.rho = eig.values;
    if (!(pred.rho(K - 1) > 0.0))
        throw validation_error("R0 = G^T G must be positive definite (G full column rank)");
    pred.gamma = pred.rho / mn;
    pred.U = eig.vectors;
    pred.V = eig.vectors;
    std::tie(pred.sigma_R, pred.sigma_S) = sigma_matrices(model);
    pred.c = static_cast<double>(model.rows()) / static_cast<double>(model.cols());
    pred.m = shifts(pred.sigma_R, pred.sigma_S, pred.gamma, pred.V, pred.c, model.rows(),
                    model.cols());
    pred.sqrt_rho.resize(K);
    for (Index r = 0; r < K; ++r) pred.sqrt_rho(r) = detail::refined_sqrt(pred.rho(r));
    return pred;
}

// Z0 = G^T C^T F / sqrt(MN) and Z_r = v_r^T Z0 v_r / sqrt(gamma_r).
inline std::pair<Matrix, Vector> fluctuation(const PerturbationModel& model,
                                             const NoiseMatrix& noise,
                                             const SpectralPrediction& pred) {
    if (noise.model_id != model.id())
        throw validation_error("noise matrix was sampled from a different model");
    const double mn = static_cast<double>(model.rows()) * static_cast<double>(model.cols());
    Matrix z0 = model.right_factors().transpose() *
                (noise.values.transpose() * model.left_factors());
    z0 /= std::sqrt(mn);
    const Index K = model.rank();
    Vector z(K);
    for (Index r = 0; r < K; ++r)
        z(r) = pred.V.col(r).dot(z0 * pred.V.col(r)) / std::sqrt(pred.gamma(r));
    return {z0, z};
}

// One observed replicate decomposed against the prediction. epsilon is the
// exact algebraic remainder, a diagnostic rather than a fit.
struct FluctuationSample {
    Matrix Z0;
    Vector Z;
    Vector lambda;
    Vector epsilon;
};

inline FluctuationSample decompose(const PerturbationModel& model, const NoiseMatrix& noise,
                                   const SpectralPrediction& pred, const Vector& lambda) {
    if (lambda.size() < model.rank())
        throw validation_error("decompose needs at least K observed singular values");
    for (Index r = 0; r + 1 < model.rank(); ++r)
        if (lambda(r) < lambda(r + 1))
            throw validation_error("observed singular values must be sorted descending");
    FluctuationSample out;
    std::tie(out.Z0, out.Z) = fluctuation(model, noise, pred);
    out.lambda = lambda.head(model.rank());
    out.epsilon = out.lambda - pred.sqrt_rho - out.Z - pred.m;
    return out;
}

// Exact finite-N covariance of (Z_1, ..., Z_K): with A = F V and B = G V,
//   Cov(Z_r, Z_s) = sum_ij A_ir A_is B_jr B_js sigma_ij^2 / (MN sqrt(g_r g_s)).
// This is the variance the harness scores normality against; for the
// worked ensembles it converges to their closed-form covariances.
inline Matrix fluctuation_covariance(const PerturbationModel& model,
                                     const SpectralPrediction& pred) {
    const Index M = model.rows(), N = model.cols(), K = model.rank();
    const Matrix a = model.left_factors() * pred.V;   // M x K
    const Matrix b = model.right_factors() * pred.V;  // N x K
    const NoiseProfile& noise = model.noise();
    Matrix cov(K, K);
    for (Index r = 0; r < K; ++r) {
        for (Index s = r; s < K; ++s) {
            double total = 0.0;
            for (Index j = 0; j < N; ++j) {
                double col = 0.0;
                for (Index i = 0; i < M; ++i) col += a(i, r) * a(i, s) * noise.variance(i, j);
                total += col * b(j, r) * b(j, s);
            }
            const double mn = static_cast<double>(M) * static_cast<double>(N);
            cov(r, s) = cov(s, r) = total / (mn * std::sqrt(pred.gamma(r) * pred.gamma(s)));
        }
    }
    return cov;
}

}  // namespace spikesv
