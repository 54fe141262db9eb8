#pragma once

// The perturbed matrix model: an M x N observation D = C + F G^T, where C
// has independent mean-zero entries with bounded fourth moments and F G^T
// is a deterministic rank-K mean. Types are immutable after construction
// and all operations are pure functions of (model, seed).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spikesv/errors.hpp"
#include "spikesv/rng.hpp"

namespace spikesv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class NoiseKind { gaussian, uniform_centered, shifted_binomial, custom_table };

inline const char* to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::gaussian: return "gaussian";
        case NoiseKind::uniform_centered: return "uniform_centered";
        case NoiseKind::shifted_binomial: return "shifted_binomial";
        case NoiseKind::custom_table: return "custom_table";
    }
    return "?";
}

// Per-entry law of the noise matrix. The parameter is either a single
// value shared by all entries (1x1) or a full M x N table:
//   gaussian         -> standard deviation sigma_ij
//   uniform_centered -> half width h (entry ~ U(-h, h))
//   shifted_binomial -> success probability p (entry = Binomial(2,p) - 2p)
//   custom_table     -> finite support shared by all entries
class NoiseProfile {
public:
    static NoiseProfile gaussian(double sigma) { return gaussian(Matrix::Constant(1, 1, sigma)); }

    static NoiseProfile gaussian(Matrix sigma) {
        check_nonnegative(sigma, "gaussian sigma");
        NoiseProfile p(NoiseKind::gaussian, std::move(sigma));
        const double s = p.param_.maxCoeff();
        p.fourth_moment_bound_ = 3.0 * s * s * s * s;
        return p;
    }

    static NoiseProfile uniform_centered(double half_width) {
        return uniform_centered(Matrix::Constant(1, 1, half_width));
    }

    static NoiseProfile uniform_centered(Matrix half_width) {
        check_nonnegative(half_width, "uniform half width");
        NoiseProfile p(NoiseKind::uniform_centered, std::move(half_width));
        const double h = p.param_.maxCoeff();
        p.fourth_moment_bound_ = h * h * h * h / 5.0;
        return p;
    }

    static NoiseProfile shifted_binomial(Matrix success_prob) {
        if ((success_prob.array() <= 0.0).any() || (success_prob.array() >= 1.0).any())
            throw validation_error("shifted_binomial probabilities must lie strictly in (0,1)");
        NoiseProfile p(NoiseKind::shifted_binomial, std::move(success_prob));
        // Binomial(2,p) - 2p has E X^4 = 2p(1-p).
        p.fourth_moment_bound_ = (2.0 * p.param_.array() * (1.0 - p.param_.array())).maxCoeff();
        return p;
    }

    // Values are recentered to mean zero; a warning is recorded when the
    // supplied table was off by more than 1e-12.
    static NoiseProfile custom_table(std::vector<double> values, std::vector<double> probabilities) {
        if (values.empty() || values.size() != probabilities.size())
            throw validation_error("custom_table needs matching non-empty value/probability lists");
        double mass = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (probabilities[i] < 0.0)
                throw validation_error("custom_table probabilities must be nonnegative");
            mass += probabilities[i];
            mean += probabilities[i] * values[i];
        }
        if (std::abs(mass - 1.0) > 1e-12)
            throw validation_error("custom_table probabilities must sum to 1");
        NoiseProfile p(NoiseKind::custom_table, Matrix::Constant(1, 1, 0.0));
        if (std::abs(mean) > 1e-12) {
            std::ostringstream os;
            os << "custom_table recentered: supplied mean " << mean << " exceeds 1e-12";
            p.recenter_warning_ = os.str();
        }
        p.table_values_ = std::move(values);
        for (auto& v : p.table_values_) v -= mean;
        p.table_cum_.resize(probabilities.size());
        double cum = 0.0;
        double m2 = 0.0, m4 = 0.0;
        for (std::size_t i = 0; i < probabilities.size(); ++i) {
            cum += probabilities[i];
            p.table_cum_[i] = cum;
            const double v2 = p.table_values_[i] * p.table_values_[i];
            m2 += probabilities[i] * v2;
            m4 += probabilities[i] * v2 * v2;
        }
        p.table_cum_.back() = 1.0;
        p.table_variance_ = m2;
        p.fourth_moment_bound_ = m4;
        return p;
    }

    NoiseKind kind() const { return kind_; }
    bool constant() const { return param_.size() == 1; }
    const Matrix& parameter() const { return param_; }
    double parameter(Index i, Index j) const {
        return constant() ? param_(0, 0) : param_(i, j);
    }
    const std::string& recenter_warning() const { return recenter_warning_; }
    const std::vector<double>& table_values() const { return table_values_; }
    const std::vector<double>& table_cdf() const { return table_cum_; }

    // sigma_ij^2
    double variance(Index i, Index j) const {
        switch (kind_) {
            case NoiseKind::gaussian: {
                const double s = parameter(i, j);
                return s * s;
            }
            case NoiseKind::uniform_centered: {
                const double h = parameter(i, j);
                return h * h / 3.0;
            }
            case NoiseKind::shifted_binomial: {
                const double p = parameter(i, j);
                return 2.0 * p * (1.0 - p);
            }
            case NoiseKind::custom_table:
                return table_variance_;
        }
        return 0.0;
    }

    double max_variance() const {
        switch (kind_) {
            case NoiseKind::gaussian: {
                const double s = param_.maxCoeff();
                return s * s;
            }
            case NoiseKind::uniform_centered: {
                const double h = param_.maxCoeff();
                return h * h / 3.0;
            }
            case NoiseKind::shifted_binomial: {
                double best = 0.0;
                for (Index j = 0; j < param_.cols(); ++j)
                    for (Index i = 0; i < param_.rows(); ++i) {
                        const double p = param_(i, j);
                        best = std::max(best, 2.0 * p * (1.0 - p));
                    }
                return best;
            }
            case NoiseKind::custom_table:
                return table_variance_;
        }
        return 0.0;
    }

    // Uniform bound C with E X_ij^4 <= C for every entry.
    double fourth_moment_bound() const { return fourth_moment_bound_; }

    // One entry draw. Pure in (seed, i, j).
    double draw(std::uint64_t seed, Index i, Index j) const {
        const auto w = rng::philox4x32(seed, static_cast<std::uint32_t>(i),
                                       static_cast<std::uint32_t>(j));
        switch (kind_) {
            case NoiseKind::gaussian:
                return parameter(i, j) * rng::gaussian(w);
            case NoiseKind::uniform_centered:
                return parameter(i, j) * (2.0 * rng::u01(w[0], w[1]) - 1.0);
            case NoiseKind::shifted_binomial: {
                const double p = parameter(i, j);
                const int b = (rng::u01(w[0], w[1]) < p ? 1 : 0) + (rng::u01(w[2], w[3]) < p ? 1 : 0);
                return static_cast<double>(b) - 2.0 * p;
            }
            case NoiseKind::custom_table: {
                const double u = rng::u01(w[0], w[1]);
                std::size_t lo = 0;
                while (lo + 1 < table_cum_.size() && u >= table_cum_[lo]) ++lo;
                return table_values_[lo];
            }
        }
        return 0.0;
    }

    bool compatible_with(Index rows, Index cols) const {
        return constant() || (param_.rows() == rows && param_.cols() == cols);
    }

private:
    NoiseProfile(NoiseKind kind, Matrix param) : kind_(kind), param_(std::move(param)) {}

    static void check_nonnegative(const Matrix& m, const char* what) {
        if (m.size() == 0 || (m.array() < 0.0).any())
            throw validation_error(std::string(what) + " must be nonnegative and non-empty");
    }

    NoiseKind kind_;
    Matrix param_;
    std::vector<double> table_values_;
    std::vector<double> table_cum_;
    double table_variance_ = 0.0;
    double fourth_moment_bound_ = 0.0;
    std::string recenter_warning_;
};

namespace detail {

inline void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001B3ull;  // FNV-1a
    }
}

inline void hash_value(std::uint64_t& h, std::uint64_t v) { hash_bytes(h, &v, sizeof v); }

inline void hash_matrix(std::uint64_t& h, const Matrix& m) {
    hash_value(h, static_cast<std::uint64_t>(m.rows()));
    hash_value(h, static_cast<std::uint64_t>(m.cols()));
    hash_bytes(h, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

}  // namespace detail

// Rank-K perturbation model. F must have orthonormal columns (checked to
// 1e-10); full column rank of G is enforced by validate_model and by every
// spectral construction, so degenerate G can still be *built* for
// diagnostics.
class PerturbationModel {
public:
    PerturbationModel(Matrix F, Matrix G, NoiseProfile noise)
        : F_(std::move(F)), G_(std::move(G)), noise_(std::move(noise)) {
        if (F_.rows() < 1 || G_.rows() < 1)
            throw validation_error("model dimensions must be at least 1x1");
        if (F_.cols() != G_.cols())
            throw validation_error("F and G must have the same number of columns");
        if (F_.cols() < 1 || F_.cols() > std::min(F_.rows(), G_.rows()))
            throw validation_error("rank K must satisfy 1 <= K <= min(M, N)");
        if (!noise_.compatible_with(F_.rows(), G_.rows()))
            throw validation_error("noise parameter table does not match model dimensions");
        const double defect = orthonormality_defect();
        if (defect > 1e-10) {
            std::ostringstream os;
            os << "columns of F are not orthonormal (defect " << defect << " > 1e-10)";
            throw validation_error(os.str());
        }
        std::uint64_t h = 0xCBF29CE484222325ull;
        detail::hash_value(h, static_cast<std::uint64_t>(noise_.kind()));
        detail::hash_matrix(h, noise_.parameter());
        for (double v : noise_.table_values()) detail::hash_bytes(h, &v, sizeof v);
        detail::hash_matrix(h, F_);
        detail::hash_matrix(h, G_);
        id_ = h;
    }

    Index rows() const { return F_.rows(); }
    Index cols() const { return G_.rows(); }
    Index rank() const { return F_.cols(); }
    const Matrix& left_factors() const { return F_; }
    const Matrix& right_factors() const { return G_; }
    const NoiseProfile& noise() const { return noise_; }
    std::uint64_t id() const { return id_; }

    // max |F^T F - I|
    double orthonormality_defect() const {
        Matrix gram = F_.transpose() * F_;
        gram -= Matrix::Identity(F_.cols(), F_.cols());
        return gram.cwiseAbs().maxCoeff();
    }

private:
    Matrix F_;
    Matrix G_;
    NoiseProfile noise_;
    std::uint64_t id_ = 0;
};

struct NoiseMatrix {
    Matrix values;
    std::uint64_t seed = 0;
    std::uint64_t model_id = 0;
};

struct ValidationReport {
    double orthonormality_defect = 0.0;
    Matrix q_hat;                    // R0 / (MN)
    std::vector<double> eigen_gaps;  // gamma_s - gamma_{s+1}, gamma_{K+1} := 0
    double min_gap = 0.0;
    std::vector<std::string> warnings;
};

// Checks the model against the assumptions behind all predictions: plus a
// report of the finite-N spectral surrogate and its gaps. A minimum gap
// below gap_tol produces a warning (near-degenerate spectra are outside
// the guaranteed regime but still legitimate to simulate). Rank-deficient
// G is a hard error naming the most collinear column pair.
inline ValidationReport validate_model(const PerturbationModel& model, double gap_tol) {
    const Index K = model.rank();
    const Matrix& G = model.right_factors();

    ValidationReport report;
    report.orthonormality_defect = model.orthonormality_defect();

    Matrix r0 = G.transpose() * G;
    r0 = ((r0 + r0.transpose()) * 0.5).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(r0);
    if (es.info() != Eigen::Success)
        throw numerical_error("eigendecomposition of G^T G failed");
    const Vector ev = es.eigenvalues();  // ascending
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev(0) <= 1e-12 * scale) {
        Index br = 0, bs = (K > 1) ? 1 : 0;
        double best = -1.0;
        for (Index r = 0; r < K; ++r)
            for (Index s = r + 1; s < K; ++s) {
                const double denom = std::sqrt(r0(r, r) * r0(s, s));
                const double corr = denom > 0.0 ? std::abs(r0(r, s)) / denom : 1.0;
                if (corr > best) {
                    best = corr;
                    br = r;
                    bs = s;
                }
            }
        std::ostringstream os;
        os << "G is rank deficient; columns " << br + 1 << " and " << bs + 1
           << " are (nearly) linearly dependent";
        throw validation_error(os.str());
    }

    const double mn = static_cast<double>(model.rows()) * static_cast<double>(model.cols());
    report.q_hat = r0 / mn;
    report.eigen_gaps.resize(static_cast<std::size_t>(K));
    for (Index s = 0; s < K; ++s) {
        const double cur = ev(K - 1 - s) / mn;
        const double next = (s + 1 < K) ? ev(K - 2 - s) / mn : 0.0;
        report.eigen_gaps[static_cast<std::size_t>(s)] = cur - next;
    }
    report.min_gap = *std::min_element(report.eigen_gaps.begin(), report.eigen_gaps.end());
    if (report.min_gap < gap_tol) {
        std::ostringstream os;
        os << "minimum eigenvalue gap " << report.min_gap << " of R0/(MN) is below " << gap_tol
           << "; spectrum is near-degenerate and predictions are unreliable";
        report.warnings.push_back(os.str());
    }
    if (!model.noise().recenter_warning().empty())
        report.warnings.push_back(model.noise().recenter_warning());
    return report;
}

// Independent entries drawn with the counter-based generator, so identical
// (model, seed) pairs give bit-identical matrices under any schedule.
inline NoiseMatrix sample_noise(const PerturbationModel& model, std::uint64_t seed) {
    const Index M = model.rows(), N = model.cols();
    NoiseMatrix out;
    out.values.resize(M, N);
    const NoiseProfile& noise = model.noise();
    for (Index j = 0; j < N; ++j)
        for (Index i = 0; i < M; ++i) out.values(i, j) = noise.draw(seed, i, j);
    out.seed = seed;
    out.model_id = model.id();
    return out;
}

inline Matrix assemble_observation(const PerturbationModel& model, const NoiseMatrix& noise) {
    if (noise.model_id != model.id())
        throw validation_error("noise matrix was sampled from a different model");
    if (noise.values.rows() != model.rows() || noise.values.cols() != model.cols())
        throw validation_error("noise matrix dimensions do not match the model");
    Matrix d = noise.values;
    d.noalias() += model.left_factors() * model.right_factors().transpose();
    return d;
}

}  // namespace spikesv
