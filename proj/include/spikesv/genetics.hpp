#pragma once

// Population-genetics ensemble: an M x N marker matrix with rows grouped
// into K subpopulations, entry (i,j) ~ Binomial(2, p_t(j)) for individual
// i in subpopulation t. The mean is rank K with indicator left factors
// and right factors 2 sqrt(M_s) p_s; all limiting predictions are driven
// by the mixed moments pi of the allele frequencies.

#include <Eigen/Dense>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "spikesv/errors.hpp"
#include "spikesv/model.hpp"
#include "spikesv/predictor.hpp"

namespace spikesv {

enum class MomentProvenance { empirical, spectral };

// Symmetric mixed moments pi_{r1..rd} of the allele frequencies for orders
// d = 1..4, stored dense (K is small).
class MomentTensor {
public:
    MomentTensor(Index k, MomentProvenance prov) : k_(k), prov_(prov) {
        if (k < 1) throw validation_error("MomentTensor needs K >= 1");
        pi1_.assign(idx(k), 0.0);
        pi2_.assign(idx(k * k), 0.0);
        pi3_.assign(idx(k * k * k), 0.0);
        pi4_.assign(idx(k * k * k * k), 0.0);
    }

    Index order() const { return k_; }
    MomentProvenance provenance() const { return prov_; }

    double& pi(Index r) { return pi1_[idx(r)]; }
    double& pi(Index r, Index s) { return pi2_[idx(r * k_ + s)]; }
    double& pi(Index r, Index s, Index t) { return pi3_[idx((r * k_ + s) * k_ + t)]; }
    double& pi(Index r, Index s, Index t, Index u) {
        return pi4_[idx(((r * k_ + s) * k_ + t) * k_ + u)];
    }
    double pi(Index r) const { return pi1_[idx(r)]; }
    double pi(Index r, Index s) const { return pi2_[idx(r * k_ + s)]; }
    double pi(Index r, Index s, Index t) const { return pi3_[idx((r * k_ + s) * k_ + t)]; }
    double pi(Index r, Index s, Index t, Index u) const {
        return pi4_[idx(((r * k_ + s) * k_ + t) * k_ + u)];
    }

    // 0 < pi < 1 everywhere, index-permutation symmetry within each order,
    // and pi_{rs}^2 <= pi_{rr} pi_{ss}.
    void check_invariants() const {
        auto in_range = [](double v) { return v > 0.0 && v < 1.0; };
        for (double v : pi1_)
            if (!in_range(v)) throw validation_error("pi moments must lie in (0,1)");
        for (double v : pi2_)
            if (!in_range(v)) throw validation_error("pi moments must lie in (0,1)");
        for (double v : pi3_)
            if (!in_range(v)) throw validation_error("pi moments must lie in (0,1)");
        for (double v : pi4_)
            if (!in_range(v)) throw validation_error("pi moments must lie in (0,1)");
        for (Index r = 0; r < k_; ++r)
            for (Index s = 0; s < k_; ++s) {
                const double lhs = pi(r, s) * pi(r, s);
                if (lhs > pi(r, r) * pi(s, s) * (1.0 + 1e-12))
                    throw validation_error("pi moments violate the Cauchy-Schwarz inequality");
            }
        for (Index r = 0; r < k_; ++r)
            for (Index s = 0; s < k_; ++s) {
                if (pi(r, s) != pi(s, r))
                    throw validation_error("pi moments must be permutation symmetric");
                for (Index t = 0; t < k_; ++t) {
                    if (pi(r, s, t) != pi(t, r, s) || pi(r, s, t) != pi(s, r, t))
                        throw validation_error("pi moments must be permutation symmetric");
                    for (Index u = 0; u < k_; ++u)
                        if (pi(r, s, t, u) != pi(u, t, s, r) || pi(r, s, t, u) != pi(s, r, t, u) ||
                            pi(r, s, t, u) != pi(r, s, u, t))
                            throw validation_error("pi moments must be permutation symmetric");
                }
            }
    }

private:
    static std::size_t idx(Index i) { return static_cast<std::size_t>(i); }
    Index k_;
    MomentProvenance prov_;
    std::vector<double> pi1_, pi2_, pi3_, pi4_;
};

// pi averaged over the realized frequency vectors: rows of p are the K
// subpopulations, columns the N markers.
inline MomentTensor pi_moments_empirical(const Matrix& p) {
    const Index k = p.rows(), n = p.cols();
    if (k < 1 || n < 1) throw validation_error("pi_moments_empirical needs a K x N matrix");
    if ((p.array() <= 0.0).any() || (p.array() >= 1.0).any())
        throw validation_error("allele frequencies must lie strictly in (0,1)");
    MomentTensor out(k, MomentProvenance::empirical);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Index r = 0; r < k; ++r) {
        out.pi(r) = p.row(r).sum() * inv_n;
        for (Index s = r; s < k; ++s) {
            const auto prs = (p.row(r).array() * p.row(s).array()).eval();
            const double m2 = prs.sum() * inv_n;
            out.pi(r, s) = out.pi(s, r) = m2;
            for (Index t = s; t < k; ++t) {
                const auto prst = (prs * p.row(t).array()).eval();
                const double m3 = prst.sum() * inv_n;
                out.pi(r, s, t) = out.pi(r, t, s) = out.pi(s, r, t) = m3;
                out.pi(s, t, r) = out.pi(t, r, s) = out.pi(t, s, r) = m3;
                for (Index u = t; u < k; ++u) {
                    const double m4 = (prst * p.row(u).array()).sum() * inv_n;
                    Index id[4] = {r, s, t, u};
                    std::sort(id, id + 4);
                    do {
                        out.pi(id[0], id[1], id[2], id[3]) = m4;
                    } while (std::next_permutation(id, id + 4));
                }
            }
        }
    }
    out.check_invariants();
    return out;
}

// Allelic spectrum on [0,1]^K: either a product of 1-D marginal densities
// (one shared marginal or one per coordinate) or a joint density for
// K <= 3.
struct Spectrum {
    std::vector<std::function<double(double)>> marginals;
    std::function<double(double, double, double)> joint3;  // optional, K = 3 only
};

namespace spectra {

// density of p = U^2 with U uniform: 1 / (2 sqrt(x))
inline std::function<double(double)> u_squared() {
    return [](double x) { return 0.5 / std::sqrt(x); };
}

inline std::function<double(double)> uniform() {
    return [](double) { return 1.0; };
}

}  // namespace spectra

namespace detail {

// Adaptive Gauss-Kronrod on [0,1], falling back to tanh-sinh when the
// G-K error estimate misses the tolerance (integrable endpoint
// singularities defeat bisection).
inline double integrate01(const std::function<double(double)>& f, double tol = 1e-10) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
    double err = 0.0;
    const double val = gk::integrate(f, 0.0, 1.0, 15, tol, &err);
    if (err <= tol * std::max(1.0, std::abs(val))) return val;
    boost::math::quadrature::tanh_sinh<double> ts;
    return ts.integrate(f, 0.0, 1.0, tol);
}

inline void check_mass(double mass) {
    if (std::abs(mass - 1.0) > 1e-6) {
        std::ostringstream os;
        os << "spectrum density integrates to " << mass << ", not 1";
        throw validation_error(os.str());
    }
}

}  // namespace detail

// pi integrated against the spectrum. Product densities factor into 1-D
// moments; a K = 3 joint density is integrated by nested quadrature at a
// reduced tolerance.
inline MomentTensor pi_moments_spectral(const Spectrum& spectrum, Index k) {
    if (k < 1) throw validation_error("pi_moments_spectral needs K >= 1");
    MomentTensor out(k, MomentProvenance::spectral);

    if (!spectrum.marginals.empty()) {
        if (spectrum.marginals.size() != 1 &&
            spectrum.marginals.size() != static_cast<std::size_t>(k))
            throw validation_error("product spectrum needs 1 shared or K marginal densities");
        // raw moments E x^d per coordinate, d = 0..4
        std::vector<std::array<double, 5>> mom(static_cast<std::size_t>(k));
        for (Index r = 0; r < k; ++r) {
            const auto& density =
                spectrum.marginals[spectrum.marginals.size() == 1 ? 0
                                                                  : static_cast<std::size_t>(r)];
            for (int d = 0; d <= 4; ++d)
                mom[static_cast<std::size_t>(r)][static_cast<std::size_t>(d)] =
                    detail::integrate01([&](double x) { return std::pow(x, d) * density(x); });
            detail::check_mass(mom[static_cast<std::size_t>(r)][0]);
        }
        auto product_moment = [&](std::initializer_list<Index> indices) {
            int mult[64] = {};
            for (Index i : indices) ++mult[i];
            double value = 1.0;
            for (Index r = 0; r < k; ++r)
                if (mult[r] > 0) value *= mom[static_cast<std::size_t>(r)][mult[r]];
            return value;
        };
        for (Index r = 0; r < k; ++r) {
            out.pi(r) = product_moment({r});
            for (Index s = 0; s < k; ++s) {
                out.pi(r, s) = product_moment({r, s});
                for (Index t = 0; t < k; ++t) {
                    out.pi(r, s, t) = product_moment({r, s, t});
                    for (Index u = 0; u < k; ++u)
                        out.pi(r, s, t, u) = product_moment({r, s, t, u});
                }
            }
        }
    } else if (spectrum.joint3) {
        if (k != 3) throw validation_error("joint spectra are supported for K = 3 only");
        auto cubature = [&](auto&& weight) {
            const double tol = 1e-8;
            return detail::integrate01(
                [&](double x) {
                    return detail::integrate01(
                        [&](double y) {
                            return detail::integrate01(
                                [&](double z) { return weight(x, y, z) * spectrum.joint3(x, y, z); },
                                tol);
                        },
                        tol);
                },
                tol);
        };
        detail::check_mass(cubature([](double, double, double) { return 1.0; }));
        auto coord = [](Index r, double x, double y, double z) {
            return r == 0 ? x : (r == 1 ? y : z);
        };
        // one cubature per sorted index pattern, copied to all permutations
        for (Index r = 0; r < 3; ++r) {
            out.pi(r) = cubature([&](double x, double y, double z) { return coord(r, x, y, z); });
            for (Index s = r; s < 3; ++s) {
                const double m2 = cubature([&](double x, double y, double z) {
                    return coord(r, x, y, z) * coord(s, x, y, z);
                });
                out.pi(r, s) = out.pi(s, r) = m2;
                for (Index t = s; t < 3; ++t) {
                    const double m3 = cubature([&](double x, double y, double z) {
                        return coord(r, x, y, z) * coord(s, x, y, z) * coord(t, x, y, z);
                    });
                    Index id3[3] = {r, s, t};
                    do {
                        out.pi(id3[0], id3[1], id3[2]) = m3;
                    } while (std::next_permutation(id3, id3 + 3));
                    for (Index u = t; u < 3; ++u) {
                        const double m4 = cubature([&](double x, double y, double z) {
                            return coord(r, x, y, z) * coord(s, x, y, z) * coord(t, x, y, z) *
                                   coord(u, x, y, z);
                        });
                        Index id4[4] = {r, s, t, u};
                        do {
                            out.pi(id4[0], id4[1], id4[2], id4[3]) = m4;
                        } while (std::next_permutation(id4, id4 + 4));
                    }
                }
            }
        }
    } else {
        throw validation_error("spectrum has neither marginal nor joint densities");
    }
    out.check_invariants();
    return out;
}

// Inverse-CDF draw p = U^2 of the u_squared spectrum, one independent
// stream per subpopulation.
inline Matrix sample_allelic_probabilities(Index k, Index n, std::uint64_t p_seed) {
    Matrix p(k, n);
    for (Index r = 0; r < k; ++r) {
        const std::uint64_t stream = rng::split_seed(p_seed, static_cast<std::uint64_t>(r));
        for (Index j = 0; j < n; ++j) {
            const auto w = rng::philox4x32(stream, static_cast<std::uint32_t>(j), 0);
            const double u = rng::u01(w[0], w[1]);
            p(r, j) = u * u;
        }
    }
    return p;
}

// Subpopulation layout plus the moment data every prediction needs. The
// frequency vectors are optional: a model can be predicted from moments
// alone, but simulation requires realized frequencies.
class AllelicModel {
public:
    AllelicModel(Eigen::VectorXi sizes, Matrix p, std::optional<MomentTensor> pi = std::nullopt)
        : sizes_(std::move(sizes)), p_(std::move(p)) {
        check_sizes();
        if (p_.rows() != sizes_.size() || p_.cols() < 1)
            throw validation_error("allele frequency matrix must be K x N");
        if ((p_.array() <= 0.0).any() || (p_.array() >= 1.0).any())
            throw validation_error("allele frequencies must lie strictly in (0,1)");
        markers_ = p_.cols();
        pi_ = pi ? std::move(*pi) : pi_moments_empirical(p_);
        pi_->check_invariants();
        if (pi_->order() != sizes_.size())
            throw validation_error("moment tensor order does not match subpopulation count");
    }

    AllelicModel(Eigen::VectorXi sizes, Index markers, MomentTensor pi)
        : sizes_(std::move(sizes)), markers_(markers), pi_(std::move(pi)) {
        check_sizes();
        if (markers_ < 1) throw validation_error("marker count must be positive");
        pi_->check_invariants();
        if (pi_->order() != sizes_.size())
            throw validation_error("moment tensor order does not match subpopulation count");
    }

    Index subpopulations() const { return sizes_.size(); }
    const Eigen::VectorXi& sizes() const { return sizes_; }
    Index individuals() const { return sizes_.sum(); }
    Index markers() const { return markers_; }
    bool has_frequencies() const { return p_.size() > 0; }
    const Matrix& frequencies() const { return p_; }
    const MomentTensor& moments() const { return *pi_; }
    double aspect() const {
        return static_cast<double>(individuals()) / static_cast<double>(markers_);
    }

private:
    void check_sizes() {
        if (sizes_.size() < 1) throw validation_error("need at least one subpopulation");
        for (Index r = 0; r < sizes_.size(); ++r)
            if (sizes_(r) < 1)
                throw validation_error("every subpopulation must be represented (M_r >= 1)");
    }

    Eigen::VectorXi sizes_;
    Index markers_ = 0;
    Matrix p_;  // K x N, may be empty
    std::optional<MomentTensor> pi_;
};

// F from subpopulation indicators, G = 2 sqrt(M_s) p_s, and the matching
// shifted-binomial noise profile.
inline PerturbationModel genetics_model(const AllelicModel& allelic) {
    if (!allelic.has_frequencies())
        throw validation_error("genetics_model needs realized allele frequencies");
    const Index k = allelic.subpopulations();
    const Index m = allelic.individuals();
    const Index n = allelic.markers();

    Matrix f = Matrix::Zero(m, k);
    Matrix param(m, n);
    Index row = 0;
    for (Index r = 0; r < k; ++r) {
        const Index mr = allelic.sizes()(r);
        f.col(r).segment(row, mr).setConstant(1.0 / std::sqrt(static_cast<double>(mr)));
        param.middleRows(row, mr) = allelic.frequencies().row(r).replicate(mr, 1);
        row += mr;
    }
    Matrix g(n, k);
    for (Index s = 0; s < k; ++s)
        g.col(s) = 2.0 * std::sqrt(static_cast<double>(allelic.sizes()(s))) *
                   allelic.frequencies().row(s).transpose();
    return PerturbationModel(std::move(f), std::move(g),
                             NoiseProfile::shifted_binomial(std::move(param)));
}

struct GeneticsPrediction {
    Matrix Q;                     // limit of R0/(MN)
    Vector gamma;                 // eigenvalues of Q, descending
    Matrix v;                     // sign-fixed eigenvectors
    std::vector<Matrix> sigma_t;  // per-subpopulation variance forms
    Vector shift_sqrt_c;          // a_r:  m_r = a_r sqrt(c) + b_r / sqrt(c)
    Vector shift_inv_sqrt_c;      // b_r
    Vector m;                     // shifts at the model's aspect ratio
    Matrix cov;                   // covariance of the limiting normal fluctuations
    Vector m_tilde;               // shift on the normalized lambda^2/(sqrt M + sqrt N)^2 scale
    Matrix cov_tilde;             // covariance on that scale
    double c = 0.0;
};

inline GeneticsPrediction genetics_predictions(const AllelicModel& allelic) {
    const Index k = allelic.subpopulations();
    const MomentTensor& pi = allelic.moments();
    const double c = allelic.aspect();
    const double n = static_cast<double>(allelic.markers());

    // sqrt(c_r c_s) / c = sqrt(M_r M_s) / M
    Matrix weight(k, k);
    for (Index r = 0; r < k; ++r)
        for (Index s = 0; s < k; ++s)
            weight(r, s) = std::sqrt(static_cast<double>(allelic.sizes()(r)) *
                                     static_cast<double>(allelic.sizes()(s))) /
                           static_cast<double>(allelic.individuals());

    GeneticsPrediction out;
    out.c = c;
    out.Q.resize(k, k);
    for (Index r = 0; r < k; ++r)
        for (Index s = 0; s < k; ++s) out.Q(r, s) = 4.0 * weight(r, s) * pi.pi(r, s);

    EigenData eig = spectral_data(out.Q);
    if (!(eig.values(k - 1) > 0.0))
        throw numerical_error("Q must have strictly positive eigenvalues");
    out.gamma = eig.values;
    out.v = eig.vectors;

    out.sigma_t.resize(static_cast<std::size_t>(k));
    for (Index t = 0; t < k; ++t) {
        Matrix& sig = out.sigma_t[static_cast<std::size_t>(t)];
        sig.resize(k, k);
        for (Index r = 0; r < k; ++r)
            for (Index s = 0; s < k; ++s)
                sig(r, s) = weight(r, s) * (pi.pi(r, s, t) - pi.pi(r, s, t, t));
    }

    out.shift_sqrt_c.resize(k);
    out.shift_inv_sqrt_c.resize(k);
    out.m.resize(k);
    for (Index r = 0; r < k; ++r) {
        double het = 0.0;  // sum_t [v_r]_t^2 (pi_t - pi_tt)
        for (Index t = 0; t < k; ++t)
            het += out.v(t, r) * out.v(t, r) * (pi.pi(t) - pi.pi(t, t));
        out.shift_inv_sqrt_c(r) = het / std::sqrt(out.gamma(r));
        // sqrt(c) coefficient from the subpopulation-matched quadratic form
        const double quad =
            out.v.col(r).dot(out.sigma_t[static_cast<std::size_t>(r)] * out.v.col(r));
        out.shift_sqrt_c(r) = 4.0 * quad / std::pow(out.gamma(r), 1.5);
        out.m(r) = out.shift_sqrt_c(r) * std::sqrt(c) + out.shift_inv_sqrt_c(r) / std::sqrt(c);
    }

    out.cov.resize(k, k);
    for (Index r = 0; r < k; ++r)
        for (Index s = 0; s < k; ++s) {
            double sum = 0.0;
            for (Index t = 0; t < k; ++t)
                sum += out.v(t, r) * out.v(t, s) *
                       out.v.col(r).dot(out.sigma_t[static_cast<std::size_t>(t)] * out.v.col(s));
            out.cov(r, s) = 8.0 * sum / std::sqrt(out.gamma(r) * out.gamma(s));
        }

    // normalized scale: exact rescalings of m and cov
    const double denom = (1.0 + std::sqrt(c)) * (1.0 + std::sqrt(c));
    out.m_tilde.resize(k);
    for (Index r = 0; r < k; ++r)
        out.m_tilde(r) = out.m(r) * 2.0 * std::sqrt(c * out.gamma(r)) / denom;
    out.cov_tilde.resize(k, k);
    for (Index r = 0; r < k; ++r)
        for (Index s = 0; s < k; ++s)
            out.cov_tilde(r, s) = out.cov(r, s) * 4.0 * c *
                                  std::sqrt(out.gamma(r) * out.gamma(s)) / (denom * denom);

    for (Index r = 0; r < k; ++r)
        if (!(out.cov(r, r) > 0.0) || !(out.cov_tilde(r, r) > 0.0))
            throw numerical_error("predicted fluctuation variances must be positive");
    return out;
}

}  // namespace spikesv
