#pragma once

// Seeded Monte Carlo driver. Replicate i is a pure function of
// split(seed, i), workers write into disjoint row slots, and aggregation
// is a fold in replicate order, so results are bit-identical for a fixed
// (seed, R) under any thread count.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "spikesv/errors.hpp"
#include "spikesv/model.hpp"
#include "spikesv/predictor.hpp"
#include "spikesv/svd.hpp"

namespace spikesv {

struct CollectFlags {
    bool lambda = true;
    bool z = true;
    bool epsilon = true;
    bool normalized_lambda = true;
};

struct RunSpec {
    PerturbationModel model;
    Index replicates = 1;
    std::uint64_t seed = 0;
    int threads = 1;
    CollectFlags collect;
    bool zero_noise = false;      // force C = 0 (degenerate diagnostics)
    double weyl_fraction = 0.01;  // fraction of replicates checked against |l_r - sqrt(rho_r)| <= ||C||
};

struct Histogram {
    std::vector<double> edges;        // nbins + 1
    std::vector<std::int64_t> counts; // nbins, summing to R
};

struct EnsembleSummary {
    Index replicates = 0;
    Index rank = 0;
    std::uint64_t seed = 0;
    int threads = 1;

    Matrix lambda;   // R x K
    Matrix Z;        // R x K
    Matrix epsilon;  // R x K
    Matrix Lambda;   // R x K, lambda^2 / (sqrt(M) + sqrt(N))^2

    Vector emp_mean, emp_var;  // per r over replicates
    Matrix emp_cov;            // K x K
    Vector ks;                 // KS of lambda_r against Normal(sqrt(rho_r)+m_r, predicted var)
    Vector eps_median_abs;     // median |eps_r|, the residual diagnostic
    std::vector<Histogram> histograms;

    SpectralPrediction prediction;
    Matrix predicted_cov;       // finite-N covariance of Z
    Vector normalized_center;   // rho_r/(sqrt M + sqrt N)^2 + m_tilde_r
    Vector m_tilde;

    Index dropped = 0;
    Index weyl_checked = 0;
    Index weyl_violations = 0;

    CollectFlags collect;
};

// Supremum distance between the empirical CDF of the sample and the
// Normal(mean, variance) CDF.
inline double ks_distance(std::vector<double> sample, double mean, double variance) {
    if (sample.size() < 2) throw validation_error("ks_distance needs at least 2 samples");
    if (!(variance > 0.0)) throw validation_error("ks_distance needs positive variance");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    const double inv_sd = 1.0 / std::sqrt(variance);
    double sup = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double z = (sample[i] - mean) * inv_sd;
        const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
        const double lo = cdf - static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n - cdf;
        sup = std::max({sup, lo, hi});
    }
    return sup;
}

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Freedman-Diaconis bin count with a floor of 20 bins.
inline Histogram make_histogram(const Vector& values) {
    std::vector<double> sorted(values.data(), values.data() + values.size());
    std::sort(sorted.begin(), sorted.end());
    double lo = sorted.front(), hi = sorted.back();
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    const double fd_width =
        2.0 * iqr / std::cbrt(static_cast<double>(sorted.size()));
    Index nbins = 20;
    if (fd_width > 0.0)
        nbins = std::max<Index>(20, static_cast<Index>(std::ceil((hi - lo) / fd_width)));
    nbins = std::min<Index>(nbins, 512);

    Histogram h;
    h.edges.resize(static_cast<std::size_t>(nbins) + 1);
    const double width = (hi - lo) / static_cast<double>(nbins);
    for (Index b = 0; b <= nbins; ++b)
        h.edges[static_cast<std::size_t>(b)] = lo + width * static_cast<double>(b);
    h.edges.back() = hi;
    h.counts.assign(static_cast<std::size_t>(nbins), 0);
    for (double v : sorted) {
        auto b = static_cast<Index>((v - lo) / width);
        b = std::clamp<Index>(b, 0, nbins - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

}  // namespace detail

inline EnsembleSummary run_ensemble(const RunSpec& spec) {
    if (spec.replicates < 1) throw validation_error("run_ensemble needs replicates >= 1");
    const PerturbationModel& model = spec.model;
    const Index K = model.rank();
    const Index R = spec.replicates;
    const Index M = model.rows(), N = model.cols();

    EnsembleSummary out;
    out.replicates = R;
    out.rank = K;
    out.seed = spec.seed;
    out.threads = std::max(1, spec.threads);
    out.collect = spec.collect;
    out.prediction = make_prediction(model);
    out.predicted_cov = fluctuation_covariance(model, out.prediction);

    const double norm_scale =
        (std::sqrt(static_cast<double>(M)) + std::sqrt(static_cast<double>(N))) *
        (std::sqrt(static_cast<double>(M)) + std::sqrt(static_cast<double>(N)));
    out.m_tilde.resize(K);
    out.normalized_center.resize(K);
    for (Index r = 0; r < K; ++r) {
        out.m_tilde(r) = out.prediction.m(r) * 2.0 *
                         std::sqrt(out.prediction.c * out.prediction.gamma(r)) /
                         ((1.0 + std::sqrt(out.prediction.c)) *
                          (1.0 + std::sqrt(out.prediction.c)));
        out.normalized_center(r) = out.prediction.rho(r) / norm_scale + out.m_tilde(r);
    }

    out.lambda.resize(R, K);
    out.Z.resize(R, K);
    out.epsilon.resize(R, K);
    out.Lambda.resize(R, K);

    const Index weyl_stride =
        spec.weyl_fraction <= 0.0
            ? 0
            : std::max<Index>(1, static_cast<Index>(std::llround(1.0 / spec.weyl_fraction)));

    std::vector<unsigned char> failed(static_cast<std::size_t>(R), 0);
    std::atomic<Index> weyl_checked{0}, weyl_violations{0};
    std::atomic<Index> next{0};

    auto worker = [&]() {
        for (;;) {
            const Index t = next.fetch_add(1);
            if (t >= R) return;
            try {
                NoiseMatrix noise;
                if (spec.zero_noise) {
                    noise.values = Matrix::Zero(M, N);
                    noise.seed = rng::split_seed(spec.seed, static_cast<std::uint64_t>(t));
                    noise.model_id = model.id();
                } else {
                    noise = sample_noise(model,
                                         rng::split_seed(spec.seed, static_cast<std::uint64_t>(t)));
                }
                const Matrix d = assemble_observation(model, noise);
                const Vector lambda = top_singular_values_gram(d, K);
                const FluctuationSample fs = decompose(model, noise, out.prediction, lambda);
                out.lambda.row(t) = lambda.transpose();
                out.Z.row(t) = fs.Z.transpose();
                out.epsilon.row(t) = fs.epsilon.transpose();
                for (Index r = 0; r < K; ++r)
                    out.Lambda(t, r) = lambda(r) * lambda(r) / norm_scale;
                if (weyl_stride > 0 && t % weyl_stride == 0) {
                    const double cnorm = spec.zero_noise ? 0.0 : spectral_norm(noise.values);
                    weyl_checked.fetch_add(1);
                    for (Index r = 0; r < K; ++r) {
                        const double dev = std::abs(lambda(r) - out.prediction.sqrt_rho(r));
                        if (dev > cnorm + 1e-8 * std::max(1.0, lambda(0))) {
                            weyl_violations.fetch_add(1);
                            break;
                        }
                    }
                }
            } catch (const numerical_error&) {
                failed[static_cast<std::size_t>(t)] = 1;
            }
        }
    };

    if (out.threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(out.threads));
        for (int w = 0; w < out.threads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    out.weyl_checked = weyl_checked.load();
    out.weyl_violations = weyl_violations.load();

    // drop failed replicates, keeping index order
    out.dropped = static_cast<Index>(
        std::count(failed.begin(), failed.end(), static_cast<unsigned char>(1)));
    if (out.dropped > 0) {
        if (static_cast<double>(out.dropped) > 0.001 * static_cast<double>(R)) {
            std::ostringstream os;
            os << out.dropped << " of " << R << " replicates failed (more than 0.1%)";
            throw numerical_error(os.str());
        }
        Index keep = 0;
        for (Index t = 0; t < R; ++t) {
            if (failed[static_cast<std::size_t>(t)]) continue;
            out.lambda.row(keep) = out.lambda.row(t);
            out.Z.row(keep) = out.Z.row(t);
            out.epsilon.row(keep) = out.epsilon.row(t);
            out.Lambda.row(keep) = out.Lambda.row(t);
            ++keep;
        }
        out.lambda.conservativeResize(keep, K);
        out.Z.conservativeResize(keep, K);
        out.epsilon.conservativeResize(keep, K);
        out.Lambda.conservativeResize(keep, K);
    }

    const Index r_eff = out.lambda.rows();
    out.emp_mean = out.lambda.colwise().mean();
    Matrix centered = out.lambda.rowwise() - out.emp_mean.transpose();
    out.emp_cov = centered.transpose() * centered / static_cast<double>(r_eff - (r_eff > 1));
    out.emp_var = out.emp_cov.diagonal();

    out.ks.resize(K);
    out.eps_median_abs.resize(K);
    out.histograms.resize(static_cast<std::size_t>(K));
    for (Index r = 0; r < K; ++r) {
        std::vector<double> col(out.lambda.col(r).data(), out.lambda.col(r).data() + r_eff);
        const double center = out.prediction.sqrt_rho(r) + out.prediction.m(r);
        if (r_eff >= 2 && out.predicted_cov(r, r) > 0.0)
            out.ks(r) = ks_distance(col, center, out.predicted_cov(r, r));
        else
            out.ks(r) = 1.0;
        std::vector<double> abs_eps(static_cast<std::size_t>(r_eff));
        for (Index t = 0; t < r_eff; ++t)
            abs_eps[static_cast<std::size_t>(t)] = std::abs(out.epsilon(t, r));
        const auto mid = abs_eps.begin() + abs_eps.size() / 2;
        std::nth_element(abs_eps.begin(), mid, abs_eps.end());
        out.eps_median_abs(r) = *mid;
        out.histograms[static_cast<std::size_t>(r)] = detail::make_histogram(out.lambda.col(r).head(r_eff));
    }
    return out;
}

}  // namespace spikesv
