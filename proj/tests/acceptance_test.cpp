// Acceptance suite: end-to-end checks of the library against its reference
// numbers, one test per criterion, each printing a pass/fail line.

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spikesv/spikesv.hpp"

using namespace spikesv;
using clock_type = std::chrono::steady_clock;

namespace {

struct CriterionBanner {
    int number;
    explicit CriterionBanner(int n) : number(n) {}
    ~CriterionBanner() {
        std::printf("[acceptance] criterion %d: %s\n", number,
                    ::testing::Test::HasFailure() ? "FAIL" : "PASS");
        std::fflush(stdout);
    }
};

BlockSpec reference_block(Index rows, Index cols) {
    BlockSpec spec;
    spec.mu = {0.0, 1.0, 1.0, 1.0};
    spec.sigma2 = {1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3};
    spec.rows = rows;
    spec.cols = cols;
    spec.entry_family = NoiseKind::uniform_centered;  // U(-1,1) and U(0,2) blocks
    return spec;
}

double median_abs(const Eigen::Ref<const Vector>& values) {
    std::vector<double> v(values.data(), values.data() + values.size());
    for (auto& x : v) x = std::abs(x);
    const auto mid = v.begin() + v.size() / 2;
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

// shared across criteria 1 and 2
const EnsembleSummary& small_block_run() {
    static const EnsembleSummary summary = [] {
        RunSpec spec{block_model(reference_block(20, 50)), 10000, 1234, 1};
        spec.weyl_fraction = 0.0;
        return run_ensemble(spec);
    }();
    return summary;
}

Matrix reference_covariance() {
    Matrix cov(3, 3);
    cov << 0.306317, 0.0293619, 0.0225604,  //
        0.0293619, 0.233577, -0.00941692,   //
        0.0225604, -0.00941692, 0.235559;
    return cov;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Acceptance, Criterion1BlockSmallMoments) {
    CriterionBanner banner(1);
    const auto start = clock_type::now();
    const auto& s = small_block_run();
    const double seconds = std::chrono::duration<double>(clock_type::now() - start).count();

    EXPECT_NEAR(s.emp_mean(0), 51.6228, 0.05);
    EXPECT_NEAR(s.emp_mean(1), 20.7378, 0.05);
    EXPECT_GE(s.emp_var(0), 0.30);
    EXPECT_LE(s.emp_var(0), 0.37);
    EXPECT_GE(s.emp_var(1), 0.30);
    EXPECT_LE(s.emp_var(1), 0.37);
    EXPECT_LT(seconds, 60.0);
    std::printf("  mean(l1) %.4f (target 51.6228 +- 0.05), mean(l2) %.4f (target 20.7378 +- 0.05)\n",
                s.emp_mean(0), s.emp_mean(1));
    std::printf("  var(l1) %.4f, var(l2) %.4f (window [0.30, 0.37]), %.1f s\n", s.emp_var(0),
                s.emp_var(1), seconds);
}

TEST(Acceptance, Criterion2BlockLargeNormality) {
    CriterionBanner banner(2);
    RunSpec spec{block_model(reference_block(200, 500)), 2000, 20240802, 1};
    spec.weyl_fraction = 0.0;
    const auto large = run_ensemble(spec);

    const double center = large.prediction.sqrt_rho(0) + large.prediction.m(0);
    std::vector<double> l1(large.lambda.col(0).data(),
                           large.lambda.col(0).data() + large.lambda.rows());
    const double ks = ks_distance(l1, center, 1.0 / 3.0);
    EXPECT_LT(ks, 0.05);

    const double med_large = median_abs(large.epsilon.col(0));
    const double med_small = median_abs(small_block_run().epsilon.col(0));
    EXPECT_LT(med_large, med_small);
    std::printf("  KS %.4f (< 0.05); median|eps1| %.5f small vs %.5f large\n", ks, med_small,
                med_large);
}

TEST(Acceptance, Criterion3GeneticsClosedForms) {
    CriterionBanner banner(3);
    const auto start = clock_type::now();

    Spectrum spectrum;
    spectrum.marginals.push_back(spectra::u_squared());
    Eigen::VectorXi sizes(3);
    sizes << 20, 40, 60;
    const AllelicModel allelic(sizes, 2500, pi_moments_spectral(spectrum, 3));
    const auto gp = genetics_predictions(allelic);

    // Q: six independent entries
    Matrix q_ref(3, 3);
    q_ref << 0.133333, 0.104757, 0.1283,  //
        0.104757, 0.266667, 0.181444,     //
        0.1283, 0.181444, 0.4;
    for (Index r = 0; r < 3; ++r)
        for (Index s = r; s < 3; ++s) EXPECT_NEAR(gp.Q(r, s), q_ref(r, s), 1e-6);

    EXPECT_NEAR(gp.gamma(0), 0.586836, 1e-5);
    EXPECT_NEAR(gp.gamma(1), 0.141985, 1e-5);
    EXPECT_NEAR(gp.gamma(2), 0.0711794, 1e-5);
    EXPECT_NEAR(gp.v(0, 0), 0.342425, 1e-5);
    EXPECT_NEAR(gp.v(1, 0), 0.545539, 1e-5);
    EXPECT_NEAR(gp.v(2, 0), 0.764939, 1e-5);

    Matrix sigma1_ref(3, 3);
    sigma1_ref << 0.00529101, 0.00448957, 0.00549857,  //
        0.00448957, 0.00888889, 0.00604812,            //
        0.00549857, 0.00604812, 0.0133333;
    for (Index r = 0; r < 3; ++r)
        for (Index s = 0; s < 3; ++s) EXPECT_NEAR(gp.sigma_t[0](r, s), sigma1_ref(r, s), 1e-6);

    EXPECT_NEAR(gp.c, 120.0 / 2500.0, 1e-15);
    EXPECT_NEAR(gp.m(0), 0.834739, 1e-4);
    EXPECT_NEAR(gp.m(1), 1.68599, 1e-4);
    EXPECT_NEAR(gp.m(2), 2.38504, 1e-4);

    const Matrix cov_ref = reference_covariance();
    for (Index r = 0; r < 3; ++r)
        for (Index s = 0; s < 3; ++s) EXPECT_NEAR(gp.cov(r, s), cov_ref(r, s), 1e-5);

    const double seconds = std::chrono::duration<double>(clock_type::now() - start).count();
    EXPECT_LT(seconds, 1.0);
    std::printf("  m = [%.6f, %.5f, %.5f], %.3f s\n", gp.m(0), gp.m(1), gp.m(2), seconds);
}

TEST(Acceptance, Criterion4GeneticsMonteCarlo) {
    CriterionBanner banner(4);
    const auto start = clock_type::now();

    Eigen::VectorXi sizes(3);
    sizes << 20, 40, 60;
    const Matrix p = sample_allelic_probabilities(3, 2500, 2026);
    const AllelicModel allelic(sizes, p);
    RunSpec spec{genetics_model(allelic), 10000, 20240804, 1};
    spec.weyl_fraction = 0.0;
    const auto s = run_ensemble(spec);

    // centers recomputed for this frequency draw
    for (Index r = 0; r < 3; ++r) {
        const double center = s.prediction.sqrt_rho(r) + s.prediction.m(r);
        EXPECT_NEAR(s.emp_mean(r), center, 0.06) << "r = " << r + 1;
    }
    const Matrix cov_ref = reference_covariance();
    for (Index r = 0; r < 3; ++r)
        for (Index c = 0; c < 3; ++c) EXPECT_NEAR(s.emp_cov(r, c), cov_ref(r, c), 0.03);

    const double seconds = std::chrono::duration<double>(clock_type::now() - start).count();
    EXPECT_LT(seconds, 900.0);
    std::printf("  centers [%.2f, %.2f, %.2f], mean offsets [%.4f, %.4f, %.4f]\n",
                s.prediction.sqrt_rho(0) + s.prediction.m(0),
                s.prediction.sqrt_rho(1) + s.prediction.m(1),
                s.prediction.sqrt_rho(2) + s.prediction.m(2),
                s.emp_mean(0) - s.prediction.sqrt_rho(0) - s.prediction.m(0),
                s.emp_mean(1) - s.prediction.sqrt_rho(1) - s.prediction.m(1),
                s.emp_mean(2) - s.prediction.sqrt_rho(2) - s.prediction.m(2));
    std::printf("  cov diag [%.4f, %.4f, %.4f] vs [%.4f, %.4f, %.4f], %.0f s\n", s.emp_cov(0, 0),
                s.emp_cov(1, 1), s.emp_cov(2, 2), cov_ref(0, 0), cov_ref(1, 1), cov_ref(2, 2),
                seconds);
}

TEST(Acceptance, Criterion5CriterionOracle) {
    CriterionBanner banner(5);
    int instances = 0;
    for (std::uint64_t seed = 0; instances < 100; ++seed) {
        const Index m = 6 + static_cast<Index>(seed % 7);         // 6..12
        const Index n = 8 + static_cast<Index>((3 * seed) % 9);   // 8..16
        const Index k = 1 + static_cast<Index>(seed % 3);         // 1..3

        Matrix raw(m, k);
        for (Index j = 0; j < k; ++j)
            for (Index i = 0; i < m; ++i)
                raw(i, j) = rng::gaussian(rng::philox4x32(seed, static_cast<std::uint32_t>(i),
                                                          static_cast<std::uint32_t>(j)));
        Eigen::HouseholderQR<Matrix> qr(raw);
        const Matrix f = qr.householderQ() * Matrix::Identity(m, k);
        Matrix c(m, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < m; ++i)
                c(i, j) = rng::gaussian(rng::philox4x32(seed + 7, static_cast<std::uint32_t>(i),
                                                        static_cast<std::uint32_t>(j)));
        // scale the mean until the gap condition ||C||^2 < lambda_K^2 / 4 holds
        const double cnorm = spectral_norm(c);
        Matrix g(n, k);
        for (Index j = 0; j < k; ++j)
            for (Index i = 0; i < n; ++i)
                g(i, j) = (1.0 + 0.7 * double(j)) *
                          (1.5 + std::sin(double(i + 1) * double(j + 2) + double(seed)));
        for (double scale = 3.0 * cnorm;; scale *= 1.5) {
            const Matrix scaled = scale * g;
            const Vector lambda = top_singular_values(c + f * scaled.transpose(), k).singular_values;
            if (cnorm * cnorm < 0.25 * lambda(k - 1) * lambda(k - 1)) {
                g = scaled;
                break;
            }
        }

        const Matrix d = c + f * g.transpose();
        const Vector lambda = top_singular_values(d, k).singular_values;
        ASSERT_LT(cnorm * cnorm, 0.25 * lambda(k - 1) * lambda(k - 1));
        for (Index r = 0; r < k; ++r) {
            const double at_root =
                std::abs(criterion_determinant(criterion_matrices(c, f, g, lambda(r))));
            const double off_root =
                std::abs(criterion_determinant(criterion_matrices(c, f, g, lambda(r) * 1.05)));
            ASSERT_LE(at_root, 1e-6 * off_root) << "instance " << instances << " r " << r + 1;
        }
        ++instances;
    }
    EXPECT_EQ(instances, 100);
    std::printf("  100 instances, det vanished at every top singular value\n");
}

TEST(Acceptance, Criterion6InvariantSuite) {
    CriterionBanner banner(6);

    // Weyl bound on every checked replicate
    {
        RunSpec spec{block_model(reference_block(6, 15)), 2000, 77, 1};
        spec.weyl_fraction = 1.0;
        const auto s = run_ensemble(spec);
        EXPECT_EQ(s.weyl_checked, 2000);
        EXPECT_EQ(s.weyl_violations, 0);
    }

    // zero-noise degeneracy: lambda_r = sqrt(rho_r) to 1e-10 relative and
    // eps_r = -m_r
    {
        RunSpec spec{block_model(reference_block(20, 50)), 1, 5, 1};
        spec.zero_noise = true;
        const auto s = run_ensemble(spec);
        for (Index r = 0; r < 2; ++r) {
            EXPECT_LE(std::abs(s.lambda(0, r) - s.prediction.sqrt_rho(r)),
                      1e-10 * s.prediction.sqrt_rho(r));
            EXPECT_NEAR(s.epsilon(0, r), -s.prediction.m(r), 1e-8);
        }
    }

    // E ||Z0||_F^2 <= K^2 x fourth-moment-derived bound over 1e4 replicates
    {
        const auto model = block_model(reference_block(6, 15));
        const auto pred = make_prediction(model);
        const double mn = double(model.rows()) * double(model.cols());
        double max_g2 = 0.0;
        for (Index s = 0; s < model.rank(); ++s)
            max_g2 = std::max(max_g2, model.right_factors().col(s).squaredNorm());
        const double bound = double(model.rank() * model.rank()) *
                             std::sqrt(model.noise().fourth_moment_bound()) * max_g2 / mn;
        double acc = 0.0;
        const int reps = 10000;
        for (int t = 0; t < reps; ++t) {
            const auto noise =
                sample_noise(model, rng::split_seed(13, static_cast<std::uint64_t>(t)));
            acc += fluctuation(model, noise, pred).first.squaredNorm();
        }
        EXPECT_LE(acc / reps, bound);
    }

    // determinism: byte-identical samples.csv across thread counts
    {
        auto make = [](int threads) {
            RunSpec spec{block_model(reference_block(6, 15)), 100, 4242, threads};
            return run_ensemble(spec);
        };
        const auto dir = std::filesystem::temp_directory_path() / "spikesv_acc_det";
        export_summary(make(1), dir / "t1");
        export_summary(make(3), dir / "t3");
        EXPECT_EQ(slurp(dir / "t1" / "samples.csv"), slurp(dir / "t3" / "samples.csv"));
    }

    // eigenvector sign convention stable under 1e-14 perturbations
    {
        Matrix q(3, 3);
        const double prop[3] = {1.0 / 6, 1.0 / 3, 1.0 / 2};
        for (int r = 0; r < 3; ++r)
            for (int s = 0; s < 3; ++s)
                q(r, s) = 4.0 * std::sqrt(prop[r] * prop[s]) * (r == s ? 0.2 : 1.0 / 9);
        const auto base = spectral_data(q);
        const double scale = q.cwiseAbs().maxCoeff();
        for (int trial = 0; trial < 16; ++trial) {
            Matrix bump(3, 3);
            for (Index i = 0; i < 3; ++i)
                for (Index j = 0; j <= i; ++j) {
                    const double x =
                        2.0 * rng::u01(rng::philox4x32(trial, static_cast<std::uint32_t>(i),
                                                       static_cast<std::uint32_t>(j))[0],
                                       1) -
                        1.0;
                    bump(i, j) = bump(j, i) = x;
                }
            const auto moved = spectral_data(q + 1e-14 * scale * bump);
            EXPECT_LT((base.values - moved.values).cwiseAbs().maxCoeff(), 2e-14 * scale);
            EXPECT_LT((base.vectors - moved.vectors).cwiseAbs().maxCoeff(), 1e-6);
        }
    }
    std::printf("  weyl, zero-noise, Z0 bound, determinism, sign stability all hold\n");
}

TEST(Acceptance, Criterion7RankOneLaw) {
    CriterionBanner banner(7);
    auto [model, rp] = rank1_model(Vector::Constant(300, 1.0), 1.0, 300, 300);
    RunSpec spec{std::move(model), 5000, 20240807, 1};
    spec.weyl_fraction = 0.0;
    const auto s = run_ensemble(spec);
    const double mean_excess = s.emp_mean(0) - 300.0;  // sqrt(MN) = 300
    EXPECT_NEAR(mean_excess, 1.0, 0.08);
    EXPECT_GE(s.emp_var(0), 0.9);
    EXPECT_LE(s.emp_var(0), 1.1);
    EXPECT_NEAR(rp.shift_mean, 1.0, 1e-12);
    std::printf("  mean(l1 - 300) = %.4f (target 1.0 +- 0.08), var %.4f (in [0.9, 1.1])\n",
                mean_excess, s.emp_var(0));
}
