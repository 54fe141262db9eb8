#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spikesv/ensembles.hpp"
#include "spikesv/harness.hpp"
#include "spikesv/io.hpp"

using namespace spikesv;

namespace {

RunSpec small_block_run(Index replicates, std::uint64_t seed, int threads = 1) {
    BlockSpec bs;
    bs.mu = {0.0, 1.0, 1.0, 1.0};
    bs.sigma2 = {1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3};
    bs.rows = 6;
    bs.cols = 15;
    RunSpec spec{block_model(bs), replicates, seed, threads};
    return spec;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> normal_draws(int n, double mean, double sd, std::uint64_t seed) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] =
            mean + sd * rng::gaussian(rng::philox4x32(seed, static_cast<std::uint32_t>(i), 0));
    return out;
}

}  // namespace

TEST(Ks, SelfConsistencyAtTheCriticalValue) {
    // draws from the target law stay under the 99% asymptotic critical value
    const int n = 10000;
    const auto sample = normal_draws(n, 2.0, 3.0, 8);
    EXPECT_LT(ks_distance(sample, 2.0, 9.0), 1.63 / std::sqrt(double(n)));
}

TEST(Ks, GrossMismatchIsNearOne) {
    const auto sample = normal_draws(5000, 5.0 * 3.0, 3.0, 9);
    EXPECT_GT(ks_distance(sample, 0.0, 9.0), 0.9);
}

TEST(Ks, DegenerateSampleStillScores) {
    const std::vector<double> constant(100, 1.5);
    const double d = ks_distance(constant, 1.5, 4.0);
    EXPECT_NEAR(d, 0.5, 1e-12);  // CDF jumps from 0 to 1 at the atom where Phi = 1/2
    EXPECT_THROW(ks_distance(constant, 0.0, 0.0), validation_error);
    EXPECT_THROW(ks_distance({1.0}, 0.0, 1.0), validation_error);
}

TEST(Harness, DegenerateZeroNoiseRun) {
    auto spec = small_block_run(1, 5);
    spec.zero_noise = true;
    const auto summary = run_ensemble(spec);
    for (Index r = 0; r < 2; ++r) {
        EXPECT_NEAR(summary.lambda(0, r), summary.prediction.sqrt_rho(r),
                    1e-10 * summary.prediction.sqrt_rho(r));
        EXPECT_NEAR(summary.epsilon(0, r), -summary.prediction.m(r), 1e-9);
        EXPECT_EQ(summary.Z(0, r), 0.0);
    }
}

TEST(Harness, DeterministicAcrossThreadCounts) {
    const auto base = run_ensemble(small_block_run(64, 31, 1));
    const auto threaded = run_ensemble(small_block_run(64, 31, 3));
    EXPECT_EQ(base.lambda, threaded.lambda);
    EXPECT_EQ(base.Z, threaded.Z);
    EXPECT_EQ(base.epsilon, threaded.epsilon);

    const auto dir1 = std::filesystem::temp_directory_path() / "spikesv_t1";
    const auto dir2 = std::filesystem::temp_directory_path() / "spikesv_t3";
    export_summary(base, dir1);
    export_summary(threaded, dir2);
    EXPECT_EQ(slurp(dir1 / "samples.csv"), slurp(dir2 / "samples.csv"));
    EXPECT_EQ(slurp(dir1 / "summary.json"), slurp(dir2 / "summary.json"));
}

TEST(Harness, WeylBoundHoldsOnEveryCheckedReplicate) {
    auto spec = small_block_run(200, 17);
    spec.weyl_fraction = 1.0;
    const auto summary = run_ensemble(spec);
    EXPECT_EQ(summary.weyl_checked, 200);
    EXPECT_EQ(summary.weyl_violations, 0);
}

TEST(Harness, NormalizedValuesAreExactPerReplicate) {
    const auto summary = run_ensemble(small_block_run(50, 23));
    const double m = 12.0, n = 30.0;  // full dimensions of the 6x15 block model
    const double denom = std::pow(std::sqrt(m) + std::sqrt(n), 2);
    for (Index t = 0; t < 50; ++t)
        for (Index r = 0; r < 2; ++r)
            ASSERT_EQ(summary.Lambda(t, r),
                      summary.lambda(t, r) * summary.lambda(t, r) / denom);
    // the normalized center is the exactly rescaled shift target
    for (Index r = 0; r < 2; ++r) {
        const double expected =
            summary.prediction.rho(r) / denom + summary.m_tilde(r);
        EXPECT_NEAR(summary.normalized_center(r), expected, 1e-12);
    }
}

TEST(Harness, SummaryMomentsMatchSamples) {
    const auto summary = run_ensemble(small_block_run(500, 77));
    // recompute moments directly from the stored samples
    for (Index r = 0; r < 2; ++r) {
        const double mean = summary.lambda.col(r).mean();
        EXPECT_NEAR(summary.emp_mean(r), mean, 1e-12);
        const double var =
            (summary.lambda.col(r).array() - mean).square().sum() / double(500 - 1);
        EXPECT_NEAR(summary.emp_var(r), var, 1e-12);
    }
    EXPECT_NEAR(summary.emp_cov(0, 1), summary.emp_cov(1, 0), 1e-15);
    // histogram counts sum to R
    for (const auto& h : summary.histograms) {
        std::int64_t total = 0;
        for (auto cnt : h.counts) total += cnt;
        EXPECT_EQ(total, 500);
        EXPECT_GE(h.counts.size(), 20u);
    }
}

TEST(Harness, ExportShapesAndRoundTrip) {
    const auto summary = run_ensemble(small_block_run(40, 99));
    const auto dir = std::filesystem::temp_directory_path() / "spikesv_export";
    export_summary(summary, dir);

    // samples.csv has R*K data rows
    std::ifstream in(dir / "samples.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "replicate,r,lambda,Z,epsilon,Lambda");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 40 * 2);

    // summary.json round-trips field-for-field
    const json j = json::parse(slurp(dir / "summary.json"));
    const EnsembleSummary back = summary_from_json(j);
    EXPECT_EQ(back.replicates, summary.replicates);
    EXPECT_EQ(back.seed, summary.seed);
    EXPECT_EQ(back.dropped, summary.dropped);
    EXPECT_EQ(back.emp_mean, summary.emp_mean);
    EXPECT_EQ(back.emp_var, summary.emp_var);
    EXPECT_EQ(back.emp_cov, summary.emp_cov);
    EXPECT_EQ(back.ks, summary.ks);
    EXPECT_EQ(back.eps_median_abs, summary.eps_median_abs);
    EXPECT_EQ(back.predicted_cov, summary.predicted_cov);
    EXPECT_EQ(back.m_tilde, summary.m_tilde);
    EXPECT_EQ(back.normalized_center, summary.normalized_center);
    EXPECT_EQ(back.prediction.rho, summary.prediction.rho);
    EXPECT_EQ(back.prediction.m, summary.prediction.m);
    EXPECT_EQ(back.prediction.V, summary.prediction.V);
    EXPECT_EQ(back.prediction.c, summary.prediction.c);
    ASSERT_EQ(back.histograms.size(), summary.histograms.size());
    for (std::size_t r = 0; r < back.histograms.size(); ++r) {
        EXPECT_EQ(back.histograms[r].edges, summary.histograms[r].edges);
        EXPECT_EQ(back.histograms[r].counts, summary.histograms[r].counts);
    }
}

TEST(Harness, EmittedDensityIntegratesToOne) {
    // draws from the predicted law make the emitted density column a
    // midpoint-rule quadrature of the normal pdf; mass within 1%
    auto spec = small_block_run(10000, 3);
    const auto summary = run_ensemble(spec);
    const auto dir = std::filesystem::temp_directory_path() / "spikesv_density";
    export_summary(summary, dir);
    for (Index r = 0; r < 2; ++r) {
        std::ifstream in(dir / ("hist_" + std::to_string(r + 1) + ".csv"));
        std::string line;
        std::getline(in, line);
        EXPECT_EQ(line, "bin_left,bin_right,count,normal_density_at_midpoint");
        double mass = 0.0;
        std::int64_t total = 0;
        while (std::getline(in, line)) {
            double lo = 0, hi = 0, density = 0;
            long long cnt = 0;
            ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lld,%lf", &lo, &hi, &cnt, &density), 4);
            mass += (hi - lo) * density;
            total += cnt;
        }
        EXPECT_EQ(total, 10000);
        EXPECT_NEAR(mass, 1.0, 0.01);
    }
}

TEST(Harness, CollectFlagsControlColumns) {
    auto spec = small_block_run(5, 8);
    spec.collect.z = false;
    spec.collect.normalized_lambda = false;
    const auto summary = run_ensemble(spec);
    const auto dir = std::filesystem::temp_directory_path() / "spikesv_flags";
    export_summary(summary, dir);
    std::ifstream in(dir / "samples.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "replicate,r,lambda,epsilon");
}

TEST(Harness, RejectsSillyRuns) {
    auto spec = small_block_run(0, 1);
    EXPECT_THROW(run_ensemble(spec), validation_error);
}
