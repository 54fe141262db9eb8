// Command line front end: closed-form predictions, seeded Monte Carlo
// simulation, the determinant criterion oracle, and the genetics pipeline.
//
// Exit codes: 0 success, 2 validation failure, 3 numerical failure,
// 4 I/O failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "spikesv/spikesv.hpp"

namespace {

using namespace spikesv;

json prediction_document(const ResolvedModel& resolved) {
    const auto pred = make_prediction(resolved.model);
    json doc = to_json(pred);
    doc["predicted_cov"] = matrix_to_json(fluctuation_covariance(resolved.model, pred));
    if (resolved.rank1) {
        json r;
        r["gamma"] = resolved.rank1->gamma;
        r["sqrt_rho"] = resolved.rank1->sqrt_rho;
        r["shift_mean"] = resolved.rank1->shift_mean;
        r["variance"] = resolved.rank1->variance;
        doc["rank1"] = std::move(r);
    }
    if (resolved.block) {
        const auto bp = block_predictions(*resolved.block);
        json b;
        b["gamma"] = vector_to_json(bp.gamma);
        b["v"] = matrix_to_json(bp.v);
        b["m"] = vector_to_json(bp.m);
        b["cov"] = matrix_to_json(bp.cov);
        doc["block"] = std::move(b);
    }
    if (resolved.allelic) doc["genetics"] = to_json(genetics_predictions(*resolved.allelic));
    return doc;
}

void write_json(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw io_error("writing " + path.string() + " failed");
}

int run_predict(const std::string& config, const std::string& out_path) {
    const auto resolved = load_model_config(config);
    validate_model(resolved.model, 1e-8);
    write_json(prediction_document(resolved), out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int run_simulate(const std::string& config, Index replicates, std::uint64_t seed, int threads,
                 const std::string& out_dir, bool zero_noise, double weyl_fraction) {
    const auto resolved = load_model_config(config);
    const auto report = validate_model(resolved.model, 1e-8);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";

    RunSpec spec{resolved.model, replicates, seed, threads};
    spec.zero_noise = zero_noise;
    spec.weyl_fraction = weyl_fraction;
    const auto summary = run_ensemble(spec);

    std::optional<GeneticsPrediction> genetics;
    if (resolved.allelic) genetics = genetics_predictions(*resolved.allelic);
    export_summary(summary, out_dir, genetics);

    std::cout << "replicates " << summary.replicates << " (dropped " << summary.dropped << ")\n";
    for (Index r = 0; r < summary.rank; ++r) {
        std::printf(
            "r=%td  center %.6f  emp_mean %.6f  emp_var %.6f  pred_var %.6f  KS %.4f  "
            "median|eps| %.5f\n",
            r + 1, summary.prediction.sqrt_rho(r) + summary.prediction.m(r), summary.emp_mean(r),
            summary.emp_var(r), summary.predicted_cov(r, r), summary.ks(r),
            summary.eps_median_abs(r));
    }
    if (summary.weyl_checked > 0)
        std::cout << "weyl checks: " << summary.weyl_checked << " checked, "
                  << summary.weyl_violations << " violations\n";
    std::cout << "wrote " << out_dir << "\n";
    return 0;
}

int run_criterion_check(const std::string& config, std::uint64_t seed) {
    const auto resolved = load_model_config(config);
    const auto& model = resolved.model;
    const Index k = model.rank();
    const auto noise = sample_noise(model, seed);
    const Matrix d = assemble_observation(model, noise);
    const Vector lambda = top_singular_values(d, k).singular_values;

    std::printf("%-3s %-14s %-13s %-13s %-13s %s\n", "r", "lambda_r", "|det(root)|", "|det(+5%)|",
                "|det(-5%)|", "pass");
    bool all_pass = true;
    Index checked = 0;
    for (Index r = 0; r < k; ++r) {
        auto det_at = [&](double lam) {
            return std::abs(criterion_determinant(
                criterion_matrices(noise.values, model.left_factors(), model.right_factors(), lam)));
        };
        try {
            const double root = det_at(lambda(r));
            const double above = det_at(lambda(r) * 1.05);
            const double below = det_at(lambda(r) * 0.95);
            const bool pass = root <= 1e-6 * std::min(above, below);
            all_pass = all_pass && pass;
            ++checked;
            std::printf("%-3td %-14.6f %-13.4e %-13.4e %-13.4e %s\n", r + 1, lambda(r), root,
                        above, below, pass ? "yes" : "NO");
        } catch (const validation_error&) {
            std::printf("%-3td %-14.6f %-13s %-13s %-13s %s\n", r + 1, lambda(r), "-", "-", "-",
                        "skipped (||C||^2 too close to lambda^2)");
        }
    }
    if (checked == 0)
        throw numerical_error("no singular value satisfied the criterion preconditions");
    if (!all_pass) throw numerical_error("criterion determinant failed to vanish at a root");
    return 0;
}

int run_genetics(const std::string& p_csv, const std::string& spectrum, std::uint64_t p_seed,
                 const std::vector<Index>& sizes, Index markers, const std::string& pi_mode,
                 const std::string& out_path, Index replicates, std::uint64_t seed, int threads,
                 const std::string& sim_out) {
    Eigen::VectorXi sz(static_cast<Index>(sizes.size()));
    for (Index r = 0; r < sz.size(); ++r)
        sz(r) = static_cast<int>(sizes[static_cast<std::size_t>(r)]);

    Matrix p;
    if (!p_csv.empty()) {
        const Matrix disk = read_matrix_csv(p_csv);
        if (disk.cols() != sz.size())
            throw validation_error("p_csv column count must match --sizes");
        p = disk.transpose();
    } else {
        if (markers < 1) throw validation_error("--markers is required when sampling frequencies");
        if (spectrum == "u-squared")
            p = sample_allelic_probabilities(sz.size(), markers, p_seed);
        else if (spectrum == "uniform")
            p = sample_allelic_probabilities(sz.size(), markers, p_seed).array().sqrt().matrix();
        else
            throw validation_error("unknown spectrum '" + spectrum + "'");
    }

    std::optional<MomentTensor> pi;
    if (pi_mode == "spectral") {
        Spectrum sp;
        sp.marginals.push_back(spectrum == "uniform" ? spectra::uniform() : spectra::u_squared());
        pi = pi_moments_spectral(sp, sz.size());
    } else if (pi_mode != "empirical") {
        throw validation_error("--pi must be empirical or spectral");
    }

    const AllelicModel allelic(sz, std::move(p), std::move(pi));
    const auto model = genetics_model(allelic);
    const auto report = validate_model(model, 1e-8);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";

    const auto gp = genetics_predictions(allelic);
    write_json(to_json(gp), out_path);
    std::cout << "wrote " << out_path << "\n";
    for (Index r = 0; r < sz.size(); ++r)
        std::printf("r=%td  gamma %.6f  m %.6f  var %.6f\n", r + 1, gp.gamma(r), gp.m(r),
                    gp.cov(r, r));

    if (replicates > 0) {
        RunSpec spec{model, replicates, seed, threads};
        const auto summary = run_ensemble(spec);
        export_summary(summary, sim_out, gp);
        std::cout << "simulated " << summary.replicates << " replicates -> " << sim_out << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spiked low-rank singular value toolkit"};
    app.require_subcommand(1);

    std::string config, out_path = "pred.json", out_dir = "run";
    Index replicates = 1000;
    std::uint64_t seed = 0;
    int threads = 1;
    bool zero_noise = false;
    double weyl_fraction = 0.01;

    auto* predict = app.add_subcommand("predict", "theoretical quantities only");
    predict->add_option("--config", config, "model configuration file")->required();
    predict->add_option("--out", out_path, "output JSON path");

    auto* simulate = app.add_subcommand("simulate", "seeded Monte Carlo run");
    simulate->add_option("--config", config, "model configuration file")->required();
    simulate->add_option("--replicates", replicates, "replicate count");
    simulate->add_option("--seed", seed, "master seed");
    simulate->add_option("--threads", threads, "worker threads");
    simulate->add_option("--out", out_dir, "output directory");
    simulate->add_flag("--zero-noise", zero_noise, "force C = 0");
    simulate->add_option("--weyl-fraction", weyl_fraction,
                         "fraction of replicates checked against the Weyl bound");

    auto* crit =
        app.add_subcommand("criterion-check", "determinant criterion table (small sizes only)");
    crit->add_option("--config", config, "model configuration file")->required();
    crit->add_option("--seed", seed, "noise seed");

    std::string p_csv, spectrum = "u-squared", pi_mode = "empirical", sim_out = "run";
    std::vector<Index> sizes;
    Index markers = 0;
    std::uint64_t p_seed = 0;
    Index gen_replicates = 0;
    auto* gen = app.add_subcommand("genetics", "subpopulation marker-matrix pipeline");
    gen->add_option("--p-csv", p_csv, "allele frequency CSV (rows = markers)");
    gen->add_option("--spectrum", spectrum, "u-squared | uniform");
    gen->add_option("--p-seed", p_seed, "seed for the frequency draw");
    gen->add_option("--sizes", sizes, "subpopulation sizes")->required()->delimiter(',');
    gen->add_option("--markers", markers, "marker count (when sampling frequencies)");
    gen->add_option("--pi", pi_mode, "empirical | spectral moments");
    gen->add_option("--out", out_path, "prediction JSON path");
    gen->add_option("--replicates", gen_replicates, "simulate this many replicates (0 = skip)");
    gen->add_option("--seed", seed, "simulation master seed");
    gen->add_option("--threads", threads, "worker threads");
    gen->add_option("--sim-out", sim_out, "simulation output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (predict->parsed()) return run_predict(config, out_path);
        if (simulate->parsed())
            return run_simulate(config, replicates, seed, threads, out_dir, zero_noise,
                                weyl_fraction);
        if (crit->parsed()) return run_criterion_check(config, seed);
        if (gen->parsed())
            return run_genetics(p_csv, spectrum, p_seed, sizes, markers, pi_mode, out_path,
                                gen_replicates, seed, threads, sim_out);
    } catch (const spikesv::validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const spikesv::numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const spikesv::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
