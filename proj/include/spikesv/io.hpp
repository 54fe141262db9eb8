#pragma once

// File formats: dense matrices as CSV with a "# rows=M cols=N" header,
// predictions and run summaries as JSON, and the per-run export bundle
// (samples.csv, summary.json, hist_<r>.csv).

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spikesv/errors.hpp"
#include "spikesv/genetics.hpp"
#include "spikesv/harness.hpp"
#include "spikesv/model.hpp"
#include "spikesv/predictor.hpp"

namespace spikesv {

using json = nlohmann::ordered_json;

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << "# rows=" << m.rows() << " cols=" << m.cols() << "\n";
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << detail::format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw io_error("writing " + path.string() + " failed");
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    Index rows = 0, cols = 0;
    if (std::sscanf(header.c_str(), "# rows=%td cols=%td", &rows, &cols) != 2 || rows < 1 ||
        cols < 1)
        throw io_error(path.string() + ": expected header '# rows=M cols=N'");
    Matrix m(rows, cols);
    std::string line;
    for (Index i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) throw io_error(path.string() + ": unexpected end of file");
        std::stringstream ss(line);
        std::string cell;
        for (Index j = 0; j < cols; ++j) {
            if (!std::getline(ss, cell, ','))
                throw io_error(path.string() + ": too few columns in row " +
                               std::to_string(i + 1));
            try {
                m(i, j) = std::stod(cell);
            } catch (const std::exception&) {
                throw io_error(path.string() + ": bad number '" + cell + "'");
            }
        }
    }
    return m;
}

// ---- JSON helpers -------------------------------------------------------

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Matrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw io_error("expected a non-empty matrix array");
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (static_cast<Index>(row.size()) != cols) throw io_error("ragged matrix array");
        for (Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

inline Vector vector_from_json(const json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

inline json to_json(const SpectralPrediction& p) {
    json j;
    j["rho"] = vector_to_json(p.rho);
    j["gamma"] = vector_to_json(p.gamma);
    j["V"] = matrix_to_json(p.V);
    j["U"] = matrix_to_json(p.U);
    j["sigma_R"] = matrix_to_json(p.sigma_R);
    j["sigma_S"] = matrix_to_json(p.sigma_S);
    j["m"] = vector_to_json(p.m);
    j["c"] = p.c;
    return j;
}

inline SpectralPrediction spectral_prediction_from_json(const json& j) {
    SpectralPrediction p;
    p.rho = vector_from_json(j.at("rho"));
    p.gamma = vector_from_json(j.at("gamma"));
    p.V = matrix_from_json(j.at("V"));
    p.U = matrix_from_json(j.at("U"));
    p.sigma_R = matrix_from_json(j.at("sigma_R"));
    p.sigma_S = matrix_from_json(j.at("sigma_S"));
    p.m = vector_from_json(j.at("m"));
    p.c = j.at("c").get<double>();
    p.sqrt_rho.resize(p.rho.size());
    for (Index r = 0; r < p.rho.size(); ++r) p.sqrt_rho(r) = std::sqrt(p.rho(r));
    return p;
}

inline json to_json(const GeneticsPrediction& p) {
    json j;
    j["Q"] = matrix_to_json(p.Q);
    j["gamma"] = vector_to_json(p.gamma);
    j["v"] = matrix_to_json(p.v);
    json sig = json::array();
    for (const auto& s : p.sigma_t) sig.push_back(matrix_to_json(s));
    j["sigma_t"] = std::move(sig);
    j["shift_sqrt_c"] = vector_to_json(p.shift_sqrt_c);
    j["shift_inv_sqrt_c"] = vector_to_json(p.shift_inv_sqrt_c);
    j["m"] = vector_to_json(p.m);
    j["cov"] = matrix_to_json(p.cov);
    j["m_tilde"] = vector_to_json(p.m_tilde);
    j["cov_tilde"] = matrix_to_json(p.cov_tilde);
    j["c"] = p.c;
    return j;
}

inline json to_json(const EnsembleSummary& s,
                    const std::optional<GeneticsPrediction>& genetics = std::nullopt) {
    json j;
    j["replicates"] = s.replicates;
    j["rank"] = s.rank;
    j["seed"] = s.seed;
    j["dropped"] = s.dropped;
    j["weyl_checked"] = s.weyl_checked;
    j["weyl_violations"] = s.weyl_violations;
    j["emp_mean"] = vector_to_json(s.emp_mean);
    j["emp_var"] = vector_to_json(s.emp_var);
    j["emp_cov"] = matrix_to_json(s.emp_cov);
    j["ks"] = vector_to_json(s.ks);
    j["eps_median_abs"] = vector_to_json(s.eps_median_abs);
    j["predicted_cov"] = matrix_to_json(s.predicted_cov);
    j["m_tilde"] = vector_to_json(s.m_tilde);
    j["normalized_center"] = vector_to_json(s.normalized_center);
    json hists = json::array();
    for (std::size_t r = 0; r < s.histograms.size(); ++r) {
        json h;
        h["r"] = r + 1;
        h["edges"] = s.histograms[r].edges;
        h["counts"] = s.histograms[r].counts;
        hists.push_back(std::move(h));
    }
    j["histograms"] = std::move(hists);
    j["prediction"] = to_json(s.prediction);
    if (genetics) j["genetics"] = to_json(*genetics);
    return j;
}

// Parses the fields written by to_json back into a summary (sample columns
// live in samples.csv, not in the JSON document).
inline EnsembleSummary summary_from_json(const json& j) {
    EnsembleSummary s;
    s.replicates = j.at("replicates").get<Index>();
    s.rank = j.at("rank").get<Index>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.dropped = j.at("dropped").get<Index>();
    s.weyl_checked = j.at("weyl_checked").get<Index>();
    s.weyl_violations = j.at("weyl_violations").get<Index>();
    s.emp_mean = vector_from_json(j.at("emp_mean"));
    s.emp_var = vector_from_json(j.at("emp_var"));
    s.emp_cov = matrix_from_json(j.at("emp_cov"));
    s.ks = vector_from_json(j.at("ks"));
    s.eps_median_abs = vector_from_json(j.at("eps_median_abs"));
    s.predicted_cov = matrix_from_json(j.at("predicted_cov"));
    s.m_tilde = vector_from_json(j.at("m_tilde"));
    s.normalized_center = vector_from_json(j.at("normalized_center"));
    for (const auto& h : j.at("histograms")) {
        Histogram hist;
        hist.edges = h.at("edges").get<std::vector<double>>();
        hist.counts = h.at("counts").get<std::vector<std::int64_t>>();
        s.histograms.push_back(std::move(hist));
    }
    s.prediction = spectral_prediction_from_json(j.at("prediction"));
    return s;
}

// ---- run export ---------------------------------------------------------

inline void export_summary(const EnsembleSummary& s, const std::filesystem::path& dir,
                           const std::optional<GeneticsPrediction>& genetics = std::nullopt) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());

    {
        std::ofstream out(dir / "samples.csv");
        if (!out) throw io_error("cannot open samples.csv for writing");
        out << "replicate,r,lambda";
        if (s.collect.z) out << ",Z";
        if (s.collect.epsilon) out << ",epsilon";
        if (s.collect.normalized_lambda) out << ",Lambda";
        out << '\n';
        for (Index t = 0; t < s.lambda.rows(); ++t) {
            for (Index r = 0; r < s.rank; ++r) {
                out << t << ',' << r + 1 << ',' << detail::format_double(s.lambda(t, r));
                if (s.collect.z) out << ',' << detail::format_double(s.Z(t, r));
                if (s.collect.epsilon) out << ',' << detail::format_double(s.epsilon(t, r));
                if (s.collect.normalized_lambda)
                    out << ',' << detail::format_double(s.Lambda(t, r));
                out << '\n';
            }
        }
        if (!out) throw io_error("writing samples.csv failed");
    }

    {
        std::ofstream out(dir / "summary.json");
        if (!out) throw io_error("cannot open summary.json for writing");
        out << to_json(s, genetics).dump(2) << '\n';
        if (!out) throw io_error("writing summary.json failed");
    }

    for (Index r = 0; r < s.rank; ++r) {
        std::ofstream out(dir / ("hist_" + std::to_string(r + 1) + ".csv"));
        if (!out) throw io_error("cannot open histogram csv for writing");
        out << "bin_left,bin_right,count,normal_density_at_midpoint\n";
        const Histogram& h = s.histograms[static_cast<std::size_t>(r)];
        const double mu = s.prediction.sqrt_rho(r) + s.prediction.m(r);
        const double var = s.predicted_cov(r, r);
        for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
            const double mid = 0.5 * (h.edges[b] + h.edges[b + 1]);
            const double density =
                var > 0.0 ? std::exp(-0.5 * (mid - mu) * (mid - mu) / var) /
                                std::sqrt(6.283185307179586476925287 * var)
                          : 0.0;
            out << detail::format_double(h.edges[b]) << ',' << detail::format_double(h.edges[b + 1])
                << ',' << h.counts[b] << ',' << detail::format_double(density) << '\n';
        }
        if (!out) throw io_error("writing histogram csv failed");
    }
}

}  // namespace spikesv
