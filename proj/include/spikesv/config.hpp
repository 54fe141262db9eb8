#pragma once

// Plain-text model configuration. Sections [model], [noise], [block] and
// [genetics] with key = value lines; '#' and ';' start comments. The exact
// keys are documented in the README.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spikesv/ensembles.hpp"
#include "spikesv/errors.hpp"
#include "spikesv/genetics.hpp"
#include "spikesv/io.hpp"
#include "spikesv/model.hpp"

namespace spikesv {

class ConfigFile {
public:
    static ConfigFile parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot open config file " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        ConfigFile cfg = parse(ss.str());
        cfg.base_dir_ = path.parent_path();
        return cfg;
    }

    static ConfigFile parse(const std::string& text) {
        ConfigFile cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto comment = line.find_first_of("#;");
            if (comment != std::string::npos) line.erase(comment);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw io_error("config line " + std::to_string(lineno) +
                                   ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                cfg.sections_[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw io_error("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (section.empty())
                throw io_error("config line " + std::to_string(lineno) +
                               ": key outside any [section]");
            cfg.sections_[section][key] = value;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key) const {
        if (!has(section, key))
            throw validation_error("config is missing [" + section + "] " + key);
        return sections_.at(section).at(key);
    }

    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const {
        return has(section, key) ? sections_.at(section).at(key) : fallback;
    }

    double get_double(const std::string& section, const std::string& key) const {
        return to_double(section, key, get(section, key));
    }

    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const {
        return has(section, key) ? get_double(section, key) : fallback;
    }

    Index get_index(const std::string& section, const std::string& key) const {
        const double v = get_double(section, key);
        const auto n = static_cast<Index>(v);
        if (static_cast<double>(n) != v)
            throw validation_error("config [" + section + "] " + key + " must be an integer");
        return n;
    }

    std::vector<double> get_list(const std::string& section, const std::string& key) const {
        std::vector<double> out;
        std::stringstream ss(get(section, key));
        std::string cell;
        while (std::getline(ss, cell, ','))
            out.push_back(to_double(section, key, trim(cell)));
        return out;
    }

    const std::filesystem::path& base_dir() const { return base_dir_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static double to_double(const std::string& section, const std::string& key,
                            const std::string& value) {
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw validation_error("config [" + section + "] " + key + ": '" + value +
                                   "' is not a number");
        }
    }

    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::filesystem::path base_dir_;
};

// A model built from a config file together with whatever ensemble data it
// came from (needed for closed-form predictions).
struct ResolvedModel {
    std::string type;  // "rank1" | "block" | "genetics"
    PerturbationModel model;
    std::optional<Rank1Prediction> rank1;
    std::optional<BlockSpec> block;
    std::optional<AllelicModel> allelic;
};

namespace detail {

inline NoiseKind parse_family(const std::string& name) {
    if (name == "gaussian") return NoiseKind::gaussian;
    if (name == "uniform") return NoiseKind::uniform_centered;
    throw validation_error("unknown noise family '" + name + "' (use gaussian or uniform)");
}

inline std::filesystem::path resolve_path(const ConfigFile& cfg, const std::string& value) {
    std::filesystem::path p(value);
    if (p.is_relative() && !cfg.base_dir().empty()) return cfg.base_dir() / p;
    return p;
}

}  // namespace detail

inline ResolvedModel load_model(const ConfigFile& cfg) {
    const std::string type = cfg.get("model", "type");
    if (type == "rank1") {
        const Index rows = cfg.get_index("model", "rows");
        const Index cols = cfg.get_index("model", "cols");
        Vector mu;
        if (cfg.has("model", "mean_csv")) {
            const Matrix m = read_matrix_csv(detail::resolve_path(cfg, cfg.get("model", "mean_csv")));
            if (m.cols() != 1 || m.rows() != cols)
                throw validation_error("mean_csv must hold one column of N means");
            mu = m.col(0);
        } else {
            mu = Vector::Constant(cols, cfg.get_double("model", "mean"));
        }
        const double sigma2 = cfg.get_double_or("noise", "sigma2", 1.0);
        const NoiseKind family = detail::parse_family(cfg.get_or("noise", "family", "gaussian"));
        auto [model, pred] = rank1_model(mu, sigma2, rows, cols, family);
        return ResolvedModel{type, std::move(model), pred, std::nullopt, std::nullopt};
    }
    if (type == "block") {
        BlockSpec spec;
        spec.rows = cfg.get_index("block", "rows");
        spec.cols = cfg.get_index("block", "cols");
        const auto mu = cfg.get_list("block", "mu");
        const auto s2 = cfg.get_list("block", "sigma2");
        if (mu.size() != 4 || s2.size() != 4)
            throw validation_error("[block] mu and sigma2 must each list 4 values");
        std::copy(mu.begin(), mu.end(), spec.mu.begin());
        std::copy(s2.begin(), s2.end(), spec.sigma2.begin());
        spec.entry_family = detail::parse_family(cfg.get_or("block", "family", "uniform"));
        return ResolvedModel{type, block_model(spec), std::nullopt, spec, std::nullopt};
    }
    if (type == "genetics") {
        const auto sizes_list = cfg.get_list("genetics", "sizes");
        Eigen::VectorXi sizes(static_cast<Index>(sizes_list.size()));
        for (Index r = 0; r < sizes.size(); ++r) {
            sizes(r) = static_cast<int>(sizes_list[static_cast<std::size_t>(r)]);
            if (static_cast<double>(sizes(r)) != sizes_list[static_cast<std::size_t>(r)])
                throw validation_error("[genetics] sizes must be integers");
        }
        Matrix p;
        if (cfg.has("genetics", "p_csv")) {
            // on disk: rows = markers, columns = subpopulations
            const Matrix disk = read_matrix_csv(detail::resolve_path(cfg, cfg.get("genetics", "p_csv")));
            if (disk.cols() != sizes.size())
                throw validation_error("p_csv column count must match the subpopulation count");
            p = disk.transpose();
        } else {
            const Index markers = cfg.get_index("genetics", "markers");
            const std::string spectrum = cfg.get_or("genetics", "spectrum", "u-squared");
            const auto p_seed =
                static_cast<std::uint64_t>(cfg.get_double_or("genetics", "p_seed", 0.0));
            if (spectrum == "u-squared") {
                p = sample_allelic_probabilities(sizes.size(), markers, p_seed);
            } else if (spectrum == "uniform") {
                p = sample_allelic_probabilities(sizes.size(), markers, p_seed)
                        .array()
                        .sqrt()
                        .matrix();  // U^2 -> U
            } else {
                throw validation_error("unknown spectrum '" + spectrum +
                                       "' (use u-squared or uniform)");
            }
        }
        std::optional<MomentTensor> pi;
        const std::string pi_mode = cfg.get_or("genetics", "pi", "empirical");
        if (pi_mode == "spectral") {
            Spectrum spec;
            const std::string spectrum = cfg.get_or("genetics", "spectrum", "u-squared");
            spec.marginals.push_back(spectrum == "uniform" ? spectra::uniform()
                                                           : spectra::u_squared());
            pi = pi_moments_spectral(spec, sizes.size());
        } else if (pi_mode != "empirical") {
            throw validation_error("[genetics] pi must be 'empirical' or 'spectral'");
        }
        AllelicModel allelic(sizes, std::move(p), std::move(pi));
        return ResolvedModel{type, genetics_model(allelic), std::nullopt, std::nullopt,
                             std::move(allelic)};
    }
    throw validation_error("unknown model type '" + type + "' (use rank1, block or genetics)");
}

inline ResolvedModel load_model_config(const std::filesystem::path& path) {
    return load_model(ConfigFile::parse_file(path));
}

}  // namespace spikesv
