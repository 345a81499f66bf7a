#pragma once

// Command pipeline behind the `qwss` tool. Every command computes all of its
// outputs in memory first and only then writes them (each atomically), so a
// failing command leaves no partial files behind.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qwss/filters.hpp"
#include "qwss/io.hpp"
#include "qwss/quantum_model.hpp"
#include "qwss/spectral_measure.hpp"
#include "qwss/synthesis_estimation.hpp"

namespace qwss {

struct PipelineConfig {
    std::string command;
    std::string variant;  ///< `demo` target, e.g. "ou"
    std::string in;
    std::string out;
    std::string filter;
    std::string covariance_out;
    std::vector<double> times;

    std::optional<double> dt;
    std::optional<std::uint64_t> n;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> bins;
    std::optional<double> band;
    std::optional<long> lags;
    std::optional<double> tol;
    std::optional<std::uint64_t> segment;
    std::optional<double> overlap;
    std::optional<std::string> taper;
    std::optional<std::string> format;

    /// `demo ou` parameters; scalars from flags, matrices from a config file.
    std::optional<Matrix> gamma;
    std::optional<Matrix> s;
    std::optional<Matrix> a;
};

inline const std::vector<std::string>& pipeline_commands() {
    static const std::vector<std::string> commands = {"bochner", "inverse", "filter", "checkpsd", "kolmogorov",
                                                      "model",   "synth",   "estimate", "demo"};
    return commands;
}

namespace detail {

inline Matrix scalar_or_matrix(const io::json& j, const std::string& where) {
    if (j.is_number()) return Matrix::Constant(1, 1, Complex(io::number_from_json(j, where), 0.0));
    return io::matrix_from_json(j, where);
}

template <class T>
T unsigned_from_json(const io::json& j, const std::string& where) {
    if (!j.is_number_integer() || j.get<long long>() < 0) throw Error(errc::kSchema, "expected a non-negative integer", where);
    return static_cast<T>(j.get<unsigned long long>());
}

inline std::string string_from_json(const io::json& j, const std::string& where) {
    if (!j.is_string()) throw Error(errc::kSchema, "expected a string", where);
    return j.get<std::string>();
}

}  // namespace detail

/// Overlays a JSON config onto `cfg`; config values win over flags.
inline void apply_config_json(PipelineConfig& cfg, const io::json& j) {
    io::reject_unknown_keys(j,
                            {"command", "variant", "in", "out", "filter", "covariance_out", "times", "dt", "n", "seed", "bins",
                             "band", "lags", "tol", "segment", "overlap", "taper", "format", "gamma", "s", "a"},
                            "");
    for (const auto& item : j.items()) {
        const std::string& k = item.key();
        const io::json& v = item.value();
        if (k == "command") cfg.command = detail::string_from_json(v, k);
        else if (k == "variant") cfg.variant = detail::string_from_json(v, k);
        else if (k == "in") cfg.in = detail::string_from_json(v, k);
        else if (k == "out") cfg.out = detail::string_from_json(v, k);
        else if (k == "filter") cfg.filter = detail::string_from_json(v, k);
        else if (k == "covariance_out") cfg.covariance_out = detail::string_from_json(v, k);
        else if (k == "times") cfg.times = io::reals_from_json(v, k);
        else if (k == "dt") cfg.dt = io::number_from_json(v, k);
        else if (k == "n") cfg.n = detail::unsigned_from_json<std::uint64_t>(v, k);
        else if (k == "seed") cfg.seed = detail::unsigned_from_json<std::uint64_t>(v, k);
        else if (k == "bins") cfg.bins = detail::unsigned_from_json<std::uint64_t>(v, k);
        else if (k == "band") cfg.band = io::number_from_json(v, k);
        else if (k == "lags") cfg.lags = detail::unsigned_from_json<long>(v, k);
        else if (k == "tol") cfg.tol = io::number_from_json(v, k);
        else if (k == "segment") cfg.segment = detail::unsigned_from_json<std::uint64_t>(v, k);
        else if (k == "overlap") cfg.overlap = io::number_from_json(v, k);
        else if (k == "taper") cfg.taper = detail::string_from_json(v, k);
        else if (k == "format") cfg.format = detail::string_from_json(v, k);
        else if (k == "gamma") cfg.gamma = detail::scalar_or_matrix(v, k);
        else if (k == "s") cfg.s = detail::scalar_or_matrix(v, k);
        else if (k == "a") cfg.a = detail::scalar_or_matrix(v, k);
    }
}

namespace detail {

inline void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(errc::kInvalidArgument, std::string(name) + " must be positive", name);
}

inline void require_path(const std::string& p, const char* name) {
    if (p.empty()) throw Error(errc::kInvalidArgument, std::string("missing --") + name, name);
}

inline Taper parse_taper(const std::string& name) {
    if (name == "bartlett") return Taper::Bartlett;
    if (name == "hann") return Taper::Hann;
    if (name == "rectangular") return Taper::Rectangular;
    throw Error(errc::kInvalidArgument, "unknown taper '" + name + "' (bartlett, hann, rectangular)", "taper");
}

inline std::string csv_with_columns(const std::vector<double>& x, const char* x_name,
                                    const std::vector<std::pair<std::string, const std::vector<Matrix>*>>& series) {
    std::string out = x_name;
    for (const auto& [prefix, data] : series) {
        const Eigen::Index d = data->empty() ? 0 : data->front().rows();
        for (const auto& h : io::matrix_entry_headers(d)) out += "," + (prefix.empty() ? h : prefix + "_" + h);
    }
    out += '\n';
    for (std::size_t r = 0; r < x.size(); ++r) {
        out += io::format_double(x[r]);
        for (const auto& entry : series) io::append_matrix_row(out, (*entry.second)[r]);
        out += '\n';
    }
    return out;
}

using Outputs = std::vector<std::pair<std::filesystem::path, std::string>>;

inline void commit(const Outputs& outputs) {
    for (const auto& [path, content] : outputs) io::write_file_atomic(path, content);
}

}  // namespace detail

/// Result of a pipeline run: exit status plus the JSON document printed on stdout.
struct RunResult {
    int status = 0;
    io::json report;
};

inline RunResult run_unchecked(const PipelineConfig& cfg) {
    using detail::require_path;
    using detail::require_positive;
    detail::Outputs outputs;
    RunResult result;
    const std::string& cmd = cfg.command;

    if (cmd == "bochner") {
        require_path(cfg.in, "in");
        require_path(cfg.out, "out");
        const double dt = cfg.dt.value_or(0.01);
        require_positive(dt, "dt");
        const long lags = cfg.lags.value_or(256);
        const SpectralMeasure mu = io::deserialize_measure(io::read_file(cfg.in));
        outputs.emplace_back(cfg.out, io::serialize_covariance_csv(covariance_from_spectrum(mu, dt, lags)));
        result.report = {{"status", "ok"}, {"lags", lags}, {"dt", dt}};
    } else if (cmd == "inverse") {
        require_path(cfg.in, "in");
        require_path(cfg.out, "out");
        const CovarianceTable c = io::deserialize_covariance_csv(io::read_file(cfg.in));
        const std::size_t bins = cfg.bins.value_or(std::max<std::uint64_t>(256, c.values.size()));
        const SpectralMeasure mu = spectrum_from_covariance(c, bins, detail::parse_taper(cfg.taper.value_or("bartlett")));
        outputs.emplace_back(cfg.out, io::serialize_measure(mu));
        result.report = {{"status", "ok"}, {"bins", bins}};
    } else if (cmd == "filter") {
        require_path(cfg.in, "in");
        require_path(cfg.filter, "filter");
        require_path(cfg.out, "out");
        const SpectralMeasure mu = io::deserialize_measure(io::read_file(cfg.in));
        const FilterSpec f = io::filter_from_json(io::parse_json(io::read_file(cfg.filter)));
        outputs.emplace_back(cfg.out, io::serialize_measure(apply_filter(mu, f)));
        result.report = {{"status", "ok"}};
    } else if (cmd == "checkpsd") {
        require_path(cfg.in, "in");
        if (cfg.times.empty()) throw Error(errc::kInvalidArgument, "missing --times", "times");
        const double tol = cfg.tol.value_or(kTolPsd);
        require_positive(tol, "tol");
        const CovarianceTable c = io::deserialize_covariance_csv(io::read_file(cfg.in));
        const KernelVerdict v = check_psd_kernel(c, cfg.times, tol);
        result.report = {{"status", v.pass ? "pass" : "fail"}, {"min_eigenvalue", v.min_eigenvalue}, {"points", cfg.times.size()}, {"tol", tol}};
        result.status = v.pass ? 0 : 1;
        if (!cfg.out.empty()) outputs.emplace_back(cfg.out, io::dump(result.report));
    } else if (cmd == "kolmogorov") {
        require_path(cfg.in, "in");
        require_path(cfg.out, "out");
        const auto f = kolmogorov_decompose(io::kernel_from_json(io::parse_json(io::read_file(cfg.in))));
        outputs.emplace_back(cfg.out, io::dump(io::factorization_to_json(f)));
        result.report = {{"status", "ok"}, {"rank", f.rank}};
    } else if (cmd == "model") {
        require_path(cfg.in, "in");
        if (cfg.out.empty() && cfg.covariance_out.empty()) throw Error(errc::kInvalidArgument, "missing --out or --covariance-out", "out");
        const QuantumModel model = io::model_from_json(io::parse_json(io::read_file(cfg.in)));
        const SpectralMeasure mu = model_spectral_measure(model);
        if (!cfg.out.empty()) outputs.emplace_back(cfg.out, io::serialize_measure(mu));
        if (!cfg.covariance_out.empty()) {
            const double dt = cfg.dt.value_or(0.01);
            require_positive(dt, "dt");
            CovarianceTable c{model.dim_h(), dt, {}};
            for (long m = 0; m <= cfg.lags.value_or(256); ++m) c.values.push_back(model_covariance(model, static_cast<double>(m) * dt));
            outputs.emplace_back(cfg.covariance_out, io::serialize_covariance_csv(c));
        }
        result.report = {{"status", "ok"}, {"modes", model.modes().size()}};
    } else if (cmd == "synth") {
        require_path(cfg.in, "in");
        require_path(cfg.out, "out");
        const double dt = cfg.dt.value_or(0.01);
        require_positive(dt, "dt");
        const SpectralMeasure mu = io::deserialize_measure(io::read_file(cfg.in));
        const Trajectory x = synthesize(mu, dt, cfg.n.value_or(65536), cfg.seed.value_or(0));
        const std::string fmt = cfg.format.value_or(std::filesystem::path(cfg.out).extension() == ".csv" ? "csv" : "bin");
        if (fmt != "csv" && fmt != "bin") throw Error(errc::kInvalidArgument, "format must be csv or bin", "format");
        outputs.emplace_back(cfg.out, fmt == "csv" ? io::serialize_trajectory_csv(x) : io::serialize_trajectory_binary(x));
        result.report = {{"status", "ok"}, {"samples", x.size()}, {"seed", x.seed}};
    } else if (cmd == "estimate") {
        require_path(cfg.in, "in");
        if (cfg.out.empty() && cfg.covariance_out.empty()) throw Error(errc::kInvalidArgument, "missing --out or --covariance-out", "out");
        const Trajectory x = io::read_trajectory(cfg.in);
        if (!cfg.out.empty()) {
            const double overlap = cfg.overlap.value_or(0.5);
            const SpectralMeasure mu =
                welch_estimate(x, cfg.segment.value_or(256), overlap, detail::parse_taper(cfg.taper.value_or("hann")));
            outputs.emplace_back(cfg.out, io::serialize_measure(mu));
        }
        if (!cfg.covariance_out.empty()) outputs.emplace_back(cfg.covariance_out, io::serialize_covariance_csv(lag_covariance(x, cfg.lags.value_or(256))));
        result.report = {{"status", "ok"}, {"samples", x.size()}};
    } else if (cmd == "demo") {
        if (cfg.variant != "ou") throw Error(errc::kInvalidArgument, "unknown demo '" + cfg.variant + "' (available: ou)", "variant");
        require_path(cfg.out, "out");
        const Matrix gamma = cfg.gamma.value_or(Matrix::Ones(1, 1));
        const Eigen::Index d = gamma.rows();
        const Matrix s = cfg.s.value_or(Matrix::Identity(d, d));
        const Matrix a = cfg.a.value_or(Matrix::Identity(d, d));
        const double band = cfg.band.value_or(50.0);
        const double dt = cfg.dt.value_or(0.005);
        const std::size_t bins = cfg.bins.value_or(4000);
        const long lags = cfg.lags.value_or(1000);
        require_positive(band, "band");
        require_positive(dt, "dt");

        const FilterSpec filter = FilterSpec::exp_operator(gamma, a);
        const SpectralMeasure output = apply_filter(white_noise(s, band, bins), filter);
        const CovarianceTable spectral = covariance_from_spectrum(output, dt, lags);
        std::vector<double> taus;
        std::vector<Matrix> closed;
        double max_rel = 0.0;
        const double c0_norm = ou_covariance(gamma, s, a, 0.0).norm();
        for (long m = 0; m <= lags; ++m) {
            taus.push_back(static_cast<double>(m) * dt);
            closed.push_back(ou_covariance(gamma, s, a, taus.back()));
            max_rel = std::max(max_rel, (spectral.values[static_cast<std::size_t>(m)] - closed.back()).norm() / c0_norm);
        }

        const auto& grid = *output.density();
        std::vector<double> nus;
        std::vector<Matrix> analytic;
        for (std::size_t i = 0; i < grid.bins(); ++i) {
            nus.push_back(grid.midpoint(i));
            const Matrix r = resolvent(gamma, nus.back()) * a;
            analytic.push_back(r.adjoint() * s * r);
        }

        const Trajectory x = synthesize(output, dt, cfg.n.value_or(65536), cfg.seed.value_or(1));
        const SpectralMeasure est = welch_estimate(x, cfg.segment.value_or(1024), cfg.overlap.value_or(0.5), Taper::Hann);
        std::vector<double> est_nus;
        for (std::size_t i = 0; i < est.density()->bins(); ++i) est_nus.push_back(est.density()->midpoint(i));
        const Matrix c0_sample = lag_covariance(x, 0).values[0];

        namespace fs = std::filesystem;
        const fs::path dir(cfg.out);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw Error(errc::kIo, "cannot create output directory '" + cfg.out + "'", cfg.out);

        io::json summary = {
            {"c0_spectral", io::matrix_to_json(spectral.values[0])},
            {"c0_closed_form", io::matrix_to_json(closed[0])},
            {"c0_sample", io::matrix_to_json(c0_sample)},
            {"max_relative_covariance_error", max_rel},
            {"band", band},
            {"dt", dt},
            {"samples", x.size()},
            {"seed", x.seed},
        };
        outputs.emplace_back(dir / "measure.json", io::serialize_measure(output));
        outputs.emplace_back(dir / "spectrum.csv", detail::csv_with_columns(nus, "nu", {{"", &grid.values}, {"analytic", &analytic}}));
        outputs.emplace_back(dir / "covariance.csv", detail::csv_with_columns(taus, "tau", {{"", &spectral.values}, {"closed_form", &closed}}));
        outputs.emplace_back(dir / "estimate.csv", detail::csv_with_columns(est_nus, "nu", {{"", &est.density()->values}}));
        outputs.emplace_back(dir / "trajectory.bin", io::serialize_trajectory_binary(x));
        outputs.emplace_back(dir / "summary.json", io::dump(summary));
        result.report = summary;
        result.report["status"] = "ok";
    } else {
        throw Error(errc::kInvalidArgument, "unknown command '" + cmd + "'", "command");
    }

    detail::commit(outputs);
    return result;
}

/// Runs one command. Exit status 0 on success, 1 for a failed `checkpsd`
/// verdict, 2 for any error (reported as {"error": {code, message, location}}).
inline RunResult run(const PipelineConfig& cfg) {
    try {
        return run_unchecked(cfg);
    } catch (const Error& e) {
        return {2, io::error_to_json(e)};
    } catch (const std::exception& e) {
        return {2, io::error_to_json(Error("internal", e.what()))};
    }
}

}  // namespace qwss
