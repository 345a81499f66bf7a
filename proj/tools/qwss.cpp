// qwss: command-line front end for operator-valued spectral analysis.
//
//   qwss bochner    --in measure.json --dt 0.01 --lags 256 --out cov.csv
//   qwss inverse    --in cov.csv --bins 512 --out measure.json
//   qwss filter     --in measure.json --filter filter.json --out filtered.json
//   qwss checkpsd   --in cov.csv --times 0,0.5,1.5
//   qwss kolmogorov --in kernel.json --out factor.json
//   qwss model      --in model.json --out measure.json --covariance-out cov.csv
//   qwss synth      --in measure.json --dt 0.01 --n 65536 --seed 7 --out x.bin
//   qwss estimate   --in x.bin --segment 256 --out welch.json
//   qwss demo ou    --gamma 1 --s 1 --band 50 --out demo_dir
//
// Any command accepts --config file.json whose keys override the flags.

#include <iostream>

#include "CLI11.hpp"

#include "qwss/pipeline.hpp"

namespace {

template <class T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
    app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

void optional_scalar_matrix(CLI::App* app, const std::string& name, std::optional<qwss::Matrix>& target, const std::string& help) {
    app->add_option_function<double>(
        name, [&target](double v) { target = qwss::Matrix::Constant(1, 1, qwss::Complex(v, 0.0)); }, help);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Operator-valued spectral measures, Bochner transforms and linear quantum filters"};
    app.require_subcommand(1);

    qwss::PipelineConfig cfg;
    std::string config_path;

    for (const auto& name : qwss::pipeline_commands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON config; its keys override flags");
        sub->add_option("--in", cfg.in, "input file");
        sub->add_option("--out", cfg.out, "output file (directory for demo)");
        optional_flag(sub, "--dt", cfg.dt, "sampling / lag step");
        optional_flag(sub, "--n", cfg.n, "trajectory length (power of two)");
        optional_flag(sub, "--seed", cfg.seed, "random seed");
        optional_flag(sub, "--bins", cfg.bins, "frequency bins");
        optional_flag(sub, "--band", cfg.band, "white-noise half band W (cycles)");
        optional_flag(sub, "--lags", cfg.lags, "largest lag index");
        optional_flag(sub, "--tol", cfg.tol, "eigenvalue tolerance");
        if (name == "filter") sub->add_option("--filter", cfg.filter, "filter JSON");
        if (name == "checkpsd") sub->add_option("--times", cfg.times, "sample times")->delimiter(',');
        if (name == "model" || name == "estimate") sub->add_option("--covariance-out", cfg.covariance_out, "covariance CSV output");
        if (name == "synth") optional_flag(sub, "--format", cfg.format, "csv or bin");
        if (name == "estimate" || name == "demo") {
            optional_flag(sub, "--segment", cfg.segment, "Welch segment length");
            optional_flag(sub, "--overlap", cfg.overlap, "Welch segment overlap in [0, 0.9]");
        }
        if (name == "estimate" || name == "inverse") optional_flag(sub, "--taper", cfg.taper, "bartlett, hann or rectangular");
        if (name == "demo") {
            sub->add_option("variant", cfg.variant, "demo name (ou)")->required();
            optional_scalar_matrix(sub, "--gamma", cfg.gamma, "damping rate");
            optional_scalar_matrix(sub, "--s", cfg.s, "white-noise level");
            optional_scalar_matrix(sub, "--a", cfg.a, "filter gain");
        }
        sub->callback([&cfg, name] { cfg.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    qwss::RunResult result;
    try {
        if (!config_path.empty()) qwss::apply_config_json(cfg, qwss::io::parse_json(qwss::io::read_file(config_path)));
        result = qwss::run(cfg);
    } catch (const qwss::Error& e) {
        result = {2, qwss::io::error_to_json(e)};
    }
    (result.status == 2 ? std::cerr : std::cout) << result.report.dump() << '\n';
    return result.status;
}
