// Command-line front end: run experiments from a config file, generate
// synthetic datasets, estimate problem constants, or run the verification
// suite.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ssn/ssn.hpp"
#include "ssn/verify.hpp"

namespace {

int cmd_run(const std::string& config_path, int threads, bool quiet) {
    ssn::ExperimentConfig cfg = ssn::load_experiment_config(config_path);
    std::ostream* progress = quiet ? nullptr : &std::cerr;
    ssn::ExperimentResult result = ssn::run_experiment(cfg, threads, progress);
    if (cfg.output.empty()) ssn::write_trace_csv(result, std::cout);
    if (result.any_failed()) {
        for (const auto& run : result.runs)
            if (run.failed) std::cerr << "seed " << run.seed << " failed: " << run.error << '\n';
        return 1;
    }
    if (!quiet && !cfg.output.empty()) std::cerr << "trace written to " << cfg.output << '\n';
    return 0;
}

int cmd_generate(int n, int d, double margin, std::uint64_t seed, const std::string& out_path) {
    const ssn::MarginSpec spec{margin, n, d, seed};
    const ssn::GeneratedDataset generated = ssn::generate_margin_dataset(spec);
    std::ofstream out(out_path);
    if (!out) {
        std::cerr << "error: cannot open output file '" << out_path << "'\n";
        return 1;
    }
    ssn::serialize_libsvm(generated.data, out, &spec, &generated.separator);
    return 0;
}

int cmd_estimate(const std::string& data_path, double rbf_bandwidth, const std::string& loss_name,
                 double tau, int batch_size, int probes, std::uint64_t seed) {
    std::ifstream in(data_path);
    if (!in) {
        std::cerr << "error: cannot open dataset '" << data_path << "'\n";
        return 1;
    }
    ssn::Dataset data = ssn::parse_libsvm(in);
    if (rbf_bandwidth > 0.0) data = ssn::rbf_kernel_map(data, data, rbf_bandwidth);

    ssn::LossModel model;
    if (loss_name == "logistic")
        model.kind = ssn::LossKind::logistic;
    else if (loss_name == "squared_hinge")
        model.kind = ssn::LossKind::squared_hinge;
    else {
        std::cerr << "error: loss must be 'logistic' or 'squared_hinge'\n";
        return 1;
    }

    ssn::Rng rng(seed);
    std::vector<ssn::Vector> probe_points;
    probe_points.push_back(ssn::Vector::Zero(data.d()));
    for (int p = 1; p < probes; ++p) {
        ssn::Vector w(data.d());
        for (int j = 0; j < data.d(); ++j) w[j] = 0.5 * rng.next_normal();
        probe_points.push_back(std::move(w));
    }

    int skipped = 0;
    const double rho = ssn::estimate_sgc_rho(model, data, probe_points, &skipped);
    if (skipped > 0)
        std::cerr << "warning: " << skipped << " stationary probe point(s) skipped\n";
    const auto constants = ssn::estimate_constants(model, data, std::min(batch_size, data.n()),
                                                   probe_points, 4, rng);
    std::cout << "n = " << data.n() << ", d = " << data.d() << '\n';
    std::cout << "rho_hat = " << rho << '\n';
    std::cout << "subsampled Hessian eigenvalues (batch " << std::min(batch_size, data.n())
              << "): [" << constants.mu_s << ", " << constants.L_s << "]\n";
    std::cout << "full Hessian max eigenvalue: " << constants.L << '\n';
    std::cout << "regularized range with tau = " << tau << ": [" << constants.mu_s + tau << ", "
              << constants.L_s + tau << "]\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic second-order optimization benchmark"};
    app.require_subcommand(1);

    std::string config_path;
    int threads = 1;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Run an experiment from a config file");
    run->add_option("config", config_path, "JSON experiment config")->required();
    run->add_option("--threads", threads, "Parallel seeds cap")->check(CLI::PositiveNumber);
    run->add_flag("--quiet", quiet, "Suppress progress output");

    int gen_n = 1000, gen_d = 20;
    double gen_margin = 0.1;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    auto* generate = app.add_subcommand("generate-data", "Write a synthetic margin dataset (LIBSVM format)");
    generate->add_option("--n", gen_n, "Sample count")->check(CLI::PositiveNumber);
    generate->add_option("--d", gen_d, "Feature dimension")->check(CLI::PositiveNumber);
    generate->add_option("--margin", gen_margin, "Separation margin")->required();
    generate->add_option("--seed", gen_seed, "Generator seed");
    generate->add_option("--out", gen_out, "Output path")->required();

    std::string est_data, est_loss = "logistic";
    double est_rbf = 0.0, est_tau = 0.0;
    int est_batch = 100, est_probes = 5;
    std::uint64_t est_seed = 1;
    auto* estimate = app.add_subcommand("estimate", "Print SGC and eigenvalue estimates for a dataset");
    estimate->add_option("--data", est_data, "LIBSVM dataset path")->required();
    estimate->add_option("--rbf", est_rbf, "Optional RBF bandwidth (maps data through the kernel)");
    estimate->add_option("--loss", est_loss, "Loss: logistic or squared_hinge");
    estimate->add_option("--tau", est_tau, "LM regularization for the reported range");
    estimate->add_option("--batch", est_batch, "Batch size for subsampled bounds");
    estimate->add_option("--probes", est_probes, "Number of probe points");
    estimate->add_option("--seed", est_seed, "Probe seed");

    auto* verify = app.add_subcommand("verify", "Run the diagnostics oracle suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, threads, quiet);
        if (generate->parsed()) return cmd_generate(gen_n, gen_d, gen_margin, gen_seed, gen_out);
        if (estimate->parsed())
            return cmd_estimate(est_data, est_rbf, est_loss, est_tau, est_batch, est_probes, est_seed);
        if (verify->parsed()) return ssn::run_verification_suite(std::cout) ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
