#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "ssn/dataset.hpp"
#include "ssn/harness.hpp"

#ifndef SSN_CLI_PATH
#error "SSN_CLI_PATH must be defined by the build"
#endif

namespace {

struct CommandResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

CommandResult run_command(const std::string& args) {
    const std::string command = std::string(SSN_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buffer{};
    std::string output;
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buffer.data(), buffer.size(), pipe) != nullptr) output += buffer.data();
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), output};
}

}  // namespace

TEST_CASE("cli usage and error exits") {
    SECTION("missing config file names the file") {
        const auto result = run_command("run missing.toml");
        REQUIRE(result.exit_code != 0);
        REQUIRE(result.output.find("missing.toml") != std::string::npos);
    }

    SECTION("unknown subcommand exits 2 with usage") {
        const auto result = run_command("frobnicate");
        REQUIRE(result.exit_code == 2);
    }

    SECTION("unknown flag exits 2") {
        const auto result = run_command("verify --frobnicate");
        REQUIRE(result.exit_code == 2);
    }

    SECTION("help exits 0") {
        const auto result = run_command("--help");
        REQUIRE(result.exit_code == 0);
        REQUIRE(result.output.find("run") != std::string::npos);
        REQUIRE(result.output.find("generate-data") != std::string::npos);
    }
}

TEST_CASE("cli generate-data round trips") {
    const std::string path = "cli_test_data.svm";
    const auto result =
        run_command("generate-data --n 100 --d 20 --margin 0.1 --seed 7 --out " + path);
    REQUIRE(result.exit_code == 0);

    std::ifstream in(path);
    REQUIRE(in.good());
    ssn::MarginSpec spec;
    ssn::Vector separator;
    REQUIRE(ssn::read_cache_header(in, spec, separator));
    REQUIRE(spec.margin == 0.1);
    REQUIRE(spec.seed == 7);

    const ssn::Dataset data = ssn::parse_libsvm(in);
    REQUIRE(data.n() == 100);
    REQUIRE(data.d() == 20);
    for (int i = 0; i < data.n(); ++i)
        REQUIRE(data.label(i) * data.dot_row(i, separator) >= 0.1 - 1e-12);
    std::remove(path.c_str());
}

TEST_CASE("cli estimate prints rho and eigenvalue bounds") {
    const std::string path = "cli_estimate_data.svm";
    REQUIRE(run_command("generate-data --n 60 --d 6 --margin 0.2 --seed 3 --out " + path).exit_code ==
            0);
    const auto result = run_command("estimate --data " + path + " --loss squared_hinge --tau 0.1");
    REQUIRE(result.exit_code == 0);
    REQUIRE(result.output.find("rho_hat") != std::string::npos);
    REQUIRE(result.output.find("eigenvalue") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("cli verify passes on a clean build") {
    const auto result = run_command("verify");
    REQUIRE(result.exit_code == 0);
    REQUIRE(result.output.find("FAIL") == std::string::npos);
}

TEST_CASE("cli run executes a config and writes the trace") {
    const std::string config_path = "cli_test_config.json";
    const std::string trace_path = "cli_test_trace.csv";
    {
        std::ofstream out(config_path);
        out << R"({
  "dataset": {"kind": "synthetic", "n": 120, "d": 6, "margin": 0.1, "seed": 2},
  "loss": "squared_hinge",
  "solver": {"kind": "rssn_const", "tau": 0.01},
  "batch_size": 30,
  "epochs": 2,
  "seeds": [1, 2],
  "output": ")" << trace_path
            << R"("
})";
    }
    const auto result = run_command("run " + config_path + " --quiet");
    REQUIRE(result.exit_code == 0);

    std::ifstream trace(trace_path);
    REQUIRE(trace.good());
    std::string header;
    std::getline(trace, header);
    REQUIRE(header == ssn::trace_csv_header());
    int data_rows = 0;
    std::string line;
    while (std::getline(trace, line))
        if (!line.empty() && line[0] != '#') ++data_rows;
    REQUIRE(data_rows == 2 * 3 + 3 + 3);  // two seeds x (epoch0..2) + mean + std
    std::remove(config_path.c_str());
    std::remove(trace_path.c_str());
}
