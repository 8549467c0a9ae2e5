#include "dopinv/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Doping profile inversion from boundary current measurements"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
    auto* run = app.add_subcommand("run", "Run an experiment from a JSON configuration");
    run->add_option("config", config_path, "Configuration file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    run->add_option("--seed", seed, "Noise seed (overrides noise.seed)")->check(CLI::NonNegativeNumber);

    std::string dir_a;
    std::string dir_b;
    std::string compare_out;
    auto* compare = app.add_subcommand("compare", "Compare the reconstructions of two invert runs");
    compare->add_option("run_a", dir_a, "First run directory")->required()->check(CLI::ExistingDirectory);
    compare->add_option("run_b", dir_b, "Second run directory")->required()->check(CLI::ExistingDirectory);
    compare->add_option("--out", compare_out, "Directory for compare.json and per-node errors");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            dopinv::ExperimentConfig config = dopinv::load_config(config_path);
            if (seed >= 0) {
                config.seed = static_cast<std::uint64_t>(seed);
            }
            if (!out_dir.empty()) {
                config.output_dir = out_dir;
            }
            const auto summary = dopinv::run_experiment(config, config.output_dir);
            std::cout << summary.dump(2) << '\n';
        } else {
            const auto report = dopinv::compare_runs(dir_a, dir_b, compare_out);
            std::cout << report.dump(2) << '\n';
        }
    } catch (const dopinv::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const dopinv::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
