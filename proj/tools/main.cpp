#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <colddamp/scenario.hpp>

int main(int argc, char** argv) {
    CLI::App app{"Noise budgets, Langevin simulation and spectral calibration for "
                 "feedback-cooled mechanical oscillators"};
    app.set_version_flag("--version", std::string(colddamp::version_string));
    app.require_subcommand(1);

    std::string config_arg;
    colddamp::RunOptions opt;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out_dir = ".";

    auto* run = app.add_subcommand("run", "Execute a scenario config and write its artifacts");
    run->add_option("config", config_arg, "Config path or bundled scenario name")->required();
    run->add_option("--out", out_dir, "Output directory (created if missing)");
    run->add_option("--seed", seed, "Override the simulation seed");
    run->add_option("--threads", threads, "Override the worker thread count");

    auto* validate = app.add_subcommand("validate", "Check a scenario config without executing it");
    validate->add_option("config", config_arg, "Config path or bundled scenario name")->required();

    app.add_subcommand("list-scenarios", "List the bundled scenario configs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? colddamp::exit_ok : colddamp::exit_invalid;
    }

    try {
        if (app.got_subcommand("list-scenarios")) {
            for (const auto& s : colddamp::bundled_scenarios())
                std::cout << s.name << "  -  " << s.description << "\n";
            return colddamp::exit_ok;
        }
        if (app.got_subcommand("validate")) {
            const colddamp::Config cfg = colddamp::load_scenario_config(config_arg);
            const auto report = colddamp::validate_scenario(cfg);
            std::cout << report.text();
            return report.valid ? colddamp::exit_ok : colddamp::exit_invalid;
        }
        // run
        const colddamp::Config cfg = colddamp::load_scenario_config(config_arg);
        opt.out_dir = out_dir;
        opt.seed = seed;
        opt.threads = threads;
        for (const auto& path : colddamp::run_scenario(cfg, opt)) std::cout << path.string() << "\n";
        return colddamp::exit_ok;
    } catch (const colddamp::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return colddamp::exit_io;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return colddamp::exit_invalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return colddamp::exit_physics;
    }
}
