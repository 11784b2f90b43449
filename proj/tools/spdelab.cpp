#include "spdelab/errors.hpp"
#include "spdelab/lab.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace spdelab;
    CLI::App app{"Spectral-Galerkin lab for monotone SPDEs with multiplicative noise"};
    std::string experiment, config_path, output_dir;
    int threads = 1;
    std::string names;
    for (auto e : all_experiments()) names += (names.empty() ? "" : " | ") + std::string(to_string(e));
    app.add_option("experiment", experiment, "one of: " + names)->required();
    app.add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024));
    app.add_option("--output-dir", output_dir, "directory for results.csv, summary.json, manifest.json");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const Experiment want = parse_experiment(experiment);
        const ExperimentConfig cfg = load_config(config_path);
        if (cfg.experiment != want) {
            std::cerr << "error: command '" << experiment << "' does not match config experiment '"
                      << to_string(cfg.experiment) << "'\n";
            return 1;
        }
        RunOptions opt;
        opt.threads = threads;
        if (!output_dir.empty()) opt.output_dir = output_dir;
        opt.seed_override = seed_from_env();
        const RunResult res = run(cfg, opt);
        const auto& m = res.manifest;
        std::cout << "experiment " << experiment << ": " << m["status"].get<std::string>() << " -> " << res.output_dir
                  << "\n";
        if (m.contains("error")) std::cerr << "error: " << m["error"].get<std::string>() << "\n";
        for (const auto& v : m["verdicts"])
            std::cout << "  " << v["verdict"].get<std::string>() << "  " << v["name"].get<std::string>() << "  "
                      << v["detail"].get<std::string>() << "\n";
        return res.exit_code;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
