#include "hklab/experiments.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

std::filesystem::path output_root() {
    if (const char* env = std::getenv("HKLAB_OUTPUT_ROOT"); env && *env) return env;
    return std::filesystem::current_path();
}

int cmd_validate(const std::string& path) {
    const auto cfg = hklab::load_config(path);
    std::cout << cfg.to_json().dump(2) << '\n';
    return 0;
}

int cmd_run(const std::string& path) {
    const auto cfg = hklab::load_config(path);
    const auto result = hklab::run_experiment(cfg, output_root());
    std::ifstream summary(result.output_dir / "summary.txt");
    std::cout << summary.rdbuf();
    std::cout << "outputs: " << result.output_dir.string() << '\n';
    if (const auto* f = result.first_failure()) {
        std::cerr << "invariant failed: " << f->name << ": " << f->detail << '\n';
    }
    return result.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heat kernel and Riesz transform experiments on a manifold with two ends"};
    app.require_subcommand(1);

    std::string config;
    auto* run = app.add_subcommand("run", "run an experiment and write its artifacts");
    run->add_option("config", config, "JSON config file")->required();
    auto* validate = app.add_subcommand("validate", "check a config and print it with defaults filled in");
    validate->add_option("config", config, "JSON config file")->required();
    auto* list = app.add_subcommand("list-kinds", "list experiment kinds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list->parsed()) {
            for (const auto& k : hklab::experiment_kinds()) std::cout << k.name << "\t" << k.description << '\n';
            return 0;
        }
        if (validate->parsed()) return cmd_validate(config);
        return cmd_run(config);
    } catch (const hklab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
