#include "lightcone/error.hpp"
#include "lightcone/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    namespace pl = lightcone::pipeline;
    CLI::App app{"Light-cone future frame synthesis on a Poincare-ball VAE"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", LIGHTCONE_VERSION);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool full_scale = false;
    for (const auto& name : pl::command_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config, "key=value config file")->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out, "output directory");
        sub->add_flag("--full-scale", full_scale, "full dataset and sample counts (10000 sequences, 100000 samples)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? pl::kExitOk : pl::kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    pl::RunConfig cfg;
    try {
        cfg = pl::load_run_config(config, seed, out ? std::optional<std::filesystem::path>(*out) : std::nullopt,
                                  full_scale);
    } catch (const lightcone::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return pl::kExitConfig;
    }
    return pl::run_command(command, cfg, std::cout, std::cerr);
}
