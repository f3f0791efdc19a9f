#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lnsim/harness.hpp"

namespace {

std::string default_out_dir() {
    const char* env = std::getenv("LNSIM_OUT_DIR");
    return env ? env : "out";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic payment-channel network simulator"};
    app.require_subcommand(1);

    std::string scenario, config_path, out_dir = default_out_dir(), report_dir;
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "Run a named scenario and write its reports");
    run->add_option("scenario", scenario, "Scenario name (see list-scenarios)")->required();
    run->add_option("--config", config_path, "JSON config file");
    run->add_option("--seed", seed, "RNG seed");
    run->add_option("--out", out_dir, "Output directory (default $LNSIM_OUT_DIR or ./out)");

    auto* ls = app.add_subcommand("list-scenarios", "List runnable scenarios");
    (void)ls;

    auto* rp = app.add_subcommand("report", "Pretty-print a written report directory");
    rp->add_option("dir", report_dir, "Report directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("list-scenarios")) {
            for (auto& name : lnsim::list_scenarios()) std::cout << name << "\n";
            return 0;
        }
        if (app.got_subcommand("report")) {
            std::cout << lnsim::render_report(lnsim::load_report(report_dir));
            return 0;
        }
        lnsim::ScenarioConfig cfg;
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) {
                std::cerr << "error [config]: cannot open " << config_path << "\n";
                return 1;
            }
            nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
            if (j.is_discarded()) {
                std::cerr << "error [config]: " << config_path << " is not valid JSON\n";
                return 1;
            }
            cfg = lnsim::ScenarioConfig::from_json(j);
        }
        lnsim::Report rep = lnsim::run_scenario(scenario, cfg, seed);
        rep.write(out_dir);
        std::cout << "wrote " << rep.tables.size() << " table(s) to " << out_dir << "\n";
        return 0;
    } catch (const lnsim::ConfigError& e) {
        std::cerr << "error [config]: " << e.what() << "\n";
        return 1;
    } catch (const lnsim::SimError& e) {
        std::cerr << "error [run]: " << e.what() << "\n";
        return 2;
    }
}
