// occ-locate: run, sweep, and validate localization scenarios.
//
// Exit codes: 0 success, 1 scenario parse/validation error, 2 I/O error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "occ/harness.hpp"

namespace {

void print_summary(const occ::Summary& s) {
    if (s.empty) {
        std::cout << "summary: empty run (no ticks)\n";
        return;
    }
    std::cout << "ticks:                " << s.n_ticks << "\n"
              << "rms_error_raw:        " << s.rms_error_raw << " m\n"
              << "rms_error_tracked:    " << s.rms_error_tracked << " m\n"
              << "decode_failure_rate:  " << s.mean_decode_failure_rate << "\n"
              << "ber_empirical:        " << s.ber_empirical << "\n"
              << "accuracy:             " << s.accuracy_percent << " %\n"
              << "mean_possibility:     " << s.mean_possibility << "\n";
    if (s.has_final_estimate)
        std::cout << "final_estimate:       (" << s.final_estimate.x() << ", "
                  << s.final_estimate.y() << ", " << s.final_estimate.z()
                  << ") m\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optical-camera-communication localization simulator"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir = "out";
    std::optional<uint64_t> seed_override;
    uint64_t seed_value = 0;

    auto* run_cmd = app.add_subcommand("run", "Execute a scenario once");
    run_cmd->add_option("--scenario", scenario_path, "Scenario JSON file")
        ->required();
    auto* seed_opt = run_cmd->add_option("--seed", seed_value, "Seed override");
    run_cmd->add_option("--out", out_dir, "Output directory");

    auto* sweep_cmd = app.add_subcommand("sweep", "Run the scenario's sweep");
    sweep_cmd->add_option("--scenario", scenario_path, "Scenario JSON file")
        ->required();
    sweep_cmd->add_option("--out", out_dir, "Output directory");

    auto* validate_cmd =
        app.add_subcommand("validate", "Parse and validate a scenario");
    validate_cmd->add_option("--scenario", scenario_path, "Scenario JSON file")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const occ::ScenarioConfig cfg = occ::load_scenario(scenario_path);
        if (validate_cmd->parsed()) {
            std::cout << "ok: " << cfg.kind << " scenario\n";
            return 0;
        }
        if (run_cmd->parsed()) {
            if (seed_opt->count() > 0) seed_override = seed_value;
            const occ::RunReport report = occ::run(cfg, out_dir, seed_override);
            std::cout << "wrote " << report.csv_path.string() << "\n";
            print_summary(report.summary);
            return 0;
        }
        const auto points = occ::sweep(cfg, out_dir);
        std::cout << "wrote " << (std::filesystem::path(out_dir) / "aggregate.csv").string()
                  << " (" << points.size() << " sweep points)\n";
        return 0;
    } catch (const occ::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const occ::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const occ::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
