#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <unistd.h>

#include <CLI11.hpp>

#include "sitest/dsl.hpp"
#include "sitest/runner.hpp"
#include "sitest/sim.hpp"

namespace {

enum ExitCode { ExitOk = 0, ExitSemantic = 1, ExitInput = 2 };

bool use_color()
{
    const char* mode = std::getenv("SITEST_COLOR");
    std::string m = mode ? mode : "auto";
    if (m == "always") return true;
    if (m == "never") return false;
    return isatty(2);
}

void print_diagnostics(const std::vector<sitest::Diagnostic>& diags)
{
    bool color = use_color();
    for (const auto& d : diags) {
        std::string line = sitest::format_diagnostic(d);
        if (color) {
            const char* tint = d.severity == sitest::Severity::Error ? "\033[31m" : "\033[33m";
            std::cerr << tint << line << "\033[0m\n";
        } else {
            std::cerr << line << '\n';
        }
    }
}

std::optional<std::string> slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int cmd_validate(const std::string& library_path)
{
    auto text = slurp(library_path);
    if (!text) {
        std::cerr << "error: cannot read '" << library_path << "'\n";
        return ExitInput;
    }
    auto parsed = sitest::parse_library(*text, library_path);
    print_diagnostics(parsed.diagnostics);
    return parsed.ok() ? ExitOk : ExitSemantic;
}

int cmd_run(const std::string& library_path, const std::string& scenario_path,
            const std::string& trace_path, int stale_after, const std::string& report)
{
    auto lib_text = slurp(library_path);
    if (!lib_text) {
        std::cerr << "error: cannot read '" << library_path << "'\n";
        return ExitInput;
    }
    auto lib = sitest::parse_library(*lib_text, library_path);
    if (!lib.ok()) {
        print_diagnostics(lib.diagnostics);
        return ExitInput;
    }
    auto obs_text = slurp(scenario_path);
    if (!obs_text) {
        std::cerr << "error: cannot read '" << scenario_path << "'\n";
        return ExitInput;
    }
    auto scenario = sitest::parse_scenario(*obs_text, scenario_path, &lib.value);
    if (!scenario.ok()) {
        print_diagnostics(scenario.diagnostics);
        return ExitInput;
    }

    sitest::EstimatorConfig cfg;
    cfg.stale_after = stale_after;
    auto result = sitest::run_scenario(lib.value, scenario.value, cfg);

    if (!trace_path.empty()) {
        std::ofstream out(trace_path, std::ios::binary);
        if (!out) {
            std::cerr << "error: cannot write '" << trace_path << "'\n";
            return ExitInput;
        }
        out << sitest::to_text(result.trace);
    }
    if (report == "structured") {
        for (const std::string& line : result.report_lines) std::cout << line << '\n';
    } else {
        std::cout << sitest::text_report(result);
    }
    return result.violations == 0 ? ExitOk : ExitSemantic;
}

int cmd_simulate(const std::string& script_path, std::optional<std::uint64_t> seed,
                 const std::string& out_path)
{
    auto text = slurp(script_path);
    if (!text) {
        std::cerr << "error: cannot read '" << script_path << "'\n";
        return ExitInput;
    }
    auto script = sitest::parse_script(*text, script_path);
    if (!script.ok()) {
        print_diagnostics(script.diagnostics);
        return ExitInput;
    }
    if (script.value.library_path.empty()) {
        std::cerr << "error: script names no library\n";
        return ExitInput;
    }
    auto lib_path =
        std::filesystem::path(script_path).parent_path() / script.value.library_path;
    auto lib_text = slurp(lib_path.string());
    if (!lib_text) {
        std::cerr << "error: cannot read '" << lib_path.string() << "'\n";
        return ExitInput;
    }
    auto lib = sitest::parse_library(*lib_text, lib_path.string());
    if (!lib.ok()) {
        print_diagnostics(lib.diagnostics);
        return ExitInput;
    }
    auto sim = sitest::simulate(script.value, lib.value, seed);
    if (!sim.ok()) {
        print_diagnostics(sim.diagnostics);
        return ExitInput;
    }
    std::string rendered = sitest::serialize(sim.scenario);
    if (out_path.empty()) {
        std::cout << rendered;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) {
            std::cerr << "error: cannot write '" << out_path << "'\n";
            return ExitInput;
        }
        out << rendered;
    }
    return ExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"symbolic situation estimation over plan prototype libraries"};
    app.require_subcommand(1);

    std::string library_path, scenario_path, script_path;
    std::string trace_path, out_path;
    std::string report = "text";
    int stale_after = 5;
    std::optional<std::uint64_t> seed;

    auto* validate = app.add_subcommand("validate", "check a plan library");
    validate->add_option("library", library_path, "path to .plan file")->required();

    auto* run = app.add_subcommand("run", "run the estimator over a scenario");
    run->add_option("library", library_path, "path to .plan file")->required();
    run->add_option("scenario", scenario_path, "path to .obs file")->required();
    run->add_option("--trace", trace_path, "write the structured trace to this file");
    run->add_option("--stale-after", stale_after,
                    "drop instances unmatched for this many steps");
    run->add_option("--report", report, "report form")
        ->check(CLI::IsMember({"text", "structured"}));

    auto* simulate = app.add_subcommand("simulate", "generate a scenario from a script");
    simulate->add_option("script", script_path, "path to .script file")->required();
    simulate->add_option("--seed", seed, "override the script seed");
    simulate->add_option("--out", out_path, "write the .obs scenario here (default stdout)");

    CLI11_PARSE(app, argc, argv);

    if (validate->parsed()) return cmd_validate(library_path);
    if (run->parsed())
        return cmd_run(library_path, scenario_path, trace_path, stale_after, report);
    if (simulate->parsed()) return cmd_simulate(script_path, seed, out_path);
    return ExitInput;
}
