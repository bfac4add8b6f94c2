#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "solarmpc/scenario.hpp"
#include "solarmpc/validation.hpp"

using namespace solarmpc;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kSynthesis = 3, kInfeasible = 4 };

int cmd_run(const std::string& config, const std::vector<std::string>& controllers, const std::string& out_dir)
{
    const ScenarioConfig base = load_scenario_config(config);
    std::vector<ScenarioConfig> cfgs;
    if (controllers.empty())
        cfgs.push_back(base);
    for (const auto& name : controllers) {
        ScenarioConfig c = base;
        c.controller = parse_controller(name);
        cfgs.push_back(c);
    }
    const std::filesystem::path dir = out_dir.empty() ? base.output_dir : std::filesystem::path(out_dir);
    const std::vector<ScenarioResult> results = run_scenarios(cfgs);

    int code = kOk;
    std::vector<MetricsReport> reports;
    for (std::size_t i = 0; i < results.size(); ++i) {
        write_outputs(dir, results[i], cfgs[i].csv_timing);
        const MetricsReport& r = results[i].report;
        reports.push_back(r);
        if (r.samples > 0 && r.infeasible_samples > cfgs[i].max_infeasible_fraction * r.samples) {
            std::fprintf(stderr, "%s: %d of %d samples infeasible (threshold %.3g)\n", r.controller.c_str(),
                         r.infeasible_samples, r.samples, cfgs[i].max_infeasible_fraction);
            code = kInfeasible;
        }
    }
    if (reports.size() >= 2)
        std::cout << compare(reports).table();
    else
        write_report(std::cout, reports.front());
    return code;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& csv_out)
{
    std::vector<MetricsReport> reports;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in)
            throw ConfigError("cannot open report " + f);
        reports.push_back(read_report(in, f));
    }
    const Comparison c = compare(reports);
    std::cout << c.table();
    if (!csv_out.empty()) {
        std::ofstream out(csv_out);
        if (!out)
            throw ConfigError("cannot write " + csv_out);
        out << c.csv();
    }
    return kOk;
}

int cmd_synth(const std::string& spec_file, const std::string& out_file)
{
    const KeyValueFile kv = KeyValueFile::load(spec_file);
    const SynthSpec spec = synth_spec_from(kv);
    kv.reject_unread();
    const DisturbanceSeries w = synth_disturbance(spec);
    if (out_file.empty()) {
        write_disturbances(std::cout, w);
        return kOk;
    }
    std::ofstream out(out_file);
    if (!out)
        throw ConfigError("cannot write " + out_file);
    write_disturbances(out, w);
    return kOk;
}

int cmd_validate(int samples, std::uint64_t seed)
{
    const LpvModel<double> model(PlantParams<double>{}, 3.0);
    const EmbeddingCheck ldi = ldi_equivalence(model, samples, seed);
    const EmbeddingCheck mem = membership_reconstruction(model, samples, seed + 1);
    const bool ok_ldi = ldi.max_error <= 1e-10;
    const bool ok_mem = mem.max_error <= 1e-12;
    std::printf("ldi_equivalence: %d points, max relative error %.3e (limit 1e-10) %s\n", ldi.samples, ldi.max_error,
                ok_ldi ? "ok" : "FAILED");
    std::printf("membership_reconstruction: %d points, max error %.3e (limit 1e-12) %s\n", mem.samples,
                mem.max_error, ok_mem ? "ok" : "FAILED");
    return ok_ldi && ok_mem ? kOk : kFailure;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Adaptive LPV MPC for a solar collector: closed-loop scenarios and comparisons"};
    app.require_subcommand(1);

    std::string config, out_dir;
    std::vector<std::string> controllers;
    auto* run = app.add_subcommand("run", "Run a closed-loop scenario");
    run->add_option("--config", config, "Scenario config file")->required()->check(CLI::ExistingFile);
    run->add_option("--controller", controllers, "AMPC, TMPC or LTIMPC; repeat to run several in parallel")
        ->check(CLI::IsMember({"AMPC", "TMPC", "LTIMPC"}));
    run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

    std::vector<std::string> reports;
    std::string csv_out;
    auto* cmp = app.add_subcommand("compare", "Compare metrics reports of one scenario");
    cmp->add_option("reports", reports, "Report files")->required()->check(CLI::ExistingFile);
    cmp->add_option("--csv", csv_out, "Also write the table as CSV");

    std::string spec, synth_out;
    auto* syn = app.add_subcommand("synth-disturbance", "Write a synthetic disturbance CSV");
    syn->add_option("--spec", spec, "Synthetic profile spec file")->required()->check(CLI::ExistingFile);
    syn->add_option("--out", synth_out, "Output CSV (stdout when omitted)");

    int samples = 10000;
    std::uint64_t seed = 1;
    auto* val = app.add_subcommand("validate-model", "Check the LPV embedding against the nonlinear model");
    val->add_option("--samples", samples, "Random points")->check(CLI::PositiveNumber);
    val->add_option("--seed", seed, "RNG seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run)
            return cmd_run(config, controllers, out_dir);
        if (*cmp)
            return cmd_compare(reports, csv_out);
        if (*syn)
            return cmd_synth(spec, synth_out);
        return cmd_validate(samples, seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kConfig;
    } catch (const ComparisonError& e) {
        std::cerr << "comparison error: " << e.what() << "\n";
        return kConfig;
    } catch (const SynthesisError& e) {
        std::cerr << "synthesis error: " << e.what() << "\n";
        return kSynthesis;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}
