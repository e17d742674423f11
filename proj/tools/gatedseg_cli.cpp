// gatedseg: synth, bank build/inspect, run, eval, config.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "gatedseg/config.hpp"
#include "gatedseg/error.hpp"
#include "gatedseg/eval.hpp"
#include "gatedseg/pipeline.hpp"
#include "gatedseg/store.hpp"
#include "gatedseg/synth.hpp"
#include "gatedseg/tensor.hpp"

namespace fs = std::filesystem;
using namespace gatedseg;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::vector<std::string> sets;
    int jobs = 1;
    std::string out;
};

PipelineConfig effective_config(const GlobalOpts& g) {
    std::string text;
    if (!g.config_path.empty()) {
        if (!fs::exists(g.config_path)) throw IoError("config file not found: " + g.config_path);
        text = read_text_file(g.config_path);
    }
    return load_config(text, g.sets);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_synth(const GlobalOpts& g) {
    PipelineConfig cfg = effective_config(g);
    if (!g.out.empty()) cfg.paths.data_dir = g.out;
    const auto t0 = std::chrono::steady_clock::now();
    Manifest m = generate_dataset(cfg.synth, cfg.paths.data_dir, g.jobs);
    std::cout << "wrote " << m.scenes.size() << " scenes (" << m.bank_split.size() << " bank, " << m.eval_split.size()
              << " eval) to " << cfg.paths.data_dir << " in " << seconds_since(t0) << " s\n";
    return 0;
}

int cmd_bank_build(const GlobalOpts& g) {
    PipelineConfig cfg = effective_config(g);
    if (!g.out.empty()) cfg.paths.bank_dir = g.out;
    const auto t0 = std::chrono::steady_clock::now();
    Manifest m = load_manifest(cfg.paths.manifest_path());
    MemoryBank bank = build_bank_from_manifest(m, cfg, g.jobs);
    save_bank(bank, cfg.paths.bank_dir);
    std::cout << "bank: " << bank.entries.size() << " entries from " << bank.scenes.size() << " scenes -> "
              << cfg.paths.bank_dir << " (" << seconds_since(t0) << " s)\n";
    return 0;
}

int cmd_bank_inspect(const GlobalOpts& g) {
    PipelineConfig cfg = effective_config(g);
    if (!g.out.empty()) cfg.paths.bank_dir = g.out;
    std::cout << describe_bank(load_bank(cfg.paths.bank_dir));
    return 0;
}

int cmd_run(const GlobalOpts& g) {
    PipelineConfig cfg = effective_config(g);
    if (!g.out.empty()) cfg.paths.out_dir = g.out;
    const auto t0 = std::chrono::steady_clock::now();
    Manifest m = load_manifest(cfg.paths.manifest_path());
    if (!fs::exists(fs::path(cfg.paths.bank_dir) / "bank.json"))
        throw IoError("no bank at " + cfg.paths.bank_dir + " (run 'bank build' first)");
    MemoryBank bank = load_bank(cfg.paths.bank_dir);
    RunResult run = run_pipeline(m, bank, cfg, g.jobs);
    write_run(run, cfg.paths.out_dir);
    std::size_t passed = 0;
    for (const auto& r : run.records.records) passed += r.passed_gate ? 1 : 0;
    std::cout << "policy " << run.records.policy << ": " << passed << "/" << run.records.records.size()
              << " regions fused, outputs in " << cfg.paths.out_dir << " (" << seconds_since(t0) << " s)\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g) {
    PipelineConfig cfg = effective_config(g);
    if (!g.out.empty()) cfg.paths.out_dir = g.out;
    RunRecords run = load_run_records(cfg.paths.out_dir);
    EvalReport rep = evaluate(run);
    emit_report(rep, cfg.paths.out_dir);
    std::cout << "policy " << rep.policy << ": cost " << rep.cost.retrieved << "/" << rep.cost.total << " ("
              << rep.cost.fraction * 100.0 << "%), mean dIoU gated " << rep.policy_summary.mean_delta
              << ", always-on " << rep.always_on_summary.mean_delta << "\n";
    std::cout << "report written to " << (fs::path(cfg.paths.out_dir) / "report.json").string() << "\n";
    return 0;
}

int cmd_config(const GlobalOpts& g) {
    std::cout << config_to_json(effective_config(g)) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-gated retrieval fusion for semantic segmentation"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file")->option_text("PATH");
    app.add_option("--set", g.sets, "Override a config value, e.g. --set fusion.lambda_max=0.3")
        ->option_text("K=V")
        ->take_all();
    app.add_option("--jobs", g.jobs, "Scene-level worker threads")->check(CLI::Range(1, 256));
    app.add_option("--out", g.out, "Output directory for the subcommand")->option_text("DIR");

    int rc = 0;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and manifest");
    synth->callback([&] { rc = cmd_synth(g); });
    auto* bank = app.add_subcommand("bank", "Memory bank operations");
    bank->require_subcommand(1);
    bank->add_subcommand("build", "Build the memory bank from the bank split")->callback([&] { rc = cmd_bank_build(g); });
    bank->add_subcommand("inspect", "Summarize a persisted bank")->callback([&] { rc = cmd_bank_inspect(g); });
    app.add_subcommand("run", "Gate, retrieve and fuse over the eval split")->callback([&] { rc = cmd_run(g); });
    app.add_subcommand("eval", "Build the evaluation report from run records")->callback([&] { rc = cmd_eval(g); });
    app.add_subcommand("config", "Print the effective config as JSON")->callback([&] { rc = cmd_config(g); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 2;
    } catch (const Error& e) {
        std::cerr << e.kind() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
