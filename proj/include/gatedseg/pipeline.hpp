#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gatedseg/config.hpp"
#include "gatedseg/eval.hpp"
#include "gatedseg/retrieval.hpp"
#include "gatedseg/store.hpp"

namespace gatedseg {

BankBuildParams bank_params(const PipelineConfig& cfg, const Manifest& m);

/// Builds the memory bank from the manifest's bank split.
MemoryBank build_bank_from_manifest(const Manifest& m, const PipelineConfig& cfg, int jobs = 1);

struct SceneResult {
    std::string scene_id;
    ProbMap base;
    ProbMap fused;
};

struct RunResult {
    RunRecords records;
    std::vector<SceneResult> scenes;  // eval split order
};

/// Every eval-split scene: uncertainty, regions, retrieval for every region,
/// gating under cfg.gate_policy, fusion of the passed regions. Each record's
/// fused_iou is the region fused on its own, so always-on and gated
/// statistics come from one run.
RunResult run_pipeline(const Manifest& m, const MemoryBank& bank, const PipelineConfig& cfg, int jobs = 1);

/// Writes records.json and fused/<scene>_{probs,pred}.npy under `out_dir`.
void write_run(const RunResult& run, const std::filesystem::path& out_dir);

RunRecords load_run_records(const std::filesystem::path& out_dir);

/// Human-readable bank summary.
std::string describe_bank(const MemoryBank& bank);

}  // namespace gatedseg
