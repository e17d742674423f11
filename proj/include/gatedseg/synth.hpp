#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gatedseg/store.hpp"

namespace gatedseg {

/// Knobs for the synthetic scene generator. `corruption_severity` in [0, 1]
/// scales both the number of corrupted patches and the logit noise.
struct SynthConfig {
    std::uint64_t seed = 7;
    int scene_count = 64;
    int height = 128;
    int width = 128;
    int class_count = 19;
    int ensemble_size = 5;
    int embed_dim = 64;
    int patch_size = 8;
    double corruption_severity = 0.6;
    double bank_fraction = 0.5;

    bool operator==(const SynthConfig&) const = default;
};

/// Throws ConfigError listing every violated constraint.
void validate_synth_config(const SynthConfig& cfg);

/// One unit vector per class (index class_count is the void prototype),
/// drawn from the config seed only.
std::vector<std::vector<float>> class_prototypes(const SynthConfig& cfg);

std::string synth_scene_id(int index);

SceneBundle generate_scene(const SynthConfig& cfg, int index);

/// Number of scenes assigned to the bank split.
int bank_scene_count(const SynthConfig& cfg);

/// Writes every scene plus manifest.json under `out_dir`.
Manifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace gatedseg
