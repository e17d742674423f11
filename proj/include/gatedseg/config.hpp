#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gatedseg/fusion.hpp"
#include "gatedseg/gating.hpp"
#include "gatedseg/retrieval.hpp"
#include "gatedseg/synth.hpp"
#include "gatedseg/uncertainty.hpp"

namespace gatedseg {

struct PathsConfig {
    std::string data_dir = "data";
    std::string manifest;  // empty: <data_dir>/manifest.json
    std::string bank_dir = "bank";
    std::string out_dir = "out";

    std::string manifest_path() const { return manifest.empty() ? data_dir + "/manifest.json" : manifest; }
};

struct RegionParams {
    double percentile = kDefaultPercentile;
    std::size_t min_area = kDefaultMinArea;
};

struct RetrievalParams {
    std::size_t top_images = kDefaultTopImages;
    std::size_t top_regions = kDefaultTopRegions;
    double keep_fraction = kDefaultKeepFraction;
};

/// Full pipeline configuration. Precedence: --set flags > config file >
/// these defaults.
struct PipelineConfig {
    PathsConfig paths;
    UncertaintyKind uncertainty = UncertaintyKind::mutual_information;
    RegionParams regions;
    RetrievalParams retrieval;
    FusionConfig fusion;
    std::string gate_policy = "two_stage";
    std::uint64_t seed = 7;
    SynthConfig synth;
};

std::string config_to_json(const PipelineConfig& cfg);

/// Builds a config from defaults, an optional JSON document (may be empty),
/// and `key.path=value` overrides. Values parse as JSON when possible and as
/// bare strings otherwise. Throws ConfigError listing every violated field.
PipelineConfig load_config(const std::string& json_text, const std::vector<std::string>& overrides = {});

/// Throws ConfigError listing every violated field at once.
void validate_config(const PipelineConfig& cfg);

}  // namespace gatedseg
