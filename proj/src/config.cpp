#include "gatedseg/config.hpp"

#include <algorithm>

#include <json.hpp>

#include "gatedseg/error.hpp"

namespace gatedseg {

using json = nlohmann::ordered_json;

namespace {

json to_j(const PipelineConfig& c) {
    json j;
    j["paths"] = {{"data_dir", c.paths.data_dir},
                  {"manifest", c.paths.manifest},
                  {"bank_dir", c.paths.bank_dir},
                  {"out_dir", c.paths.out_dir}};
    j["uncertainty"] = uncertainty_kind_name(c.uncertainty);
    j["regions"] = {{"percentile", c.regions.percentile}, {"min_area", c.regions.min_area}};
    j["retrieval"] = {{"top_images", c.retrieval.top_images},
                      {"top_regions", c.retrieval.top_regions},
                      {"keep_fraction", c.retrieval.keep_fraction}};
    j["fusion"] = {{"lambda_max", c.fusion.lambda_max},
                   {"temperature", c.fusion.temperature},
                   {"label_smoothing", c.fusion.label_smoothing}};
    j["gate"] = {{"policy", c.gate_policy}};
    j["seed"] = c.seed;
    const auto& s = c.synth;
    j["synth"] = {{"scene_count", s.scene_count},       {"height", s.height},
                  {"width", s.width},                   {"class_count", s.class_count},
                  {"ensemble_size", s.ensemble_size},   {"embed_dim", s.embed_dim},
                  {"patch_size", s.patch_size},         {"corruption_severity", s.corruption_severity},
                  {"bank_fraction", s.bank_fraction}};
    return j;
}

// Reads every known field; collects type errors instead of stopping at the first.
PipelineConfig from_j(const json& j, std::vector<std::string>& errs) {
    PipelineConfig c;
    auto read = [&](const char* section, const char* key, auto& dst) {
        if (!j.contains(section)) return;
        const json& s = j.at(section);
        if (!s.contains(key)) return;
        try {
            s.at(key).get_to(dst);
        } catch (const json::exception&) {
            errs.push_back(std::string(section) + "." + key + ": wrong type (" + s.at(key).dump() + ")");
        }
    };
    read("paths", "data_dir", c.paths.data_dir);
    read("paths", "manifest", c.paths.manifest);
    read("paths", "bank_dir", c.paths.bank_dir);
    read("paths", "out_dir", c.paths.out_dir);
    if (j.contains("uncertainty")) {
        try {
            c.uncertainty = parse_uncertainty_kind(j.at("uncertainty").get<std::string>());
        } catch (const std::exception& e) {
            errs.push_back(std::string("uncertainty: ") + e.what());
        }
    }
    read("regions", "percentile", c.regions.percentile);
    read("regions", "min_area", c.regions.min_area);
    read("retrieval", "top_images", c.retrieval.top_images);
    read("retrieval", "top_regions", c.retrieval.top_regions);
    read("retrieval", "keep_fraction", c.retrieval.keep_fraction);
    read("fusion", "lambda_max", c.fusion.lambda_max);
    read("fusion", "temperature", c.fusion.temperature);
    read("fusion", "label_smoothing", c.fusion.label_smoothing);
    read("gate", "policy", c.gate_policy);
    if (j.contains("seed")) {
        try {
            j.at("seed").get_to(c.seed);
        } catch (const json::exception&) {
            errs.push_back("seed: wrong type");
        }
    }
    c.synth.seed = c.seed;
    read("synth", "scene_count", c.synth.scene_count);
    read("synth", "height", c.synth.height);
    read("synth", "width", c.synth.width);
    read("synth", "class_count", c.synth.class_count);
    read("synth", "ensemble_size", c.synth.ensemble_size);
    read("synth", "embed_dim", c.synth.embed_dim);
    read("synth", "patch_size", c.synth.patch_size);
    read("synth", "corruption_severity", c.synth.corruption_severity);
    read("synth", "bank_fraction", c.synth.bank_fraction);

    static const std::vector<std::string> known = {"paths",  "uncertainty", "regions", "retrieval",
                                                   "fusion", "gate",        "seed",    "synth"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) errs.push_back("unknown config key '" + key + "'");
        if (value.is_object()) {
            json defaults = to_j(PipelineConfig{});
            if (defaults.contains(key) && defaults[key].is_object()) {
                for (const auto& [sub, _] : value.items())
                    if (!defaults[key].contains(sub)) errs.push_back("unknown config key '" + key + "." + sub + "'");
            }
        }
    }
    return c;
}

[[noreturn]] void fail(const std::vector<std::string>& errs) {
    std::string msg = "invalid configuration (" + std::to_string(errs.size()) + " problem" +
                      (errs.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
}

std::vector<std::string> collect_violations(const PipelineConfig& c) {
    std::vector<std::string> errs;
    if (!(c.regions.percentile >= 0.0 && c.regions.percentile <= 100.0))
        errs.push_back("regions.percentile must lie in [0, 100]");
    if (c.regions.min_area < 1) errs.push_back("regions.min_area must be >= 1");
    if (c.retrieval.top_images < 1) errs.push_back("retrieval.top_images must be >= 1");
    if (c.retrieval.top_regions < 1) errs.push_back("retrieval.top_regions must be >= 1");
    if (!(c.retrieval.keep_fraction > 0.0 && c.retrieval.keep_fraction <= 1.0))
        errs.push_back("retrieval.keep_fraction must lie in (0, 1]");
    if (!(c.fusion.lambda_max >= 0.0 && c.fusion.lambda_max <= 1.0)) errs.push_back("fusion.lambda_max must lie in [0, 1]");
    if (!(c.fusion.temperature > 0.0)) errs.push_back("fusion.temperature must be > 0");
    if (!(c.fusion.label_smoothing >= 0.0 && c.fusion.label_smoothing < 0.5))
        errs.push_back("fusion.label_smoothing must lie in [0, 0.5)");
    try {
        parse_policy(c.gate_policy);
    } catch (const ConfigError& e) {
        errs.push_back(std::string("gate.policy: ") + e.what());
    }
    try {
        validate_synth_config(c.synth);
    } catch (const ConfigError& e) {
        std::string text = e.what();
        std::size_t pos = text.find('\n');
        while (pos != std::string::npos) {
            std::size_t next = text.find('\n', pos + 1);
            std::string line = text.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1);
            line.erase(0, line.find_first_not_of(' '));
            errs.push_back(line);
            pos = next;
        }
    }
    return errs;
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg) { return to_j(cfg).dump(2) + "\n"; }

void validate_config(const PipelineConfig& cfg) {
    auto errs = collect_violations(cfg);
    if (!errs.empty()) fail(errs);
}

PipelineConfig load_config(const std::string& json_text, const std::vector<std::string>& overrides) {
    json doc = to_j(PipelineConfig{});
    std::vector<std::string> errs;
    if (!json_text.empty()) {
        try {
            json file = json::parse(json_text);
            if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
            for (const auto& [key, value] : file.items()) {
                if (value.is_object() && doc.contains(key) && doc[key].is_object()) {
                    for (const auto& [sub, v] : value.items()) doc[key][sub] = v;
                } else {
                    doc[key] = value;
                }
            }
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
        }
    }
    for (const auto& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) {
            errs.push_back("--set '" + ov + "' is not key=value");
            continue;
        }
        const std::string key = ov.substr(0, eq), raw = ov.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;
        }
        const std::size_t dot = key.find('.');
        if (dot == std::string::npos) {
            doc[key] = value;
        } else {
            doc[key.substr(0, dot)][key.substr(dot + 1)] = value;
        }
    }
    PipelineConfig cfg = from_j(doc, errs);
    auto violations = collect_violations(cfg);
    errs.insert(errs.end(), violations.begin(), violations.end());
    if (!errs.empty()) fail(errs);
    return cfg;
}

}  // namespace gatedseg
