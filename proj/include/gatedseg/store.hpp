#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "gatedseg/tensor.hpp"

namespace gatedseg {

inline constexpr std::int32_t kVoidLabel = 255;
inline constexpr const char* kManifestVersion = "1.0";

/// Everything the engine needs for one image.
struct SceneBundle {
    std::string scene_id;
    ArrayF32 ensemble_logits;   // [K, C, H, W], pre-softmax
    ArrayF32 patch_embeddings;  // [D, Hp, Wp]
    ArrayF32 global_feature;    // [D]
    ArrayI32 labels;            // [H, W], void = 255

    std::size_t members() const { return ensemble_logits.dim(0); }
    std::size_t classes() const { return ensemble_logits.dim(1); }
    std::size_t height() const { return ensemble_logits.dim(2); }
    std::size_t width() const { return ensemble_logits.dim(3); }
    std::size_t embed_dim() const { return patch_embeddings.dim(0); }

    bool operator==(const SceneBundle&) const = default;
};

struct SceneFiles {
    std::string scene_id;
    std::string logits;            // relative to the manifest directory
    std::string patch_embeddings;
    std::string global_feature;
    std::string labels;

    bool operator==(const SceneFiles&) const = default;
};

struct Manifest {
    std::string version = kManifestVersion;
    int class_count = 0;
    int void_label = kVoidLabel;
    int patch_size = 14;
    std::vector<SceneFiles> scenes;
    std::vector<std::string> bank_split;
    std::vector<std::string> eval_split;
    /// Directory the relative paths resolve against. Not serialized.
    std::filesystem::path root;

    const SceneFiles& scene(const std::string& scene_id) const;
    bool operator==(const Manifest& o) const {
        return version == o.version && class_count == o.class_count && void_label == o.void_label &&
               patch_size == o.patch_size && scenes == o.scenes && bank_split == o.bank_split &&
               eval_split == o.eval_split;
    }
};

std::string manifest_to_json(const Manifest& m);
/// Parses and checks structure: unique ids, splits reference known ids,
/// every referenced file exists. Tensor contents are checked by load_bundle.
Manifest manifest_from_json(const std::string& text, const std::filesystem::path& root);

Manifest load_manifest(const std::filesystem::path& manifest_path);
void save_manifest(const Manifest& m, const std::filesystem::path& manifest_path);

/// Check every SceneBundle invariant against the manifest; throws
/// ValidationError naming the first violation.
void validate_bundle(const SceneBundle& b, const Manifest& m);

SceneBundle load_bundle(const Manifest& m, const std::string& scene_id);

/// Writes the four tensors of `b` at the paths named in `files` (relative to
/// `root`), creating parent directories.
void write_bundle(const SceneBundle& b, const SceneFiles& files, const std::filesystem::path& root);

/// Loads every scene; returns the number validated.
std::size_t validate_dataset(const Manifest& m);

}  // namespace gatedseg
