#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sci/common.hpp"
#include "sci/rng.hpp"

namespace sci {

/// Camera/outfit layout presets. Ltcc: every outfit appears under every
/// camera. Prcc: cameras 0 and 1 share outfit 0, the remaining camera holds
/// the other outfits.
enum class CameraPreset { Ltcc, Prcc };

enum class Split { Train, Query, Gallery };

std::string to_string(CameraPreset preset);
std::string to_string(Split split);
CameraPreset camera_preset_from_string(const std::string& name);
Split split_from_string(const std::string& name);

struct SynthConfig {
    int num_pids = 8;
    int outfits_per_pid = 3;
    int cams = 3;
    int images_per = 4; // images per (pid, outfit, cam) cell
    int height = 32;
    int width = 16;
    float id_signal = 0.6f;  // in [0,1]
    float clo_signal = 0.8f; // in [0,1]
    float noise_sigma = 0.1f;
    CameraPreset preset = CameraPreset::Ltcc;
    uint64_t seed = 1;

    void validate() const; // ContractError naming the offending field
};

struct SampleMeta {
    int pid = 0;
    int clothes_id = 0; // global outfit class, belongs to exactly one pid
    int camera_id = 0;
    Split split = Split::Train;
};

/// Generated dataset: metadata plus one flat row-major H×W×3 f32 image blob.
struct Dataset {
    SynthConfig config;
    std::vector<SampleMeta> meta;
    std::vector<float> images;

    int image_numel() const { return config.height * config.width * 3; }
    int size() const { return static_cast<int>(meta.size()); }
    std::span<const float> image(int i) const;
    std::vector<int> split_indices(Split split) const;
    std::vector<int> pids_in_split(Split split) const; // sorted, distinct
    int num_clothes() const;                           // distinct clothes classes

    bool operator==(const Dataset& other) const;
};

/// Deterministic synthetic generator: identity patterns live on the head and
/// leg bands, clothing patterns on the torso band, cameras add a channel
/// tint, plus Gaussian pixel noise. Identical config -> identical bytes.
Dataset generate(const SynthConfig& config);

struct PkBatch {
    int p = 0;
    int k = 0;
    std::vector<int> indices; // p*k dataset indices, grouped by identity
};

/// P distinct train identities, K samples each (with replacement only when
/// an identity has fewer than K train images).
PkBatch pk_sample(const Dataset& dataset, int p, int k, Rng& rng);

/// On-disk format: <dir>/manifest.json + <dir>/images.f32le (little-endian).
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace sci
