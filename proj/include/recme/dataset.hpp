#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "recme/audio_io.hpp"

namespace recme {

inline constexpr const char* kNoiseDirName = "_noise";
inline constexpr const char* kRegistryFileName = "registry.json";

struct LabeledClip {
    std::shared_ptr<const Clip> clip;
    std::size_t label = 0;
};

struct DatasetIndex {
    std::vector<LabeledClip> entries;
    std::vector<std::shared_ptr<const Clip>> noise_clips;
    std::vector<std::string> registry;  // class index -> speaker name

    std::size_t num_classes() const { return registry.size(); }
    std::vector<std::size_t> class_counts() const;
};

/// Speaker order of a dataset directory. Names recorded in registry.json keep
/// their position; any other speaker directories follow alphabetically.
/// Directories starting with '_' or '.' are not speakers.
std::vector<std::string> dataset_registry(const std::filesystem::path& root);

/// Rewrites registry.json atomically.
void write_registry(const std::filesystem::path& root, const std::vector<std::string>& names);

/// Loads every speaker directory as one class and clips every WAV file
/// (resampled to 16 kHz mono when needed). Throws EmptyDataset / UnreadableFile.
DatasetIndex build_dataset(const std::filesystem::path& root);

/// Clips all WAV files directly inside dir, sorted by file name.
std::vector<Clip> load_clips(const std::filesystem::path& dir);
std::vector<std::filesystem::path> wav_files(const std::filesystem::path& dir);

struct DatasetSplit {
    DatasetIndex train;
    DatasetIndex validation;
};

/// Per-class seeded shuffle; the first ceil(ratio * n) clips of each class go
/// to training (capped so validation keeps at least one). Throws ClassTooSmall.
DatasetSplit split(const DatasetIndex& index, double ratio, std::uint64_t seed);

/// out = clip + noise * (peak(clip) / peak(noise)) * scale, clamped to [-1, 1].
/// Silent noise leaves the clip unchanged.
Clip mix_noise(const Clip& clip, const Clip& noise, double scale);

/// Picks a random noise clip and a random scale in [0, noise_scale).
/// Identity (and no rng draws) when there is no noise or noise_scale is 0.
Clip augment_with_noise(const Clip& clip, const std::vector<std::shared_ptr<const Clip>>& noise_clips,
                        double noise_scale, std::mt19937_64& rng);

}  // namespace recme
