#include "recme/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>

#include "recme/error.hpp"

namespace recme {
namespace fs = std::filesystem;

namespace {

bool is_speaker_dir(const fs::directory_entry& e) {
    if (!e.is_directory()) return false;
    const std::string name = e.path().filename().string();
    return !name.empty() && name[0] != '_' && name[0] != '.';
}

bool has_wav_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".wav";
}

}  // namespace

std::vector<std::size_t> DatasetIndex::class_counts() const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (const auto& e : entries) ++counts.at(e.label);
    return counts;
}

std::vector<std::string> dataset_registry(const fs::path& root) {
    if (!fs::is_directory(root)) throw Error(ErrorKind::EmptyDataset, root.string() + " is not a directory");
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (is_speaker_dir(e)) dirs.push_back(e.path().filename().string());
    }
    std::sort(dirs.begin(), dirs.end());

    std::vector<std::string> order;
    const fs::path registry_file = root / kRegistryFileName;
    if (fs::exists(registry_file)) {
        std::ifstream in(registry_file);
        try {
            const auto j = nlohmann::json::parse(in);
            for (const auto& name : j.at("speakers")) {
                const auto s = name.get<std::string>();
                if (std::binary_search(dirs.begin(), dirs.end(), s) &&
                    std::find(order.begin(), order.end(), s) == order.end()) {
                    order.push_back(s);
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::UnreadableFile, registry_file.string() + ": " + e.what());
        }
    }
    for (const auto& d : dirs) {
        if (std::find(order.begin(), order.end(), d) == order.end()) order.push_back(d);
    }
    return order;
}

void write_registry(const fs::path& root, const std::vector<std::string>& names) {
    const fs::path target = root / kRegistryFileName;
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + tmp.string());
        out << nlohmann::json{{"speakers", names}}.dump(2) << '\n';
        if (!out) throw Error(ErrorKind::IoFailure, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot update registry: " + ec.message());
}

std::vector<fs::path> wav_files(const fs::path& dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) return files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && has_wav_extension(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<Clip> load_clips(const fs::path& dir) {
    std::vector<Clip> clips;
    for (const auto& file : wav_files(dir)) {
        PcmWave wave;
        try {
            wave = to_model_rate(read_wav_file(file));
        } catch (const Error& e) {
            throw Error(ErrorKind::UnreadableFile, e.what());
        }
        auto part = clip_into_seconds(wave, file.filename().string());
        std::move(part.begin(), part.end(), std::back_inserter(clips));
    }
    return clips;
}

DatasetIndex build_dataset(const fs::path& root) {
    DatasetIndex index;
    index.registry = dataset_registry(root);
    if (index.registry.empty()) throw Error(ErrorKind::EmptyDataset, "no speaker directories under " + root.string());
    for (std::size_t label = 0; label < index.registry.size(); ++label) {
        auto clips = load_clips(root / index.registry[label]);
        if (clips.empty()) {
            throw Error(ErrorKind::EmptyDataset, "speaker " + index.registry[label] + " has no full-second clips");
        }
        for (auto& c : clips) {
            index.entries.push_back({std::make_shared<const Clip>(std::move(c)), label});
        }
    }
    for (auto& c : load_clips(root / kNoiseDirName)) {
        index.noise_clips.push_back(std::make_shared<const Clip>(std::move(c)));
    }
    return index;
}

DatasetSplit split(const DatasetIndex& index, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorKind::InvalidArgument, "split ratio must be in (0, 1)");
    DatasetSplit out;
    out.train.registry = out.validation.registry = index.registry;
    out.train.noise_clips = out.validation.noise_clips = index.noise_clips;

    std::mt19937_64 rng(seed);
    for (std::size_t label = 0; label < index.num_classes(); ++label) {
        std::vector<LabeledClip> members;
        for (const auto& e : index.entries) {
            if (e.label == label) members.push_back(e);
        }
        if (members.size() < 2) {
            throw Error(ErrorKind::ClassTooSmall, "speaker " + index.registry[label] + " needs at least 2 clips");
        }
        std::shuffle(members.begin(), members.end(), rng);
        // The epsilon absorbs representation error in ratio * n (0.8 * 60 must give 48).
        auto n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(members.size()) - 1e-9));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < n_train ? out.train : out.validation).entries.push_back(members[i]);
        }
    }
    return out;
}

Clip mix_noise(const Clip& clip, const Clip& noise, double scale) {
    const double noise_peak = peak_amplitude(noise.samples);
    if (noise_peak == 0.0 || scale == 0.0) return clip;
    const double gain = peak_amplitude(clip.samples) / noise_peak * scale;
    Clip out = clip;
    const std::size_t n = std::min(out.samples.size(), noise.samples.size());
    for (std::size_t i = 0; i < n; ++i) {
        out.samples[i] = std::clamp(out.samples[i] + noise.samples[i] * gain, -1.0, 1.0);
    }
    return out;
}

Clip augment_with_noise(const Clip& clip, const std::vector<std::shared_ptr<const Clip>>& noise_clips,
                        double noise_scale, std::mt19937_64& rng) {
    if (noise_clips.empty() || noise_scale <= 0.0) return clip;
    std::uniform_int_distribution<std::size_t> pick(0, noise_clips.size() - 1);
    std::uniform_real_distribution<double> scale(0.0, noise_scale);
    const std::size_t which = pick(rng);
    const double s = scale(rng);
    return mix_noise(clip, *noise_clips[which], s);
}

}  // namespace recme
