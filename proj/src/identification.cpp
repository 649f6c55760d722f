#include "recme/identification.hpp"

#include <algorithm>
#include <cstdio>

#include "recme/dataset.hpp"
#include "recme/error.hpp"
#include "recme/training.hpp"

namespace recme {
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kIdentifyBatch = 32;

void check_name(const std::string& name) {
    if (name.empty()) throw Error(ErrorKind::InvalidArgument, "speaker name must not be empty");
    if (name.front() == '_' || name.front() == '.') {
        throw Error(ErrorKind::InvalidArgument, "speaker name must not start with '_' or '.'");
    }
    if (name.find_first_of("/\\") != std::string::npos || name.size() > 128) {
        throw Error(ErrorKind::InvalidArgument, "speaker name is not a usable directory name");
    }
}

}  // namespace

PredictionResult decide(std::vector<std::vector<double>> per_clip, const std::vector<std::string>& registry,
                        double threshold) {
    if (per_clip.empty()) throw Error(ErrorKind::TooShort, "no clips to vote on");
    const std::size_t classes = registry.size();
    PredictionResult r;
    r.votes.assign(classes, 0);
    for (const auto& probs : per_clip) {
        if (probs.size() != classes) throw Error(ErrorKind::InvalidModel, "probability row width differs from registry");
        const auto top = std::max_element(probs.begin(), probs.end()) - probs.begin();
        ++r.votes[static_cast<std::size_t>(top)];
    }
    // max_element returns the first maximum, i.e. the lowest class index on ties.
    r.winner = static_cast<std::size_t>(std::max_element(r.votes.begin(), r.votes.end()) - r.votes.begin());
    double sum = 0.0;
    for (const auto& probs : per_clip) sum += probs[r.winner];
    r.confidence = sum / static_cast<double>(per_clip.size());
    r.known = r.confidence >= threshold;
    r.speaker = registry[r.winner];
    r.per_clip = std::move(per_clip);
    return r;
}

PredictionResult identify(const ModelState& state, const PcmWave& wave, double threshold) {
    check_model(state);
    const auto clips = clip_into_seconds(to_model_rate(wave), "identify");
    if (clips.empty()) throw Error(ErrorKind::TooShort, "recording is shorter than one second");

    std::vector<std::vector<double>> per_clip;
    const std::size_t classes = state.spec.num_classes;
    for (std::size_t first = 0; first < clips.size(); first += kIdentifyBatch) {
        const std::size_t last = std::min(clips.size(), first + kIdentifyBatch);
        std::vector<std::vector<double>> rows;
        for (std::size_t i = first; i < last; ++i) rows.push_back(clip_features(clips[i]));
        const ForwardResult fwd = forward(state, stack_rows(rows), Mode::Infer);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* p = fwd.probs.data() + i * classes;
            per_clip.emplace_back(p, p + classes);
        }
    }
    return decide(std::move(per_clip), state.registry, threshold);
}

Directive next_action(const PredictionResult& result, std::optional<Verification> answer) {
    using Action = Directive::Action;
    if (result.known) return {Action::Continue, result.speaker, false};
    if (!answer) return {Action::RequestVerification, std::nullopt, false};
    if (*answer == Verification::Confirmed) return {Action::Continue, result.speaker, true};
    return {Action::StartEnrollment, std::nullopt, false};
}

Directive decision_loop(const ModelState& state, const PcmWave& wave, double threshold,
                        std::optional<Verification> answer) {
    return next_action(identify(state, wave, threshold), answer);
}

EnrollmentOutcome enroll(const fs::path& root, const EnrollmentRequest& request) {
    check_name(request.name);
    fs::create_directories(root);
    std::vector<std::string> registry = dataset_registry(root);
    if (std::find(registry.begin(), registry.end(), request.name) != registry.end() || fs::exists(root / request.name)) {
        throw Error(ErrorKind::DuplicateName, "speaker " + request.name + " is already enrolled");
    }
    const auto clips = clip_into_seconds(to_model_rate(request.wave), request.name);
    if (clips.size() < kMinEnrollSeconds) {
        throw Error(ErrorKind::TooShort, "enrollment needs at least " + std::to_string(kMinEnrollSeconds) +
                                             " seconds of audio, got " + std::to_string(clips.size()));
    }

    // Stage in a hidden directory and rename so a failure never leaves a half-written speaker.
    const fs::path staging = root / ("." + request.name + ".staging");
    fs::remove_all(staging);
    fs::create_directories(staging);
    try {
        for (const auto& clip : clips) {
            char file[32];
            std::snprintf(file, sizeof file, "clip_%04zu.wav", clip.index);
            write_wav_file(staging / file, PcmWave{kSampleRate, 1, clip.samples});
        }
        fs::rename(staging, root / request.name);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }

    registry.push_back(request.name);
    write_registry(root, registry);
    return {registry.size() - 1, clips.size(), registry, true};
}

}  // namespace recme
