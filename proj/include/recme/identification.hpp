#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recme/audio_io.hpp"
#include "recme/model.hpp"

namespace recme {

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr std::size_t kMinEnrollSeconds = 30;

struct PredictionResult {
    std::vector<std::vector<double>> per_clip;  // class probabilities per clip
    std::vector<std::size_t> votes;             // per class
    std::size_t winner = 0;
    double confidence = 0.0;  // mean probability of the winner over clips
    bool known = false;
    std::string speaker;  // registry[winner]; the best guess even when unknown
};

/// Majority vote over per-clip probability rows. Ties go to the lowest class
/// index; the decision is Known iff confidence >= threshold.
PredictionResult decide(std::vector<std::vector<double>> per_clip, const std::vector<std::string>& registry,
                        double threshold);

/// Downmix, resample to 16 kHz, clip, then classify every clip.
/// Throws TooShort when no full second is available and InvalidModel for a bad state.
PredictionResult identify(const ModelState& state, const PcmWave& wave, double threshold = kDefaultThreshold);

enum class Verification { Confirmed, Rejected };

struct Directive {
    enum class Action { Continue, RequestVerification, StartEnrollment };
    Action action = Action::Continue;
    std::optional<std::string> speaker;  // set for Continue
    bool overridden = false;             // Continue after the user confirmed a low-confidence guess
};

/// One turn of the application flow: known speakers continue; an unknown
/// verdict asks the user, who either confirms the guess or starts enrollment.
Directive next_action(const PredictionResult& result, std::optional<Verification> answer = std::nullopt);

Directive decision_loop(const ModelState& state, const PcmWave& wave, double threshold,
                        std::optional<Verification> answer = std::nullopt);

struct EnrollmentRequest {
    std::string name;
    PcmWave wave;
};

struct EnrollmentOutcome {
    std::size_t class_index = 0;
    std::size_t clips_added = 0;
    std::vector<std::string> registry;
    bool retrain_needed = true;
};

/// Stores the preprocessed clips under <root>/<name>/ and appends the name to
/// the registry. Nothing is written when validation fails.
/// Throws DuplicateName, TooShort or InvalidArgument (unusable name).
EnrollmentOutcome enroll(const std::filesystem::path& root, const EnrollmentRequest& request);

}  // namespace recme
