#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "recme/identification.hpp"
#include "recme/metrics.hpp"
#include "recme/model.hpp"
#include "recme/training.hpp"

namespace recme {

inline constexpr int kDefaultPort = 7878;
inline constexpr std::size_t kMaxWavBytes = 64u << 20;

struct ServiceOptions {
    std::filesystem::path data_dir;
    std::filesystem::path model_path;  // empty: <data_dir>/model.rsid
    std::filesystem::path static_dir;  // empty: a placeholder page at /
    std::string host = "127.0.0.1";
    int port = kDefaultPort;  // 0 picks a free port
    TrainingConfig train_defaults{};
};

enum class JobState { Idle, Running, Done, Failed };

std::string to_string(JobState s);

struct TrainJobStatus {
    JobState state = JobState::Idle;
    std::string job_id;
    std::size_t current_epoch = 0;
    std::size_t max_epochs = 0;
    double best_val_acc = 0.0;
    std::size_t best_epoch = 0;
    std::string started_at;   // ISO 8601 UTC
    std::string finished_at;  // empty while running
    std::string error;        // set when failed
};

/// Base64 via OpenSSL. decode throws InvalidArgument on malformed input;
/// a leading "data:...;base64," prefix and embedded whitespace are accepted.
std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Applies a JSON object of overrides to `base`. Keys: seed, batch_size,
/// max_epochs, patience, lr0, decay_factor, decay_every_steps, noise_scale,
/// split_ratio, dropout_rate, optimizer ("adam" | "sgd"), block_filters,
/// dense_sizes. Unknown keys or bad values throw InvalidArgument.
TrainingConfig apply_train_overrides(const TrainingConfig& base, const std::string& json_body);

std::string prediction_json(const PredictionResult& result, double threshold);
std::string status_json(const TrainJobStatus& status);
std::string metrics_json(const std::vector<EpochMetrics>& history, const std::vector<HistogramSnapshot>& histograms);

/// Local HTTP front end. Identification reads an immutable model snapshot;
/// enrollment and the training job's dataset load share one writer lock; a
/// finished job persists its checkpoint and then swaps the snapshot.
///
///   GET  /health          GET  /speakers      POST /speakers
///   POST /identify        POST /train         GET  /train/status
///   GET  /metrics         GET  /model         GET  / (static console)
class Service {
public:
    /// Loads model_path when it exists (throws on a corrupt checkpoint).
    explicit Service(ServiceOptions options);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    /// Throws IoFailure when the address cannot be bound.
    int start();
    /// Blocks serving on the calling thread until stop().
    void run();
    void stop();

    std::shared_ptr<const ModelState> model() const;
    TrainJobStatus train_status() const;
    /// Waits for a running training job to finish.
    void wait_for_training();

    const ServiceOptions& options() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace recme
