#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "recme/dataset.hpp"
#include "recme/metrics.hpp"
#include "recme/model.hpp"
#include "recme/optimizer.hpp"

namespace recme {

enum class OptimizerKind { Adam, Sgd };

struct TrainingConfig {
    std::size_t batch_size = 32;
    LrSchedule schedule{};  // 1e-4, x0.7 every 250 steps
    std::size_t patience = 10;
    std::size_t max_epochs = 200;
    double noise_scale = 0.5;
    double split_ratio = 0.8;
    std::uint64_t seed = 42;
    double dropout_rate = 0.2;
    OptimizerKind optimizer = OptimizerKind::Adam;
    // Architecture template; num_classes comes from the dataset.
    ModelSpec model{};
};

void validate(const TrainingConfig& config);

// Independent RNG streams derived from config.seed.
struct DerivedSeeds {
    std::uint64_t init = 0;
    std::uint64_t split = 0;
    std::uint64_t train = 0;       // shuffling, augmentation, dropout
    std::uint64_t validation = 0;  // fixed validation augmentation, same every epoch
};

DerivedSeeds derive_seeds(std::uint64_t seed);

/// Clip -> model input row (FFT magnitudes).
std::vector<double> clip_features(const Clip& clip);

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    AdamMoments adam;
};

OptimizerState make_optimizer(const TrainingConfig& config, const ParamList& params);

struct EpochResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t steps = 0;
};

/// One pass over a shuffled copy of the training set in batches of
/// batch_size (last partial batch kept). Every batch: noise augmentation,
/// FFT features, forward, backward, optimizer update at lr_at_step(global_step).
/// Reported loss/accuracy are train-mode values averaged over clips.
EpochResult train_epoch(ModelState& state, const DatasetIndex& train_set, const TrainingConfig& config,
                        std::mt19937_64& rng, std::uint64_t& global_step, OptimizerState& optimizer);

struct Evaluation {
    double accuracy = 0.0;
    double loss = 0.0;
};

/// Inference-mode pass. Clips are noise-augmented from a stream seeded by
/// `seed`, so equal (state, set, seed) always give equal results.
Evaluation evaluate(const ModelState& state, const DatasetIndex& val_set, double noise_scale, std::uint64_t seed,
                    std::size_t batch_size = 32);

/// Patience-based early stopping on validation accuracy. Ties keep the
/// earlier epoch.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience);

    /// Returns true when `val_acc` is a new best.
    bool observe(std::size_t epoch, double val_acc);
    bool should_stop(std::size_t epoch) const;

    std::size_t best_epoch() const { return best_epoch_; }
    double best_value() const { return best_; }

private:
    std::size_t patience_;
    std::size_t best_epoch_ = 0;
    double best_ = -std::numeric_limits<double>::infinity();
};

struct FitResult {
    ModelState best;
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    std::vector<EpochMetrics> history;
    std::vector<HistogramSnapshot> histograms;
};

// Runs one epoch on the state in place and reports its metrics.
using EpochRunner = std::function<EpochMetrics(ModelState& state, std::size_t epoch)>;
using EpochCallback = std::function<void(const EpochMetrics&)>;

/// The early-stopping loop: run epochs until max_epochs or until patience
/// epochs pass without a new best validation accuracy, then hand back the
/// parameters recorded at the best epoch.
FitResult fit_loop(ModelState initial, std::size_t max_epochs, std::size_t patience, const EpochRunner& run_epoch,
                   const EpochCallback& on_epoch = {});

/// fit_loop with train_epoch + evaluate as the epoch body.
FitResult fit(ModelState initial, const DatasetSplit& splits, const TrainingConfig& config,
              const EpochCallback& on_epoch = {});

/// Splits a loaded dataset, initializes a fresh model sized to its registry
/// and fits it. Throws TooFewSpeakers when fewer than 2 speakers.
FitResult train_on_dataset(const DatasetIndex& index, const TrainingConfig& config, const EpochCallback& on_epoch = {});

/// Loads a dataset directory, splits it, initializes a fresh model sized to
/// the registry and fits it. Throws TooFewSpeakers when fewer than 2 speakers.
FitResult train_from_directory(const std::filesystem::path& root, const TrainingConfig& config,
                               const EpochCallback& on_epoch = {});

}  // namespace recme
