#include "recme/training.hpp"

#include <algorithm>
#include <numeric>

#include "recme/error.hpp"
#include "recme/features.hpp"

namespace recme {
namespace {

// Independent sub-streams from one user seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kInitStream, kSplitStream, kTrainStream, kValidationStream };

std::size_t argmax_row(const Tensor& probs, std::size_t row) {
    const std::size_t classes = probs.dim(1);
    const double* p = probs.data() + row * classes;
    return static_cast<std::size_t>(std::max_element(p, p + classes) - p);
}

}  // namespace

DerivedSeeds derive_seeds(std::uint64_t seed) {
    return {derive_seed(seed, kInitStream), derive_seed(seed, kSplitStream), derive_seed(seed, kTrainStream),
            derive_seed(seed, kValidationStream)};
}

void validate(const TrainingConfig& config) {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
    if (config.batch_size == 0) fail("batch_size must be >= 1");
    if (config.patience == 0) fail("patience must be >= 1");
    if (config.max_epochs == 0) fail("max_epochs must be >= 1");
    if (config.schedule.decay_every_steps == 0) fail("decay_every_steps must be >= 1");
    if (!(config.schedule.lr0 > 0.0)) fail("lr0 must be positive");
    if (!(config.split_ratio > 0.0 && config.split_ratio < 1.0)) fail("split_ratio must be in (0, 1)");
    if (!(config.noise_scale >= 0.0)) fail("noise_scale must be >= 0");
    if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
}

std::vector<double> clip_features(const Clip& clip) { return rfft_magnitude(clip).bins; }

OptimizerState make_optimizer(const TrainingConfig& config, const ParamList& params) {
    OptimizerState s;
    s.kind = config.optimizer;
    if (s.kind == OptimizerKind::Adam) s.adam = adam_init(params);
    return s;
}

EpochResult train_epoch(ModelState& state, const DatasetIndex& train_set, const TrainingConfig& config,
                        std::mt19937_64& rng, std::uint64_t& global_step, OptimizerState& optimizer) {
    if (train_set.entries.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
    std::vector<std::size_t> order(train_set.entries.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    EpochResult result;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
        const std::size_t last = std::min(order.size(), first + config.batch_size);
        std::vector<std::vector<double>> rows;
        std::vector<std::size_t> labels;
        for (std::size_t i = first; i < last; ++i) {
            const LabeledClip& e = train_set.entries[order[i]];
            rows.push_back(clip_features(augment_with_noise(*e.clip, train_set.noise_clips, config.noise_scale, rng)));
            labels.push_back(e.label);
        }
        const ForwardResult fwd = forward(state, stack_rows(rows), Mode::Train, &rng);
        loss_sum += mean_loss(fwd, labels) * static_cast<double>(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) correct += argmax_row(fwd.probs, i) == labels[i];

        const ParamList grads = backward(state, fwd, labels);
        const double lr = lr_at_step(global_step, config.schedule);
        if (optimizer.kind == OptimizerKind::Adam) {
            adam_step(state.params, grads, lr, optimizer.adam);
        } else {
            sgd_step(state.params, grads, lr);
        }
        ++global_step;
        ++result.steps;
    }
    result.loss = loss_sum / static_cast<double>(order.size());
    result.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    return result;
}

Evaluation evaluate(const ModelState& state, const DatasetIndex& val_set, double noise_scale, std::uint64_t seed,
                    std::size_t batch_size) {
    if (val_set.entries.empty()) throw Error(ErrorKind::EmptyDataset, "validation set is empty");
    if (batch_size == 0) batch_size = 1;
    std::mt19937_64 rng(seed);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto& entries = val_set.entries;
    for (std::size_t first = 0; first < entries.size(); first += batch_size) {
        const std::size_t last = std::min(entries.size(), first + batch_size);
        std::vector<std::vector<double>> rows;
        std::vector<std::size_t> labels;
        for (std::size_t i = first; i < last; ++i) {
            rows.push_back(clip_features(augment_with_noise(*entries[i].clip, val_set.noise_clips, noise_scale, rng)));
            labels.push_back(entries[i].label);
        }
        const ForwardResult fwd = forward(state, stack_rows(rows), Mode::Infer);
        loss_sum += mean_loss(fwd, labels) * static_cast<double>(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) correct += argmax_row(fwd.probs, i) == labels[i];
    }
    const auto n = static_cast<double>(entries.size());
    return {static_cast<double>(correct) / n, loss_sum / n};
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
    if (patience == 0) throw Error(ErrorKind::InvalidArgument, "patience must be >= 1");
}

bool EarlyStopping::observe(std::size_t epoch, double val_acc) {
    if (val_acc > best_) {
        best_ = val_acc;
        best_epoch_ = epoch;
        return true;
    }
    return false;
}

bool EarlyStopping::should_stop(std::size_t epoch) const { return epoch - best_epoch_ >= patience_; }

FitResult fit_loop(ModelState initial, std::size_t max_epochs, std::size_t patience, const EpochRunner& run_epoch,
                   const EpochCallback& on_epoch) {
    EarlyStopping stopper(patience);
    FitResult result;
    result.best = initial;
    ModelState state = std::move(initial);
    for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
        EpochMetrics m = run_epoch(state, epoch);
        m.epoch = epoch;
        result.history.push_back(m);
        result.histograms.push_back(compute_histogram(epoch, "output.weight", state.param("output.weight")));
        result.histograms.push_back(compute_histogram(epoch, "output.bias", state.param("output.bias")));
        if (stopper.observe(epoch, m.val_acc)) result.best = state;
        if (on_epoch) on_epoch(m);
        if (stopper.should_stop(epoch)) break;
    }
    result.best_epoch = stopper.best_epoch();
    result.best_val_acc = stopper.best_value();
    return result;
}

FitResult fit(ModelState initial, const DatasetSplit& splits, const TrainingConfig& config,
              const EpochCallback& on_epoch) {
    validate(config);
    check_model(initial);
    if (splits.train.registry != initial.registry) {
        throw Error(ErrorKind::InvalidModel, "model registry does not match the dataset");
    }
    const DerivedSeeds seeds = derive_seeds(config.seed);
    std::mt19937_64 rng(seeds.train);
    const std::uint64_t val_seed = seeds.validation;
    std::uint64_t global_step = 0;
    OptimizerState optimizer = make_optimizer(config, initial.params);

    auto run = [&](ModelState& state, std::size_t epoch) {
        const EpochResult train = train_epoch(state, splits.train, config, rng, global_step, optimizer);
        const Evaluation val = evaluate(state, splits.validation, config.noise_scale, val_seed, config.batch_size);
        EpochMetrics m;
        m.epoch = epoch;
        m.global_step = global_step;
        m.train_loss = train.loss;
        m.train_acc = train.accuracy;
        m.val_loss = val.loss;
        m.val_acc = val.accuracy;
        m.lr = lr_at_step(global_step, config.schedule);
        return m;
    };
    return fit_loop(std::move(initial), config.max_epochs, config.patience, run, on_epoch);
}

FitResult train_from_directory(const std::filesystem::path& root, const TrainingConfig& config,
                               const EpochCallback& on_epoch) {
    validate(config);
    return train_on_dataset(build_dataset(root), config, on_epoch);
}

FitResult train_on_dataset(const DatasetIndex& index, const TrainingConfig& config, const EpochCallback& on_epoch) {
    validate(config);
    if (index.num_classes() < 2) {
        throw Error(ErrorKind::TooFewSpeakers, "training needs at least 2 speakers, found " +
                                                   std::to_string(index.num_classes()));
    }
    const DerivedSeeds seeds = derive_seeds(config.seed);
    const DatasetSplit splits = split(index, config.split_ratio, seeds.split);
    ModelSpec spec = config.model;
    spec.dropout_rate = config.dropout_rate;
    spec = build_model(index.num_classes(), spec);
    ModelState state = make_model(spec, index.registry, seeds.init);
    return fit(std::move(state), splits, config, on_epoch);
}

}  // namespace recme
