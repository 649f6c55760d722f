#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recme/tensor.hpp"

namespace recme {

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    std::uint64_t global_step = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

inline constexpr std::size_t kHistogramBins = 50;

struct HistogramSnapshot {
    std::size_t epoch = 0;
    std::string layer;
    std::vector<double> edges;          // kHistogramBins + 1
    std::vector<std::uint64_t> counts;  // kHistogramBins

    friend bool operator==(const HistogramSnapshot&, const HistogramSnapshot&) = default;
};

/// Uniform bins over [min, max] of the tensor; the maximum lands in the last
/// bin. A constant tensor gets a unit-wide range centred on its value.
HistogramSnapshot compute_histogram(std::size_t epoch, const std::string& layer, const Tensor& values);

// One JSON object per line.
std::string metrics_record(const EpochMetrics& m);
std::string histogram_record(const HistogramSnapshot& h);
EpochMetrics parse_metrics_record(const std::string& line);
HistogramSnapshot parse_histogram_record(const std::string& line);

struct MetricsPaths {
    std::filesystem::path metrics;
    std::filesystem::path histograms;
};

/// Metrics files that sit next to a checkpoint: <model>.metrics.jsonl and <model>.histograms.jsonl.
MetricsPaths metrics_paths_for(const std::filesystem::path& checkpoint);

void export_metrics(const std::vector<EpochMetrics>& metrics, const std::vector<HistogramSnapshot>& histograms,
                    const MetricsPaths& paths);
std::vector<EpochMetrics> read_metrics(const std::filesystem::path& path);
std::vector<HistogramSnapshot> read_histograms(const std::filesystem::path& path);

}  // namespace recme
