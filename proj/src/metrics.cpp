#include "recme/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "recme/error.hpp"

namespace recme {
namespace {

using json = nlohmann::json;

template <typename Record, typename Parse>
std::vector<Record> read_lines(const std::filesystem::path& path, Parse parse) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    std::vector<Record> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(parse(line));
    }
    return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

}  // namespace

HistogramSnapshot compute_histogram(std::size_t epoch, const std::string& layer, const Tensor& values) {
    HistogramSnapshot h{epoch, layer, {}, std::vector<std::uint64_t>(kHistogramBins, 0)};
    if (values.size() == 0) throw Error(ErrorKind::InvalidArgument, "histogram of an empty tensor");
    auto [lo_it, hi_it] = std::minmax_element(values.storage().begin(), values.storage().end());
    double lo = *lo_it;
    double hi = *hi_it;
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(kHistogramBins);
    h.edges.resize(kHistogramBins + 1);
    for (std::size_t i = 0; i <= kHistogramBins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
    h.edges.back() = hi;
    for (double v : values.values()) {
        auto bin = static_cast<std::size_t>((v - lo) / width);
        ++h.counts[std::min(bin, kHistogramBins - 1)];
    }
    return h;
}

std::string metrics_record(const EpochMetrics& m) {
    return json{{"epoch", m.epoch},           {"global_step", m.global_step}, {"train_loss", m.train_loss},
                {"train_acc", m.train_acc},   {"val_loss", m.val_loss},       {"val_acc", m.val_acc},
                {"lr", m.lr}}
        .dump();
}

std::string histogram_record(const HistogramSnapshot& h) {
    return json{{"epoch", h.epoch}, {"layer", h.layer}, {"edges", h.edges}, {"counts", h.counts}}.dump();
}

EpochMetrics parse_metrics_record(const std::string& line) {
    try {
        const auto j = json::parse(line);
        return {j.at("epoch").get<std::size_t>(),   j.at("global_step").get<std::uint64_t>(),
                j.at("train_loss").get<double>(),   j.at("train_acc").get<double>(),
                j.at("val_loss").get<double>(),     j.at("val_acc").get<double>(),
                j.at("lr").get<double>()};
    } catch (const json::exception& e) {
        throw Error(ErrorKind::UnreadableFile, std::string("bad metrics record: ") + e.what());
    }
}

HistogramSnapshot parse_histogram_record(const std::string& line) {
    try {
        const auto j = json::parse(line);
        return {j.at("epoch").get<std::size_t>(), j.at("layer").get<std::string>(),
                j.at("edges").get<std::vector<double>>(), j.at("counts").get<std::vector<std::uint64_t>>()};
    } catch (const json::exception& e) {
        throw Error(ErrorKind::UnreadableFile, std::string("bad histogram record: ") + e.what());
    }
}

MetricsPaths metrics_paths_for(const std::filesystem::path& checkpoint) {
    auto metrics = checkpoint;
    metrics += ".metrics.jsonl";
    auto histograms = checkpoint;
    histograms += ".histograms.jsonl";
    return {metrics, histograms};
}

void export_metrics(const std::vector<EpochMetrics>& metrics, const std::vector<HistogramSnapshot>& histograms,
                    const MetricsPaths& paths) {
    if (metrics.empty()) throw Error(ErrorKind::InvalidArgument, "no metrics to export");
    std::vector<std::string> lines;
    for (const auto& m : metrics) lines.push_back(metrics_record(m));
    write_lines(paths.metrics, lines);
    lines.clear();
    for (const auto& h : histograms) lines.push_back(histogram_record(h));
    write_lines(paths.histograms, lines);
}

std::vector<EpochMetrics> read_metrics(const std::filesystem::path& path) {
    return read_lines<EpochMetrics>(path, parse_metrics_record);
}

std::vector<HistogramSnapshot> read_histograms(const std::filesystem::path& path) {
    return read_lines<HistogramSnapshot>(path, parse_histogram_record);
}

}  // namespace recme
