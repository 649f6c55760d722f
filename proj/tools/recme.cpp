// recme command-line front end.
//
// Exit codes: 0 success, 1 domain error, 2 usage error. Human output goes to
// stdout and diagnostics to stderr; --json prints exactly one JSON record.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>

#include "recme/audio_io.hpp"
#include "recme/checkpoint.hpp"
#include "recme/dataset.hpp"
#include "recme/error.hpp"
#include "recme/gradcheck.hpp"
#include "recme/identification.hpp"
#include "recme/metrics.hpp"
#include "recme/service.hpp"
#include "recme/synth.hpp"
#include "recme/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace recme;

namespace {

constexpr double kGradTolerance = 1e-4;

struct Options {
    bool json = false;

    fs::path in, out, data, model, wav, static_dir;
    int rate = kSampleRate;

    std::size_t speakers = 5, seconds = 60, noise_seconds = 10;
    std::uint64_t seed = 42;

    std::size_t batch_size = 32, max_epochs = 200, patience = 10;
    double lr = 1e-4, noise_scale = 0.5, split_ratio = 0.8, dropout = 0.2;
    std::vector<std::size_t> block_filters{16, 32, 64, 128};
    std::vector<std::size_t> dense_sizes{256, 128};

    double threshold = kDefaultThreshold;
    std::string name, host = "127.0.0.1";
    int port = kDefaultPort;
};

// Either prints the human text or stashes the record for --json.
struct Output {
    bool json_mode = false;
    json record = json::object();

    void say(const std::string& line) const {
        if (!json_mode) std::cout << line << '\n';
    }
    void progress(const std::string& line) const { (json_mode ? std::cerr : std::cout) << line << '\n' << std::flush; }
};

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

int run_preprocess(const Options& o, Output& out) {
    // The input root and each of its subdirectories map one-to-one onto the output.
    std::vector<fs::path> dirs{o.in};
    for (const auto& e : fs::directory_iterator(o.in)) {
        if (e.is_directory() && !e.path().filename().string().starts_with('.')) dirs.push_back(e.path());
    }
    std::sort(dirs.begin() + 1, dirs.end());

    std::size_t files = 0, clips = 0;
    for (const auto& dir : dirs) {
        const auto wavs = wav_files(dir);
        if (wavs.empty()) continue;
        const fs::path target = o.out / fs::relative(dir, o.in);
        fs::create_directories(target);
        for (const auto& file : wavs) {
            PcmWave wave;
            try {
                wave = resample(downmix_mono(read_wav_file(file)), o.rate);
            } catch (const Error& e) {
                throw Error(ErrorKind::UnreadableFile, file.string() + ": " + e.what());
            }
            const std::size_t len = static_cast<std::size_t>(o.rate);
            const std::size_t count = wave.samples.size() / len;
            for (std::size_t i = 0; i < count; ++i) {
                const auto first = wave.samples.begin() + static_cast<std::ptrdiff_t>(i * len);
                char suffix[32];
                std::snprintf(suffix, sizeof suffix, "_%04zu.wav", i);
                write_wav_file(target / (file.stem().string() + suffix),
                               PcmWave{o.rate, 1, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len))});
            }
            ++files;
            clips += count;
            out.say(file.string() + ": " + std::to_string(count) + " clips");
        }
    }
    if (files == 0) throw Error(ErrorKind::EmptyDataset, "no audio found in " + o.in.string());
    out.say("wrote " + std::to_string(clips) + " clips from " + std::to_string(files) + " files to " + o.out.string());
    out.record = {{"files", files}, {"clips", clips}, {"out", o.out.string()}};
    return 0;
}

int run_synth(const Options& o, Output& out) {
    synth::SynthOptions s;
    s.num_speakers = o.speakers;
    s.seconds_per_speaker = o.seconds;
    s.noise_seconds = o.noise_seconds;
    s.seed = o.seed;
    const auto profiles = synth::synth_dataset(s, o.out);
    json list = json::array();
    for (const auto& p : profiles) {
        out.say(p.name + ": formants " + fixed(p.formants[0], 1) + " " + fixed(p.formants[1], 1) + " " +
                fixed(p.formants[2], 1) + " Hz");
        list.push_back({{"name", p.name}, {"formants", p.formants}, {"amplitudes", p.amplitudes}});
    }
    out.say("wrote " + std::to_string(profiles.size()) + " speakers and " + std::to_string(synth::kNoiseKinds.size()) +
            " noise files to " + o.out.string());
    out.record = {{"out", o.out.string()}, {"speakers", list}};
    return 0;
}

TrainingConfig training_config(const Options& o) {
    TrainingConfig c;
    c.seed = o.seed;
    c.batch_size = o.batch_size;
    c.max_epochs = o.max_epochs;
    c.patience = o.patience;
    c.schedule.lr0 = o.lr;
    c.noise_scale = o.noise_scale;
    c.split_ratio = o.split_ratio;
    c.dropout_rate = o.dropout;
    c.model.block_filters = o.block_filters;
    c.model.dense_sizes = o.dense_sizes;
    validate(c);
    try {
        ModelSpec probe = c.model;
        probe.dropout_rate = c.dropout_rate;
        validate(probe);
    } catch (const Error& e) {
        throw Error(ErrorKind::InvalidArgument, e.what());
    }
    return c;
}

int run_train(const Options& o, Output& out) {
    const TrainingConfig config = training_config(o);
    const auto start = std::chrono::steady_clock::now();
    auto on_epoch = [&](const EpochMetrics& m) {
        out.progress("epoch " + std::to_string(m.epoch) + "  loss " + fixed(m.train_loss) + "  acc " +
                     fixed(m.train_acc) + "  val_loss " + fixed(m.val_loss) + "  val_acc " + fixed(m.val_acc) +
                     "  lr " + std::to_string(m.lr));
    };
    const FitResult result = train_from_directory(o.data, config, on_epoch);
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    save_checkpoint(result.best, o.out);
    const MetricsPaths paths = metrics_paths_for(o.out);
    export_metrics(result.history, result.histograms, paths);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    out.say("best val_acc " + fixed(result.best_val_acc) + " at epoch " + std::to_string(result.best_epoch) + " (" +
            std::to_string(result.history.size()) + " epochs, " + fixed(seconds, 1) + " s)");
    out.say("wrote " + o.out.string() + ", " + paths.metrics.string() + ", " + paths.histograms.string());
    out.record = {{"best_val_acc", result.best_val_acc},
                  {"best_epoch", result.best_epoch},
                  {"epochs", result.history.size()},
                  {"registry", result.best.registry},
                  {"model", o.out.string()},
                  {"metrics", paths.metrics.string()},
                  {"histograms", paths.histograms.string()},
                  {"seconds", seconds}};
    return 0;
}

int run_identify(const Options& o, Output& out) {
    const ModelState state = load_checkpoint(o.model);
    const PredictionResult r = identify(state, read_wav_file(o.wav), o.threshold);
    const Directive next = next_action(r);

    out.say("speaker    " + r.speaker + (r.known ? "" : " (unknown: below threshold)"));
    out.say("confidence " + fixed(r.confidence) + " (threshold " + fixed(o.threshold, 2) + ")");
    out.say("decision   " + std::string(r.known ? "known" : "unknown"));
    out.say("");
    out.say("clip  vote");
    for (std::size_t i = 0; i < r.per_clip.size(); ++i) {
        const auto& p = r.per_clip[i];
        const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        char line[256];
        std::snprintf(line, sizeof line, "%4zu  %-20s %.4f", i, state.registry[top].c_str(), p[top]);
        out.say(line);
    }
    out.say("");
    for (std::size_t c = 0; c < r.votes.size(); ++c) {
        out.say("votes " + state.registry[c] + ": " + std::to_string(r.votes[c]));
    }
    if (next.action == Directive::Action::RequestVerification) {
        out.say("next: ask whether this is " + r.speaker + "; enroll the speaker if not");
    }
    out.record = json::parse(prediction_json(r, o.threshold));
    return 0;
}

int run_enroll(const Options& o, Output& out) {
    const EnrollmentOutcome e = enroll(o.data, {o.name, read_wav_file(o.wav)});
    out.say("enrolled " + o.name + " as class " + std::to_string(e.class_index) + " with " +
            std::to_string(e.clips_added) + " clips; retrain to include the new speaker");
    out.record = {{"name", o.name},
                  {"class_index", e.class_index},
                  {"clips_added", e.clips_added},
                  {"registry", e.registry},
                  {"retrain_needed", e.retrain_needed}};
    return 0;
}

int run_serve(const Options& o, Output& out) {
    ServiceOptions s;
    s.data_dir = o.data;
    s.model_path = o.model;
    s.static_dir = o.static_dir;
    s.host = o.host;
    s.port = o.port;
    s.train_defaults = training_config(o);

    // Signals are taken synchronously on this thread; worker threads inherit the mask.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Service service(s);
    const int port = service.start();
    const bool loaded = service.model() != nullptr;
    if (out.json_mode) {
        std::cout << json{{"host", o.host}, {"port", port}, {"model_loaded", loaded}}.dump() << '\n' << std::flush;
    } else {
        std::cout << "listening on http://" << o.host << ":" << port << (loaded ? "" : " (no model loaded)") << '\n'
                  << std::flush;
    }
    int sig = 0;
    sigwait(&signals, &sig);
    std::cerr << "shutting down\n";
    service.stop();
    out.record = nullptr;  // the listening record was the one record
    return 0;
}

int run_gradcheck(const Options& o, Output& out) {
    const auto start = std::chrono::steady_clock::now();
    const GradCheckReport r = grad_check_tiny(o.seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = r.max_rel_error <= kGradTolerance;
    char line[256];
    std::snprintf(line, sizeof line, "max relative error %.3e over %zu parameters (worst %s[%zu]) in %.2f s: %s",
                  r.max_rel_error, r.checked, r.worst_param.c_str(), r.worst_index, seconds, pass ? "PASS" : "FAIL");
    out.say(line);
    out.record = {{"max_rel_error", r.max_rel_error},
                  {"checked", r.checked},
                  {"worst_param", r.worst_param},
                  {"worst_index", r.worst_index},
                  {"tolerance", kGradTolerance},
                  {"pass", pass},
                  {"seconds", seconds}};
    return pass ? 0 : 1;
}

void add_training_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--seed", o.seed, "Seed for split, init, shuffling and augmentation")->capture_default_str();
    cmd->add_option("--batch-size", o.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--max-epochs", o.max_epochs)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--patience", o.patience)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--lr", o.lr, "Initial learning rate")->capture_default_str();
    cmd->add_option("--noise-scale", o.noise_scale)->capture_default_str();
    cmd->add_option("--split", o.split_ratio, "Training fraction per speaker")->capture_default_str();
    cmd->add_option("--dropout", o.dropout)->capture_default_str();
    cmd->add_option("--block-filters", o.block_filters, "Filters of the four residual blocks")
        ->delimiter(',')
        ->expected(4)
        ->capture_default_str();
    cmd->add_option("--dense-sizes", o.dense_sizes, "Widths of the two hidden dense layers")
        ->delimiter(',')
        ->expected(2)
        ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Speaker identification engine"};
    app.require_subcommand(1);
    Options o;
    app.add_flag("--json", o.json, "Print one JSON record instead of human output");

    auto* pre = app.add_subcommand("preprocess", "Resample and clip WAV files into one-second mono clips");
    pre->add_option("--in", o.in)->required()->check(CLI::ExistingDirectory);
    pre->add_option("--out", o.out)->required();
    pre->add_option("--rate", o.rate)->capture_default_str()->check(CLI::Range(1000, 192000));

    auto* syn = app.add_subcommand("synth", "Write a synthetic speaker dataset");
    syn->add_option("--speakers", o.speakers)->capture_default_str()->check(CLI::Range(2, 99));
    syn->add_option("--seconds", o.seconds, "Seconds per speaker")->capture_default_str()->check(CLI::PositiveNumber);
    syn->add_option("--noise-seconds", o.noise_seconds)->capture_default_str()->check(CLI::PositiveNumber);
    syn->add_option("--out", o.out)->required();
    syn->add_option("--seed", o.seed)->capture_default_str();

    auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
    train->add_option("--data", o.data)->required()->envname("RECME_DATA_DIR")->check(CLI::ExistingDirectory);
    train->add_option("--out", o.out, "Checkpoint path")->required();
    add_training_flags(train, o);

    auto* ident = app.add_subcommand("identify", "Identify the speaker of a recording");
    ident->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
    ident->add_option("--wav", o.wav)->required()->check(CLI::ExistingFile);
    ident->add_option("--threshold", o.threshold)->capture_default_str()->check(CLI::Range(0.0, 1.0));

    auto* enr = app.add_subcommand("enroll", "Add a new speaker to a dataset directory");
    enr->add_option("--data", o.data)->required()->envname("RECME_DATA_DIR");
    enr->add_option("--name", o.name)->required();
    enr->add_option("--wav", o.wav)->required()->check(CLI::ExistingFile);

    auto* serve = app.add_subcommand("serve", "Run the local HTTP service");
    serve->add_option("--data", o.data)->required()->envname("RECME_DATA_DIR");
    serve->add_option("--model", o.model, "Checkpoint to serve and to write after training (default <data>/model.rsid)");
    serve->add_option("--host", o.host)->capture_default_str();
    serve->add_option("--port", o.port)->capture_default_str()->check(CLI::Range(0, 65535));
    serve->add_option("--static", o.static_dir, "Directory of console assets served at /")->check(CLI::ExistingDirectory);
    add_training_flags(serve, o);

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the full model on a tiny spec");
    grad->add_option("--seed", o.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    Output out;
    out.json_mode = o.json;
    int code = 0;
    try {
        if (*pre) code = run_preprocess(o, out);
        else if (*syn) code = run_synth(o, out);
        else if (*train) code = run_train(o, out);
        else if (*ident) code = run_identify(o, out);
        else if (*enr) code = run_enroll(o, out);
        else if (*serve) code = run_serve(o, out);
        else if (*grad) code = run_gradcheck(o, out);
    } catch (const Error& e) {
        if (o.json) {
            std::cout << json{{"ok", false}, {"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump()
                      << '\n';
        } else {
            std::cerr << "error: " << e.what() << '\n';
        }
        return 1;
    } catch (const std::exception& e) {
        if (o.json) {
            std::cout << json{{"ok", false}, {"error", "Failure"}, {"message", e.what()}}.dump() << '\n';
        } else {
            std::cerr << "error: " << e.what() << '\n';
        }
        return 1;
    }
    if (o.json && !out.record.is_null()) {
        out.record["ok"] = code == 0;
        std::cout << out.record.dump() << '\n';
    }
    return code;
}
