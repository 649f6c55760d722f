// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Criteria 1, 6 and 9 drive the real `recme` binary; the rest use the library.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "recme/checkpoint.hpp"
#include "recme/error.hpp"
#include "recme/features.hpp"
#include "recme/fft.hpp"
#include "recme/gradcheck.hpp"
#include "recme/identification.hpp"
#include "recme/synth.hpp"
#include "recme/training.hpp"

using namespace recme;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

// Runs the CLI with --json; returns its record or throws with the exit code.
json cli(const std::string& args) {
    const std::string cmd = quote(RECME_CLI) + " --json " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) throw std::runtime_error("cannot run " + cmd);
    std::string out;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
    const int status = pclose(p);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0) throw std::runtime_error("recme " + args + " exited " + std::to_string(code) + ": " + out);
    return json::parse(out);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string p(const fs::path& path) { return quote(path.string()); }

constexpr std::uint64_t kSeed = 42;
constexpr std::size_t kTrials = 20;
constexpr std::size_t kTrialSeconds = 5;

std::uint64_t trial_seed(std::size_t speaker, std::size_t trial) { return 9000 + trial * 7 + speaker * 1000; }

struct Workspace {
    oracle::TempDir dir{"acceptance"};
    fs::path data() const { return dir / "data"; }
    fs::path model() const { return dir / "run1/model.rsid"; }
    fs::path model2() const { return dir / "run2/model.rsid"; }
    double train_seconds = 0.0;
    json train_record;
};

Verdict end_to_end(Workspace& ws) {
    cli("synth --speakers 5 --seconds 60 --noise-seconds 10 --seed 42 --out " + p(ws.data()));
    const auto t0 = Clock::now();
    ws.train_record = cli("train --data " + p(ws.data()) + " --out " + p(ws.model()));
    ws.train_seconds = seconds_since(t0);
    const double acc = ws.train_record["best_val_acc"];
    const std::size_t best = ws.train_record["best_epoch"];
    const std::size_t epochs = ws.train_record["epochs"];
    return {acc >= 0.95 && ws.train_seconds <= 600.0,
            fmt("best val_acc %.4f at epoch %zu of %zu, %.1f s (need >= 0.95 within 600 s)", acc, best, epochs,
                ws.train_seconds)};
}

Verdict gradient_check() {
    const auto t0 = Clock::now();
    const GradCheckReport r = grad_check_tiny(kSeed);
    const double s = seconds_since(t0);
    return {r.max_rel_error <= 1e-4 && s <= 60.0,
            fmt("max relative error %.3e over %zu parameters (worst %s[%zu]), %.2f s", r.max_rel_error, r.checked,
                r.worst_param.c_str(), r.worst_index, s)};
}

Verdict fft_correctness() {
    double worst_rel = 0.0, worst_parseval = 0.0;
    for (std::size_t n : {16u, 128u, 1000u, 16000u}) {
        std::mt19937_64 rng(n);
        std::uniform_real_distribution<double> d(-1.0, 1.0);
        std::vector<double> x(n);
        for (double& v : x) v = d(rng);
        const auto ref = dft_oracle(x);
        const auto mags = real_fft_magnitudes(x);
        double peak = 0.0;
        for (const auto& c : ref) peak = std::max(peak, std::abs(c));
        for (std::size_t k = 0; k < mags.size(); ++k) {
            const double r = std::abs(ref[k]);
            worst_rel = std::max(worst_rel, std::abs(mags[k] - r) / std::max(r, 1e-9 * peak));
        }
        const auto full = fft_real(x);
        double time = 0, freq = 0;
        for (std::size_t i = 0; i < n; ++i) {
            time += x[i] * x[i];
            freq += std::norm(full[i]);
        }
        worst_parseval = std::max(worst_parseval, std::abs(time - freq / n) / time);
    }
    return {worst_rel <= 1e-6 && worst_parseval <= 1e-9,
            fmt("max relative magnitude error %.2e vs direct DFT, Parseval %.2e", worst_rel, worst_parseval)};
}

Verdict lr_schedule() {
    const LrSchedule s;
    // The published rates, and the formula lr0 * 0.7^k evaluated in doubles.
    const std::vector<std::pair<std::uint64_t, double>> expect{
        {0, 1e-4}, {249, 1e-4}, {250, 7e-5}, {500, 4.9e-5}, {2500, 1e-4 * std::pow(0.7, 10)}};
    bool ok = true;
    std::string got;
    for (const auto& [step, want] : expect) {
        const double lr = lr_at_step(step, s);
        const std::uint64_t k = step / 250;
        const double formula = 1e-4 * std::pow(0.7, static_cast<double>(k));
        ok &= lr == formula;
        ok &= std::abs(lr - want) <= 2 * std::numeric_limits<double>::epsilon() * want;
        got += fmt(" %llu->%.17g", static_cast<unsigned long long>(step), lr);
    }
    return {ok, "steps" + got};
}

Verdict early_stopping() {
    const ModelState init = make_model(build_model(2, tiny_spec()), {"a", "b"}, 1);
    auto run = [&](const std::vector<double>& accs, std::size_t max_epochs) {
        return fit_loop(init, max_epochs, 10, [&](ModelState& state, std::size_t epoch) {
            state.param("output.bias")[0] = static_cast<double>(epoch);
            EpochMetrics m;
            m.val_acc = epoch <= accs.size() ? accs[epoch - 1] : 0.0;
            return m;
        });
    };
    bool ok = true;
    std::vector<double> plateau{0.5, 0.6, 0.6};
    plateau.resize(13, 0.55);
    const FitResult a = run(plateau, 200);
    ok &= a.history.size() == 12 && a.best_epoch == 2 && a.best.param("output.bias")[0] == 2.0;
    const std::string first = fmt("[.5,.6,.6,...] stopped at %zu, best %zu", a.history.size(), a.best_epoch);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> accs(60);
        for (double& v : accs) v = std::round(d(rng) * 20) / 20;  // coarse values so ties happen
        const FitResult r = run(accs, 60);
        std::size_t best = 1;
        for (std::size_t e = 1; e <= accs.size(); ++e) {
            if (accs[e - 1] > accs[best - 1]) best = e;
            if (e - best >= 10) break;
        }
        ok &= r.best_epoch == best && r.history.size() == std::min<std::size_t>(best + 10, 60) &&
              r.best.param("output.bias")[0] == static_cast<double>(best) && r.best_val_acc == accs[best - 1];
    }
    std::vector<double> rising;
    for (int i = 1; i <= 30; ++i) rising.push_back(i / 30.0);
    const FitResult c = run(rising, 30);
    ok &= c.history.size() == 30 && c.best_epoch == 30;
    return {ok, first + "; 50 random sequences stop at best+10; monotone run reaches max_epochs"};
}

Verdict determinism(const Workspace& ws) {
    cli("train --data " + p(ws.data()) + " --out " + p(ws.model2()));
    const MetricsPaths a = metrics_paths_for(ws.model()), b = metrics_paths_for(ws.model2());
    const bool ckpt = slurp(ws.model()) == slurp(ws.model2());
    const bool metrics = slurp(a.metrics) == slurp(b.metrics);
    const bool hist = slurp(a.histograms) == slurp(b.histograms);
    return {ckpt && metrics && hist, fmt("checkpoint %s, metrics %s, histograms %s", ckpt ? "identical" : "DIFFER",
                                          metrics ? "identical" : "DIFFER", hist ? "identical" : "DIFFER")};
}

Verdict checkpoint_roundtrip(const Workspace& ws) {
    const ModelState a = load_checkpoint(ws.model());
    const fs::path copy = ws.dir / "roundtrip.rsid";
    save_checkpoint(a, copy);
    const ModelState b = load_checkpoint(copy);
    const DatasetIndex idx = build_dataset(ws.data());
    std::vector<double> rows;
    for (std::size_t i = 0; i < idx.entries.size(); i += 37) {
        const auto f = clip_features(*idx.entries[i].clip);
        rows.insert(rows.end(), f.begin(), f.end());
    }
    const Tensor batch({rows.size() / kFeatureLen, kFeatureLen}, rows);
    const bool same = forward(a, batch, Mode::Infer).logits == forward(b, batch, Mode::Infer).logits &&
                      a.registry == b.registry && slurp(copy) == slurp(ws.model());

    auto rejected = [&](std::vector<std::uint8_t> bytes) {
        try {
            parse_checkpoint(bytes);
        } catch (const Error& e) {
            return e.kind() == ErrorKind::ChecksumMismatch;
        }
        return false;
    };
    const std::string raw = slurp(ws.model());
    std::vector<std::uint8_t> flipped(raw.begin(), raw.end());
    flipped[flipped.size() / 3] ^= 0x10;
    std::vector<std::uint8_t> truncated(raw.begin(), raw.end() - 1000);
    const bool rejects = rejected(flipped) && rejected(truncated);
    return {same && rejects, fmt("forward on %zu clips %s; flipped byte and truncated file %s", batch.dim(0),
                                 same ? "bit-identical" : "DIFFERS", rejects ? "rejected by checksum" : "ACCEPTED")};
}

Verdict identification(const Workspace& ws) {
    const ModelState model = load_checkpoint(ws.model());
    const auto profiles = synth::speaker_profiles(6, kSeed);
    std::size_t worst_known = kTrials;
    std::string per_speaker;
    for (std::size_t s = 0; s < 5; ++s) {
        std::size_t correct = 0;
        for (std::size_t t = 0; t < kTrials; ++t) {
            const auto r = identify(model, synth::speaker_wave(profiles[s], kTrialSeconds, trial_seed(s, t)), 0.5);
            correct += r.known && r.speaker == profiles[s].name;
        }
        worst_known = std::min(worst_known, correct);
        per_speaker += fmt(" %zu", correct);
    }
    std::size_t unknown = 0;
    double conf = 0.0;
    for (std::size_t t = 0; t < kTrials; ++t) {
        const auto r = identify(model, synth::speaker_wave(profiles[5], kTrialSeconds, trial_seed(5, t)), 0.5);
        unknown += !r.known;
        conf += r.confidence;
    }
    return {worst_known >= 19 && unknown >= 16,
            fmt("known speakers correct/20:%s; unenrolled speaker Unknown %zu/20 (mean confidence %.3f)",
                per_speaker.c_str(), unknown, conf / kTrials)};
}

Verdict enrollment_growth(const Workspace& ws) {
    const fs::path data = ws.dir / "grown";
    fs::copy(ws.data(), data, fs::copy_options::recursive);
    const ModelState before = load_checkpoint(ws.model());
    const auto newcomer = synth::speaker_profiles(6, kSeed)[5];
    write_wav_file(ws.dir / "newcomer.wav", synth::speaker_wave(newcomer, 60, 60606));

    const json enrolled = cli("enroll --data " + p(data) + " --name " + quote(newcomer.name) + " --wav " +
                              p(ws.dir / "newcomer.wav"));
    const fs::path model_path = ws.dir / "run3/model.rsid";
    const json trained = cli("train --data " + p(data) + " --out " + p(model_path));
    const ModelState after = load_checkpoint(model_path);

    bool bindings = after.spec.num_classes == 6 && after.registry.size() == 6 && after.registry[5] == newcomer.name &&
                    enrolled["class_index"] == 5;
    for (std::size_t i = 0; i < before.registry.size(); ++i) bindings &= after.registry[i] == before.registry[i];

    std::size_t found = 0;
    for (std::size_t t = 0; t < kTrials; ++t) {
        const auto r = identify(after, synth::speaker_wave(newcomer, kTrialSeconds, 50000 + t * 7), 0.5);
        found += r.known && r.speaker == newcomer.name;
    }
    return {bindings && found >= 19,
            fmt("6-class model %s, val_acc %.4f; new speaker identified %zu/20", bindings ? "keeps bindings" : "BROKE bindings",
                trained["best_val_acc"].get<double>(), found)};
}

}  // namespace

int main() {
    Workspace ws;
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"end-to-end training", [&] { return end_to_end(ws); }},
        {"full-model gradient check", gradient_check},
        {"FFT correctness", fft_correctness},
        {"learning-rate schedule", lr_schedule},
        {"early stopping", early_stopping},
        {"determinism", [&] { return determinism(ws); }},
        {"checkpoint roundtrip", [&] { return checkpoint_roundtrip(ws); }},
        {"identification protocol", [&] { return identification(ws); }},
        {"enrollment growth", [&] { return enrollment_growth(ws); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS " : "FAIL ") << i + 1 << " " << criteria[i].first << ": " << v.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
