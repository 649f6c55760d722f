#include "recme/service.hpp"

#include <httplib.h>

#include <atomic>
#include <ctime>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "recme/checkpoint.hpp"
#include "recme/dataset.hpp"
#include "recme/error.hpp"

namespace recme {
namespace fs = std::filesystem;

namespace {

using json = nlohmann::json;

constexpr const char* kJson = "application/json";

const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>recme</title></head>
<body><h1>recme service</h1>
<p>No console assets configured. Start the service with a static directory to serve one.</p>
<p>Endpoints: GET /health, GET|POST /speakers, POST /identify, POST /train, GET /train/status, GET /metrics, GET /model</p>
</body></html>
)";

struct Cancelled {};
struct PayloadTooLarge {};

std::string now_iso8601() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"error", code}, {"message", message}});
}

void send_error(httplib::Response& res, const Error& e) {
    switch (e.kind()) {
        case ErrorKind::DuplicateName: return send_error(res, 409, "DuplicateName", e.what());
        case ErrorKind::TooShort:
        case ErrorKind::TooFewSpeakers:
        case ErrorKind::EmptyDataset:
        case ErrorKind::ClassTooSmall: return send_error(res, 422, std::string(to_string(e.kind())), e.what());
        case ErrorKind::MalformedContainer:
        case ErrorKind::UnsupportedEncoding: return send_error(res, 400, "BadAudio", e.what());
        case ErrorKind::InvalidArgument: return send_error(res, 400, "InvalidArgument", e.what());
        default: return send_error(res, 500, std::string(to_string(e.kind())), e.what());
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
        throw Error(ErrorKind::InvalidArgument, "request body must be a JSON object");
    }
    return body;
}

PcmWave wave_from(const json& body) {
    if (!body.contains("wav_base64") || !body["wav_base64"].is_string()) {
        throw Error(ErrorKind::InvalidArgument, "wav_base64 (string) is required");
    }
    std::vector<std::uint8_t> bytes;
    try {
        bytes = base64_decode(body["wav_base64"].get<std::string>());
    } catch (const Error& e) {
        throw Error(ErrorKind::MalformedContainer, std::string("wav_base64: ") + e.what());
    }
    if (bytes.size() > kMaxWavBytes) throw PayloadTooLarge{};
    return decode_wav(bytes);
}

std::size_t unsigned_field(const json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw Error(ErrorKind::InvalidArgument, key + " must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

double number_field(const json& v, const std::string& key) {
    if (!v.is_number()) throw Error(ErrorKind::InvalidArgument, key + " must be a number");
    return v.get<double>();
}

std::vector<std::size_t> sizes_field(const json& v, const std::string& key) {
    if (!v.is_array()) throw Error(ErrorKind::InvalidArgument, key + " must be an array");
    std::vector<std::size_t> out;
    for (const auto& x : v) out.push_back(unsigned_field(x, key));
    return out;
}

json metrics_to_json(const EpochMetrics& m) { return json::parse(metrics_record(m)); }

std::size_t best_epoch_of(const std::vector<EpochMetrics>& history) {
    std::size_t best = 0;
    double best_acc = -1.0;
    for (const auto& m : history) {
        if (m.val_acc > best_acc) {
            best_acc = m.val_acc;
            best = m.epoch;
        }
    }
    return best;
}

}  // namespace

std::string to_string(JobState s) {
    switch (s) {
        case JobState::Idle: return "idle";
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "idle";
}

TrainingConfig apply_train_overrides(const TrainingConfig& base, const std::string& json_body) {
    TrainingConfig c = base;
    if (json_body.empty()) return c;
    const json body = json::parse(json_body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
        throw Error(ErrorKind::InvalidArgument, "train overrides must be a JSON object");
    }
    for (const auto& [key, v] : body.items()) {
        if (key == "seed") {
            c.seed = unsigned_field(v, key);
        } else if (key == "batch_size") {
            c.batch_size = unsigned_field(v, key);
        } else if (key == "max_epochs") {
            c.max_epochs = unsigned_field(v, key);
        } else if (key == "patience") {
            c.patience = unsigned_field(v, key);
        } else if (key == "lr0") {
            c.schedule.lr0 = number_field(v, key);
        } else if (key == "decay_factor") {
            c.schedule.decay_factor = number_field(v, key);
        } else if (key == "decay_every_steps") {
            c.schedule.decay_every_steps = unsigned_field(v, key);
        } else if (key == "noise_scale") {
            c.noise_scale = number_field(v, key);
        } else if (key == "split_ratio") {
            c.split_ratio = number_field(v, key);
        } else if (key == "dropout_rate") {
            c.dropout_rate = number_field(v, key);
        } else if (key == "optimizer") {
            const std::string name = v.is_string() ? v.get<std::string>() : "";
            if (name == "adam") {
                c.optimizer = OptimizerKind::Adam;
            } else if (name == "sgd") {
                c.optimizer = OptimizerKind::Sgd;
            } else {
                throw Error(ErrorKind::InvalidArgument, "optimizer must be \"adam\" or \"sgd\"");
            }
        } else if (key == "block_filters") {
            c.model.block_filters = sizes_field(v, key);
        } else if (key == "dense_sizes") {
            c.model.dense_sizes = sizes_field(v, key);
        } else {
            throw Error(ErrorKind::InvalidArgument, "unknown override " + key);
        }
    }
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

std::string prediction_json(const PredictionResult& r, double threshold) {
    json per_clip = json::array();
    for (std::size_t i = 0; i < r.per_clip.size(); ++i) {
        const auto& probs = r.per_clip[i];
        const auto top = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
        per_clip.push_back({{"index", i}, {"predicted", top}, {"probs", probs}});
    }
    const Directive next = next_action(r);
    return json{{"decision", r.known ? "known" : "unknown"},
                {"known", r.known},
                {"speaker", r.speaker},
                {"winner", r.winner},
                {"confidence", r.confidence},
                {"threshold", threshold},
                {"votes", r.votes},
                {"num_clips", r.per_clip.size()},
                {"per_clip", per_clip},
                {"action", next.action == Directive::Action::Continue ? "continue" : "request_verification"}}
        .dump();
}

std::string status_json(const TrainJobStatus& s) {
    json out = {{"state", to_string(s.state)},
                {"job_id", s.job_id},
                {"current_epoch", s.current_epoch},
                {"max_epochs", s.max_epochs},
                {"best_val_acc", s.best_val_acc},
                {"best_epoch", s.best_epoch},
                {"started_at", s.started_at},
                {"finished_at", s.finished_at}};
    if (s.state == JobState::Failed) out["error"] = s.error;
    return out.dump();
}

std::string metrics_json(const std::vector<EpochMetrics>& history, const std::vector<HistogramSnapshot>& histograms) {
    json records = json::array();
    for (const auto& m : history) records.push_back(metrics_to_json(m));
    json hist = json::array();
    for (const auto& h : histograms) hist.push_back(json::parse(histogram_record(h)));
    return json{{"records", records}, {"histograms", hist}, {"best_epoch", best_epoch_of(history)}}.dump();
}

struct Service::Impl {
    ServiceOptions opt;
    httplib::Server server;
    std::thread server_thread;

    mutable std::mutex state_mu;  // model, status, job_history
    std::shared_ptr<const ModelState> model;
    TrainJobStatus status;
    std::vector<EpochMetrics> job_history;
    std::uint64_t job_counter = 0;

    std::mutex writer_mu;  // datastore writes and the training dataset load
    std::mutex job_mu;     // the job thread handle
    std::thread job;
    std::atomic<bool> cancel{false};

    explicit Impl(ServiceOptions o) : opt(std::move(o)) {
        if (opt.data_dir.empty()) throw Error(ErrorKind::InvalidArgument, "service needs a data directory");
        if (opt.model_path.empty()) opt.model_path = opt.data_dir / "model.rsid";
        if (fs::exists(opt.model_path)) model = std::make_shared<const ModelState>(load_checkpoint(opt.model_path));
        routes();
    }

    std::shared_ptr<const ModelState> snapshot() const {
        std::lock_guard lock(state_mu);
        return model;
    }

    void routes() {
        server.set_payload_max_length(kMaxWavBytes / 3 * 4 + (1u << 20));
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const Error& e) {
                send_error(res, e);
            } catch (const PayloadTooLarge&) {
                send_error(res, 413, "PayloadTooLarge", "WAV payload exceeds 64 MiB");
            } catch (const std::exception& e) {
                send_error(res, 500, "Internal", e.what());
            }
        });

        server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            const auto m = snapshot();
            std::size_t speakers = 0;
            {
                std::lock_guard lock(writer_mu);
                speakers = fs::is_directory(opt.data_dir) ? dataset_registry(opt.data_dir).size() : 0;
            }
            send_json(res, 200,
                      {{"status", "ok"},
                       {"model_loaded", m != nullptr},
                       {"num_speakers", speakers},
                       {"model_speakers", m ? m->registry.size() : 0}});
        });

        server.Get("/speakers", [this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            std::lock_guard lock(writer_mu);
            if (fs::is_directory(opt.data_dir)) {
                const auto names = dataset_registry(opt.data_dir);
                for (std::size_t i = 0; i < names.size(); ++i) {
                    list.push_back({{"class_index", i},
                                    {"name", names[i]},
                                    {"num_clips", load_clips(opt.data_dir / names[i]).size()}});
                }
            }
            send_json(res, 200, list);
        });

        server.Post("/speakers", [this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            if (!body.contains("name") || !body["name"].is_string()) {
                return send_error(res, 400, "InvalidArgument", "name (string) is required");
            }
            EnrollmentRequest request{body["name"].get<std::string>(), wave_from(body)};
            EnrollmentOutcome outcome;
            {
                std::lock_guard lock(writer_mu);
                outcome = enroll(opt.data_dir, request);
            }
            send_json(res, 201,
                      {{"class_index", outcome.class_index},
                       {"clips_added", outcome.clips_added},
                       {"retrain_needed", outcome.retrain_needed}});
        });

        server.Post("/identify", [this](const httplib::Request& req, httplib::Response& res) {
            const auto m = snapshot();
            if (!m) return send_error(res, 409, "NoModel", "no model is loaded; train one first");
            const json body = parse_body(req);
            double threshold = kDefaultThreshold;
            if (body.contains("threshold") && !body["threshold"].is_null()) {
                threshold = number_field(body["threshold"], "threshold");
                if (!(threshold >= 0.0 && threshold <= 1.0)) {
                    return send_error(res, 400, "InvalidArgument", "threshold must be in [0, 1]");
                }
            }
            const PcmWave wave = wave_from(body);
            res.status = 200;
            res.set_content(prediction_json(identify(*m, wave, threshold), threshold), kJson);
        });

        server.Post("/train", [this](const httplib::Request& req, httplib::Response& res) {
            const TrainingConfig config = apply_train_overrides(opt.train_defaults, req.body);
            std::size_t speakers = 0;
            {
                std::lock_guard lock(writer_mu);
                speakers = fs::is_directory(opt.data_dir) ? dataset_registry(opt.data_dir).size() : 0;
            }
            if (speakers < 2) {
                return send_error(res, 422, "TooFewSpeakers",
                                  "training needs at least 2 speakers, found " + std::to_string(speakers));
            }
            std::lock_guard job_lock(job_mu);
            std::string id;
            {
                std::lock_guard lock(state_mu);
                if (status.state == JobState::Running) {
                    return send_error(res, 409, "JobRunning", "a training job is already running");
                }
                id = "job-" + std::to_string(++job_counter);
                status = TrainJobStatus{};
                status.state = JobState::Running;
                status.job_id = id;
                status.max_epochs = config.max_epochs;
                status.started_at = now_iso8601();
                job_history.clear();
            }
            if (job.joinable()) job.join();
            job = std::thread([this, config] { run_job(config); });
            send_json(res, 202, {{"job_id", id}});
        });

        server.Get("/train/status", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(state_mu);
            res.set_content(status_json(status), kJson);
        });

        server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
            {
                std::lock_guard lock(state_mu);
                // A running or failed job has no metrics file yet; show what it produced so far.
                if (status.state == JobState::Running || status.state == JobState::Failed) {
                    res.set_content(metrics_json(job_history, {}), kJson);
                    return;
                }
            }
            const MetricsPaths paths = metrics_paths_for(opt.model_path);
            if (!fs::exists(paths.metrics)) return send_error(res, 404, "NotFound", "no metrics recorded yet");
            const auto histograms = fs::exists(paths.histograms) ? read_histograms(paths.histograms)
                                                                 : std::vector<HistogramSnapshot>{};
            res.set_content(metrics_json(read_metrics(paths.metrics), histograms), kJson);
        });

        server.Get("/model", [this](const httplib::Request&, httplib::Response& res) {
            const auto m = snapshot();
            if (!m) return send_error(res, 404, "NotFound", "no model is loaded");
            const auto bytes = serialize_checkpoint(*m);
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "application/octet-stream");
        });

        if (!opt.static_dir.empty()) {
            if (!server.set_mount_point("/", opt.static_dir.string())) {
                throw Error(ErrorKind::IoFailure, "static directory " + opt.static_dir.string() + " does not exist");
            }
        } else {
            server.Get("/", [](const httplib::Request&, httplib::Response& res) {
                res.set_content(kPlaceholderPage, "text/html");
            });
        }
    }

    void run_job(const TrainingConfig& config) {
        try {
            DatasetIndex index;
            {
                std::lock_guard lock(writer_mu);
                index = build_dataset(opt.data_dir);
            }
            auto on_epoch = [this](const EpochMetrics& m) {
                if (cancel) throw Cancelled{};
                std::lock_guard lock(state_mu);
                status.current_epoch = m.epoch;
                if (status.best_epoch == 0 || m.val_acc > status.best_val_acc) {
                    status.best_val_acc = m.val_acc;
                    status.best_epoch = m.epoch;
                }
                job_history.push_back(m);
            };
            FitResult result = train_on_dataset(index, config, on_epoch);
            save_checkpoint(result.best, opt.model_path);
            export_metrics(result.history, result.histograms, metrics_paths_for(opt.model_path));
            auto fresh = std::make_shared<const ModelState>(std::move(result.best));
            std::lock_guard lock(state_mu);
            model = std::move(fresh);
            status.state = JobState::Done;
            status.best_epoch = result.best_epoch;
            status.best_val_acc = result.best_val_acc;
            status.finished_at = now_iso8601();
        } catch (const Cancelled&) {
            fail("cancelled by shutdown");
        } catch (const std::exception& e) {
            fail(e.what());
        }
    }

    void fail(const std::string& message) {
        std::lock_guard lock(state_mu);
        status.state = JobState::Failed;
        status.error = message;
        status.finished_at = now_iso8601();
    }

    void join_job() {
        std::lock_guard job_lock(job_mu);
        if (job.joinable()) job.join();
    }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

int Service::start() {
    auto& s = impl_->server;
    int port = impl_->opt.port;
    if (port == 0) {
        port = s.bind_to_any_port(impl_->opt.host);
    } else if (!s.bind_to_port(impl_->opt.host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw Error(ErrorKind::IoFailure,
                    "cannot bind " + impl_->opt.host + ":" + std::to_string(impl_->opt.port));
    }
    impl_->server_thread = std::thread([&s] { s.listen_after_bind(); });
    s.wait_until_ready();
    return port;
}

void Service::run() {
    start();
    if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void Service::stop() {
    impl_->cancel = true;
    impl_->server.stop();
    if (impl_->server_thread.joinable() && impl_->server_thread.get_id() != std::this_thread::get_id()) {
        impl_->server_thread.join();
    }
    impl_->join_job();
}

std::shared_ptr<const ModelState> Service::model() const { return impl_->snapshot(); }

TrainJobStatus Service::train_status() const {
    std::lock_guard lock(impl_->state_mu);
    return impl_->status;
}

void Service::wait_for_training() { impl_->join_job(); }

const ServiceOptions& Service::options() const { return impl_->opt; }

}  // namespace recme
