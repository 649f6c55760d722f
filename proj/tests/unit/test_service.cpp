#include <doctest.h>

#include <httplib.h>

#include <fstream>
#include <json.hpp>

#include "oracles.hpp"
#include "recme/checkpoint.hpp"
#include "recme/error.hpp"
#include "recme/service.hpp"
#include "recme/synth.hpp"

using namespace recme;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string wav_b64(const PcmWave& w) { return base64_encode(encode_wav(w)); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct Running {
    explicit Running(ServiceOptions o) : service(std::move(o)), port(service.start()), client("127.0.0.1", port) {
        client.set_read_timeout(60);
    }
    json get(const std::string& path, int expect) {
        auto r = client.Get(path);
        REQUIRE(r);
        CHECK(r->status == expect);
        return json::parse(r->body);
    }
    json post(const std::string& path, const json& body, int expect) {
        auto r = client.Post(path, body.dump(), "application/json");
        REQUIRE(r);
        CHECK(r->status == expect);
        return json::parse(r->body);
    }

    Service service;
    int port;
    httplib::Client client;
};

ServiceOptions options_for(const fs::path& data) {
    ServiceOptions o;
    o.data_dir = data;
    o.port = 0;
    o.train_defaults.model.block_filters = {4, 4, 4, 4};
    o.train_defaults.model.dense_sizes = {8, 8};
    o.train_defaults.batch_size = 8;
    return o;
}

}  // namespace

TEST_CASE("base64 helpers") {
    const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251, 252, 253};
    for (std::size_t n = 0; n <= bytes.size(); ++n) {
        const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + n);
        CHECK(base64_decode(base64_encode(part)) == part);
    }
    CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
    CHECK(base64_decode("data:audio/wav;base64,TW\nFu") == std::vector<std::uint8_t>{'M', 'a', 'n'});
    CHECK_THROWS_AS(base64_decode("abc"), Error);
    CHECK_THROWS_AS(base64_decode("a*c="), Error);
}

TEST_CASE("training overrides") {
    const TrainingConfig base;
    const TrainingConfig c = apply_train_overrides(base, R"({"max_epochs": 3, "lr0": 0.001, "block_filters": [4,4,4,4]})");
    CHECK(c.max_epochs == 3);
    CHECK(c.schedule.lr0 == 0.001);
    CHECK(c.model.block_filters == std::vector<std::size_t>{4, 4, 4, 4});
    CHECK(c.batch_size == base.batch_size);
    CHECK(apply_train_overrides(base, "").max_epochs == base.max_epochs);
    CHECK_THROWS_AS(apply_train_overrides(base, R"({"nope": 1})"), Error);
    CHECK_THROWS_AS(apply_train_overrides(base, R"({"split_ratio": 1.5})"), Error);
    CHECK_THROWS_AS(apply_train_overrides(base, R"({"batch_size": -1})"), Error);
    CHECK_THROWS_AS(apply_train_overrides(base, "[1,2"), Error);
}

TEST_CASE("endpoints on an empty datastore") {
    oracle::TempDir dir("svc_empty");
    Running s(options_for(dir.path()));
    const json health = s.get("/health", 200);
    CHECK(health["status"] == "ok");
    CHECK(health["model_loaded"] == false);
    CHECK(health["num_speakers"] == 0);
    CHECK(s.get("/speakers", 200) == json::array());
    CHECK(s.get("/train/status", 200)["state"] == "idle");
    s.get("/metrics", 404);
    CHECK(s.client.Get("/model")->status == 404);

    const json wav{{"wav_base64", wav_b64({16000, 1, oracle::tone(300, 16000, 32000)})}};
    CHECK(s.post("/identify", wav, 409)["error"] == "NoModel");
    CHECK(s.post("/train", json::object(), 422)["error"] == "TooFewSpeakers");

    const auto page = s.client.Get("/");
    REQUIRE(page);
    CHECK(page->status == 200);
    CHECK(page->body.find("<html") != std::string::npos);
}

TEST_CASE("enrollment over HTTP") {
    oracle::TempDir dir("svc_enroll");
    Running s(options_for(dir.path()));
    const PcmWave long_wave{16000, 1, oracle::tone(300, 16000, 16000 * 30)};
    const json created = s.post("/speakers", {{"name", "ann"}, {"wav_base64", wav_b64(long_wave)}}, 201);
    CHECK(created["class_index"] == 0);
    CHECK(created["clips_added"] == 30);
    CHECK(created["retrain_needed"] == true);

    CHECK(s.post("/speakers", {{"name", "ann"}, {"wav_base64", wav_b64(long_wave)}}, 409)["error"] == "DuplicateName");
    const PcmWave short_wave{16000, 1, oracle::tone(300, 16000, 16000 * 10)};
    CHECK(s.post("/speakers", {{"name", "bo"}, {"wav_base64", wav_b64(short_wave)}}, 422)["error"] == "TooShort");
    s.post("/speakers", {{"name", "bo"}, {"wav_base64", "not base64!"}}, 400);
    s.post("/speakers", {{"name", "bo"}, {"wav_base64", base64_encode({'R', 'I', 'F', 'F', 0})}}, 400);
    s.post("/speakers", {{"wav_base64", wav_b64(long_wave)}}, 400);
    CHECK(s.client.Post("/speakers", "{", "application/json")->status == 400);

    const json list = s.get("/speakers", 200);
    REQUIRE(list.size() == 1);
    CHECK(list[0]["name"] == "ann");
    CHECK(list[0]["num_clips"] == 30);
    CHECK(s.get("/health", 200)["num_speakers"] == 1);
    CHECK(s.post("/train", json::object(), 422)["error"] == "TooFewSpeakers");
}

TEST_CASE("training job lifecycle") {
    oracle::TempDir dir("svc_train");
    const auto profiles = synth::synth_dataset({3, 10, 2, 3}, dir.path());
    Running s(options_for(dir.path()));

    CHECK(s.post("/train", {{"bogus", 1}}, 400)["error"] == "InvalidArgument");
    const json accepted = s.post("/train", {{"max_epochs", 4}, {"patience", 10}}, 202);
    CHECK(accepted["job_id"] == "job-1");
    CHECK(s.post("/train", {{"max_epochs", 4}}, 409)["error"] == "JobRunning");
    const json running = s.get("/train/status", 200);
    CHECK(running["job_id"] == "job-1");
    CHECK(running["max_epochs"] == 4);

    s.service.wait_for_training();
    const json done = s.get("/train/status", 200);
    CHECK(done["state"] == "done");
    CHECK(done["current_epoch"] == 4);
    CHECK(done["finished_at"] != "");

    const json metrics = s.get("/metrics", 200);
    CHECK(metrics["records"].size() == 4);
    CHECK(metrics["histograms"].size() == 8);

    const json health = s.get("/health", 200);
    CHECK(health["model_loaded"] == true);
    CHECK(health["model_speakers"] == 3);

    // The served model is the checkpoint the job persisted.
    const fs::path model_path = dir / "model.rsid";
    REQUIRE(fs::exists(model_path));
    const auto blob = s.client.Get("/model");
    REQUIRE(blob);
    CHECK(blob->status == 200);
    CHECK(blob->body == slurp(model_path));
    const std::vector<std::uint8_t> bytes(blob->body.begin(), blob->body.end());
    const ModelState reloaded = parse_checkpoint(bytes);
    CHECK(reloaded.params == s.service.model()->params);

    const json id = s.post("/identify",
                           {{"wav_base64", wav_b64(synth::speaker_wave(profiles[1], 4, 55))}, {"threshold", 0.0}}, 200);
    CHECK(id["num_clips"] == 4);
    CHECK(id["per_clip"].size() == 4);
    CHECK(id["votes"].size() == 3);
    CHECK(id["decision"] == "known");
    s.post("/identify", {{"wav_base64", wav_b64(synth::speaker_wave(profiles[1], 2, 1))}, {"threshold", 2}}, 400);
    CHECK(s.post("/identify", {{"wav_base64", wav_b64({16000, 1, std::vector<double>(100)})}}, 422)["error"] ==
          "TooShort");

    SUBCASE("a restarted service loads the persisted model") {
        Running again(options_for(dir.path()));
        CHECK(again.get("/health", 200)["model_loaded"] == true);
        CHECK(again.service.model()->params == reloaded.params);
        CHECK(again.get("/metrics", 200)["records"].size() == 4);
    }
}

TEST_CASE("static console directory") {
    oracle::TempDir data("svc_static_data");
    oracle::TempDir web("svc_static_web");
    {
        std::ofstream(web / "index.html") << "<!doctype html><title>console</title>";
        std::ofstream(web / "app.js") << "console.log(1)";
    }
    ServiceOptions o = options_for(data.path());
    o.static_dir = web.path();
    Running s(o);
    const auto index = s.client.Get("/");
    REQUIRE(index);
    CHECK(index->status == 200);
    CHECK(index->body.find("console") != std::string::npos);
    const auto js = s.client.Get("/app.js");
    REQUIRE(js);
    CHECK(js->body == "console.log(1)");
    CHECK(s.get("/health", 200)["status"] == "ok");

    ServiceOptions missing = options_for(data.path());
    missing.static_dir = web / "absent";
    CHECK_THROWS_AS(Service{missing}, Error);
}

TEST_CASE("corrupt checkpoint at startup") {
    oracle::TempDir dir("svc_corrupt");
    std::ofstream(dir / "model.rsid") << "RSID garbage";
    CHECK_THROWS_AS(Service{options_for(dir.path())}, Error);
}
