// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "phred/checkpoint.hpp"
#include "phred/commands.hpp"
#include "phred/corpus.hpp"
#include "phred/inference.hpp"
#include "phred/service.hpp"
#include "test_support.hpp"
#include "toy_model.hpp"

using namespace phred;
using namespace phred::testing;
using nlohmann::json;

namespace {

// A snapshot root holding an untrained toy model ("toy") and a small model
// trained on a synthetic persona corpus ("persona/snapshot").
struct Snapshots {
    TempDir dir{"phred-svc"};
    std::filesystem::path root = dir / "snapshots";
    std::filesystem::path data = dir / "data";

    Snapshots() {
        std::filesystem::create_directories(root);
        save_checkpoint(*toy_model(Variant::phredgan_d), root / "toy", 0);
        save_checkpoint(*toy_model(Variant::hredgan), root / "toy_h", 0);
        REQUIRE(run_cli({"synth", "--out", data.string(), "--conversations", "600", "--seed", "9"}) == 0);
        write_file(dir / "cfg.json",
                   R"({"variant": "phredgan_d", "hidden_size": 24, "embedding_size": 12, "attribute_size": 8,
                       "attention_size": 16, "layers": 1, "epochs": 3, "batch_size": 16, "log_every": 0,
                       "max_len": 10})");
        REQUIRE(run_cli({"train", "--config", (dir / "cfg.json").string(), "--data", data.string(), "--out",
                         (root / "persona").string()}) == 0);
    }
};

Snapshots& snapshots() {
    static Snapshots s;
    return s;
}

class Server {
public:
    explicit Server(ServiceOptions options) : service_(std::move(options)) {
        service_.mount(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~Server() {
        server_.stop();
        thread_.join();
    }

    struct Reply {
        int status = 0;
        json body;
    };

    Reply post(const std::string& path, const json& body) {
        httplib::Client c("127.0.0.1", port_);
        auto r = c.Post(path, body.dump(), "application/json");
        REQUIRE(r);
        return {r->status, json::parse(r->body)};
    }
    Reply get(const std::string& path) {
        httplib::Client c("127.0.0.1", port_);
        auto r = c.Get(path);
        REQUIRE(r);
        return {r->status, r->body.empty() ? json() : json::parse(r->body, nullptr, false)};
    }
    int raw_status(const std::string& path) {
        httplib::Client c("127.0.0.1", port_);
        auto r = c.Get(path);
        REQUIRE(r);
        return r->status;
    }

    std::string open(const std::string& snapshot) {
        const auto r = post("/v1/sessions", {{"snapshot_id", snapshot}});
        REQUIRE(r.status == 201);
        return r.body.at("session_id").get<std::string>();
    }

private:
    ChatService service_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

ServiceOptions options() {
    ServiceOptions o;
    o.snapshot_dir = snapshots().root;
    return o;
}

json message(const std::string& speaker, const std::string& text, const std::string& respond_as, int n = 4) {
    return {{"speaker", speaker}, {"text", text}, {"respond_as", respond_as}, {"num_candidates", n}};
}

}  // namespace

TEST_CASE("snapshot listing carries the variant tag", "[service]") {
    Server s(options());
    const auto r = s.get("/v1/snapshots");
    REQUIRE(r.status == 200);
    std::map<std::string, std::string> variants;
    for (const auto& e : r.body.at("snapshots")) variants[e.at("id")] = e.at("variant");
    CHECK(variants.at("toy") == "phredgan_d");
    CHECK(variants.at("toy_h") == "hredgan");
    CHECK(variants.at("persona/snapshot") == "phredgan_d");
}

TEST_CASE("session creation", "[service]") {
    Server s(options());
    const auto r = s.post("/v1/sessions", {{"snapshot_id", "toy"}});
    CHECK(r.status == 201);
    CHECK(r.body.at("attributes") == json::array({"questioner", "helper"}));
    CHECK(s.open("toy") != s.open("toy"));
    const auto missing = s.post("/v1/sessions", {{"snapshot_id", "nope"}});
    CHECK(missing.status == 404);
    CHECK(missing.body.at("code") == 404);
    CHECK(missing.body.at("message").get<std::string>().find("nope") != std::string::npos);
    CHECK(s.post("/v1/sessions", json::object()).status == 400);
}

TEST_CASE("messages return ranked candidates and grow the transcript", "[service]") {
    Server s(options());
    const std::string id = s.open("toy");
    CHECK(s.get("/v1/sessions/" + id).body.at("turns").empty());

    const auto helper = s.post("/v1/sessions/" + id + "/message", message("questioner", "a b", "helper"));
    const auto questioner = s.post("/v1/sessions/" + id + "/message", message("helper", "c d", "questioner"));
    REQUIRE(helper.status == 200);
    REQUIRE(questioner.status == 200);
    CHECK(helper.body.at("ranked") == true);
    CHECK(helper.body.at("responses").size() == 4);
    CHECK_FALSE(questioner.body.at("responses").empty());

    const auto one = s.post("/v1/sessions/" + id + "/message", message("questioner", "a", "helper", 1));
    REQUIRE(one.status == 200);
    CHECK(one.body.at("responses").size() == 1);

    const json transcript = s.get("/v1/sessions/" + id).body.at("turns");
    REQUIRE(transcript.size() == 6);
    CHECK(transcript[0].at("role") == "user");
    CHECK(transcript[1].at("role") == "model");
    CHECK(transcript[1].at("speaker") == "helper");
    CHECK(transcript[1].at("text") == helper.body.at("responses")[0].at("text"));
}

TEST_CASE("scores are rank-score recomputations, best first", "[service]") {
    Server s(options());
    for (const char* snap : {"toy", "toy_h"}) {
        const std::string id = s.open(snap);
        const auto r = s.post("/v1/sessions/" + id + "/message", message("questioner", "a b c", "helper", 8));
        REQUIRE(r.status == 200);
        const Variant v = std::string(snap) == "toy" ? Variant::phredgan_d : Variant::hredgan;
        double previous = 1e300;
        for (const auto& c : r.body.at("responses")) {
            std::optional<double> att;
            if (!c.at("att_log_confidence").is_null()) att = c.at("att_log_confidence").get<double>();
            const double expected = rank_score(v, c.at("adv_score"), att, c.at("length").get<std::size_t>());
            CHECK(c.at("score").get<double>() == expected);
            CHECK(expected <= previous);
            previous = expected;
        }
    }
}

TEST_CASE("request validation", "[service]") {
    Server s(options());
    const std::string id = s.open("toy");
    const std::string path = "/v1/sessions/" + id + "/message";
    CHECK(s.post(path, message("pirate", "a", "helper")).status == 400);
    CHECK(s.post(path, message("questioner", "a", "pirate")).status == 400);
    CHECK(s.post(path, message("questioner", "a", "helper", 0)).status == 400);
    CHECK(s.post(path, message("questioner", "a", "helper", 65)).status == 400);
    CHECK(s.post(path, message("questioner", "   ", "helper")).status == 400);
    CHECK(s.post(path, {{"speaker", "questioner"}}).status == 400);
    CHECK(s.post("/v1/sessions/zzz/message", message("questioner", "a", "helper")).status == 404);
    CHECK(s.get("/v1/sessions/zzz").status == 404);
    CHECK(s.post("/v1/sessions/" + id + "/whatif", json::object()).status == 400);
    CHECK(s.get("/v1/sessions/" + id).body.at("turns").empty());
}

TEST_CASE("what-if covers every persona, never mutates history, and is deterministic", "[service][whatif]") {
    Server s(options());
    const std::string id = s.open("toy");
    const std::string base = "/v1/sessions/" + id;
    const auto first = s.post(base + "/whatif", {{"text", "a b"}, {"num_candidates", 3}});
    REQUIRE(first.status == 200);
    CHECK(first.body.at("per_attribute").size() == 2);
    CHECK(first.body.at("per_attribute").contains("questioner"));
    CHECK(first.body.at("per_attribute").contains("helper"));
    CHECK(s.post(base + "/whatif", {{"text", "a b"}, {"num_candidates", 3}}).body == first.body);
    CHECK(s.get(base).body.at("turns").empty());

    // Interleave messages and what-ifs; only messages change the turn count.
    std::mt19937 gen(5);
    std::size_t expected = 0;
    for (int i = 0; i < 12; ++i) {
        if (gen() % 2 == 0) {
            REQUIRE(s.post(base + "/message", message("helper", "c", "questioner", 2)).status == 200);
            expected += 2;
        } else {
            const json body = gen() % 2 && expected > 0 ? json{{"num_candidates", 2}} : json{{"text", "d a"}, {"speaker", "helper"}};
            const auto before = s.get(base).body;
            REQUIRE(s.post(base + "/whatif", body).status == 200);
            CHECK(s.get(base).body == before);
        }
        CHECK(s.get(base).body.at("turns").size() == expected);
    }
}

TEST_CASE("fixed seed mode repeats responses across sessions", "[service]") {
    Server s(options());
    const auto a = s.post("/v1/sessions/" + s.open("toy") + "/message", message("questioner", "a b", "helper"));
    const auto b = s.post("/v1/sessions/" + s.open("toy") + "/message", message("questioner", "a b", "helper"));
    CHECK(a.body.at("responses") == b.body.at("responses"));
}

TEST_CASE("concurrent sessions keep separate transcripts", "[service][concurrency]") {
    Server s(options());
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) ids.push_back(s.open("toy"));
    std::vector<std::thread> workers;
    std::atomic<int> failures{0};
    for (int i = 0; i < 4; ++i) {
        workers.emplace_back([&, i] {
            for (int k = 0; k < 5; ++k) {
                const std::string text = std::string(1, static_cast<char>('a' + i));
                Server::Reply r;
                try {
                    r = s.post("/v1/sessions/" + ids[static_cast<std::size_t>(i)] + "/message",
                               message("questioner", text, "helper", 2));
                } catch (...) {
                    ++failures;
                }
                if (r.status != 200) ++failures;
            }
        });
    }
    for (auto& w : workers) w.join();
    CHECK(failures == 0);
    for (int i = 0; i < 4; ++i) {
        const json turns = s.get("/v1/sessions/" + ids[static_cast<std::size_t>(i)]).body.at("turns");
        REQUIRE(turns.size() == 10);
        for (std::size_t t = 0; t < turns.size(); t += 2) CHECK(turns[t].at("text") == std::string(1, static_cast<char>('a' + i)));
    }
}

TEST_CASE("transcripts persist as JSON lines", "[service]") {
    TempDir persist;
    ServiceOptions o = options();
    o.persist_dir = persist.path();
    Server s(o);
    const std::string id = s.open("toy");
    REQUIRE(s.post("/v1/sessions/" + id + "/message", message("questioner", "a", "helper")).status == 200);
    const std::string log = read_file(persist / (id + ".jsonl"));
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);
    CHECK(json::parse(log.substr(0, log.find('\n'))).at("role") == "user");
}

TEST_CASE("static UI files are served under /ui", "[service]") {
    TempDir ui;
    write_file(ui / "index.html", "<html></html>");
    ServiceOptions o = options();
    o.ui_dir = ui.path();
    Server s(o);
    CHECK(s.raw_status("/ui/index.html") == 200);
}

TEST_CASE("responding persona shows up in the generated signature words", "[service][persona]") {
    auto& snaps = snapshots();
    Server s(options());
    const SignatureManifest manifest = read_signature_manifest(snaps.data / "manifest.json");
    REQUIRE(manifest.signatures.size() == 2);
    const std::string attr0 = manifest.signatures[0].first;
    auto sig = [&](int k) {
        const auto& words = manifest.signatures[static_cast<std::size_t>(k)].second;
        return std::set<std::string>(words.begin(), words.end());
    };
    const auto sig0 = sig(0), sig1 = sig(1);
    const auto conversations = read_dialogue_file(snaps.data / "train.jsonl");
    double own = 0, other = 0, words = 0;
    for (int call = 0; call < 100; ++call) {
        const auto& turn = conversations[static_cast<std::size_t>(call)].turns.front();
        const std::string id = s.open("persona/snapshot");
        const auto r = s.post("/v1/sessions/" + id + "/message", message(turn.speaker, turn.text, attr0, 4));
        REQUIRE(r.status == 200);
        for (const auto& w : tokenize(r.body.at("responses")[0].at("text").get<std::string>())) {
            own += sig0.count(w);
            other += sig1.count(w);
            words += 1;
        }
    }
    REQUIRE(words > 0);
    INFO("own " << own / words << " other " << other / words);
    CHECK(own / words > other / words);
}
