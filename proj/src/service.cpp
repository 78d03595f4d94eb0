// SPDX-License-Identifier: Apache-2.0

#include "phred/service.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <json.hpp>
#include <random>

#include "phred/checkpoint.hpp"
#include "phred/inference.hpp"
#include "phred/logging.hpp"

namespace phred {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kDefaultCandidates = 8;
constexpr int kMaxCandidates = 64;

struct ApiError : std::runtime_error {
    int status;
    ApiError(int s, const std::string& message) : std::runtime_error(message), status(s) {}
};

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        json j = json::parse(req.body);
        if (!j.is_object()) throw ApiError(400, "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw ApiError(400, std::string("malformed JSON: ") + e.what());
    }
}

template <class T>
T field(const json& body, const char* name) {
    if (!body.contains(name)) throw ApiError(400, std::string("missing field '") + name + "'");
    try {
        return body.at(name).get<T>();
    } catch (const json::exception&) {
        throw ApiError(400, std::string("field '") + name + "' has the wrong type");
    }
}

template <class T>
std::optional<T> optional_field(const json& body, const char* name) {
    if (!body.contains(name) || body.at(name).is_null()) return std::nullopt;
    return field<T>(body, name);
}

int candidate_count(const json& body) {
    const int n = optional_field<int>(body, "num_candidates").value_or(kDefaultCandidates);
    if (n < 1 || n > kMaxCandidates) {
        throw ApiError(400, "num_candidates must be in [1, " + std::to_string(kMaxCandidates) + "]");
    }
    return n;
}

ordered_json candidate_json(const GenerationCandidate& c) {
    ordered_json j;
    j["text"] = c.text;
    j["score"] = c.rank_score;
    j["adv_score"] = c.adv_score;
    j["att_log_confidence"] = c.att_log_confidence ? ordered_json(*c.att_log_confidence) : ordered_json(nullptr);
    j["length"] = c.tokens.size();
    return j;
}

}  // namespace

SeedMode parse_seed_mode(const std::string& text) {
    if (text == "fixed") return SeedMode::fixed;
    if (text == "entropy") return SeedMode::entropy;
    throw std::invalid_argument("unknown seed mode '" + text + "' (expected fixed or entropy)");
}

struct ChatService::Session {
    struct Entry {
        std::string speaker;
        std::string role;
        std::string text;
        Turn turn;
    };

    std::mutex mutex;
    std::string id;
    std::string snapshot_id;
    std::string created;
    std::shared_ptr<const PhredModel> model;
    std::vector<Entry> history;
};

struct ChatService::State {
    ServiceOptions options;
    std::mutex snapshots_mutex;
    std::map<std::string, std::shared_ptr<const PhredModel>> loaded;
    std::mutex sessions_mutex;
    std::map<std::string, std::shared_ptr<Session>> sessions;
    std::atomic<long> next_session{1};
    std::mutex entropy_mutex;
    std::random_device entropy;

    std::vector<std::pair<std::string, fs::path>> list_snapshots() const {
        std::vector<std::pair<std::string, fs::path>> out;
        if (!fs::is_directory(options.snapshot_dir)) return out;
        auto consider = [&](const fs::path& dir) {
            if (fs::is_regular_file(dir / "manifest.json") && fs::is_regular_file(dir / "vocab.txt")) {
                out.emplace_back(fs::relative(dir, options.snapshot_dir).generic_string(), dir);
            }
        };
        for (const auto& e : fs::directory_iterator(options.snapshot_dir)) {
            if (!e.is_directory()) continue;
            consider(e.path());
            for (const auto& inner : fs::directory_iterator(e.path())) {
                if (inner.is_directory()) consider(inner.path());
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    std::shared_ptr<const PhredModel> snapshot(const std::string& id) {
        std::lock_guard<std::mutex> lock(snapshots_mutex);
        if (auto it = loaded.find(id); it != loaded.end()) return it->second;
        for (const auto& [sid, dir] : list_snapshots()) {
            if (sid != id) continue;
            std::shared_ptr<const PhredModel> model;
            try {
                model = std::shared_ptr<const PhredModel>(load_checkpoint(dir).model.release());
            } catch (const std::exception& e) {
                throw ApiError(409, "snapshot '" + id + "' failed to load: " + e.what());
            }
            loaded.emplace(id, model);
            logging::info("loaded snapshot ", id);
            return model;
        }
        throw ApiError(404, "unknown snapshot '" + id + "'");
    }

    std::shared_ptr<Session> session(const std::string& id) {
        std::lock_guard<std::mutex> lock(sessions_mutex);
        auto it = sessions.find(id);
        if (it == sessions.end()) throw ApiError(404, "unknown session '" + id + "'");
        return it->second;
    }

    std::uint64_t request_seed(const Session& s, const std::vector<Turn>& context, const std::string& tag) {
        if (options.seed_mode == SeedMode::entropy) {
            std::lock_guard<std::mutex> lock(entropy_mutex);
            return (static_cast<std::uint64_t>(entropy()) << 32) ^ entropy();
        }
        std::uint64_t h = fnv1a64(s.snapshot_id);
        for (const Turn& t : context) {
            h = fnv1a64(std::to_string(t.attribute) + ":", h);
            for (int w : t.tokens) h = fnv1a64(std::to_string(w) + " ", h);
            h = fnv1a64("|", h);
        }
        return fnv1a64(tag, h);
    }

    void persist(const Session& s, const Session::Entry& e) const {
        if (!options.persist_dir) return;
        fs::create_directories(*options.persist_dir);
        std::ofstream out(*options.persist_dir / (s.id + ".jsonl"), std::ios::binary | std::ios::app);
        ordered_json j;
        j["session_id"] = s.id;
        j["snapshot_id"] = s.snapshot_id;
        j["speaker"] = e.speaker;
        j["role"] = e.role;
        j["text"] = e.text;
        out << j.dump() << '\n';
    }
};

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int attribute_or_400(const PhredModel& model, const std::string& label, const char* what) {
    if (auto k = model.attributes().find(label)) return *k;
    std::string known;
    for (const auto& l : model.attributes().labels()) known += (known.empty() ? "" : ", ") + l;
    throw ApiError(400, std::string("unknown ") + what + " '" + label + "' (known: " + known + ")");
}

Turn user_turn(const PhredModel& model, int attribute, const std::string& text) {
    const auto tokens = tokenize(text);
    if (tokens.empty()) throw ApiError(400, "text is empty");
    return {attribute, model.vocabulary().encode(tokens)};
}

}  // namespace

ChatService::ChatService(ServiceOptions options) : state_(std::make_unique<State>()) {
    state_->options = std::move(options);
}

ChatService::~ChatService() = default;

void ChatService::mount(httplib::Server& server) {
    State& st = *state_;
    auto wrap = [](auto handler) {
        return [handler](const httplib::Request& req, httplib::Response& res) {
            try {
                auto [status, body] = handler(req);
                res.status = status;
                res.set_content(body.dump(), "application/json");
            } catch (const ApiError& e) {
                res.status = e.status;
                res.set_content(ordered_json{{"code", e.status}, {"message", e.what()}}.dump(), "application/json");
            } catch (const std::exception& e) {
                logging::error("request ", req.method, " ", req.path, " failed: ", e.what());
                res.status = 500;
                res.set_content(ordered_json{{"code", 500}, {"message", e.what()}}.dump(), "application/json");
            }
        };
    };

    server.Get("/v1/snapshots", wrap([&st](const httplib::Request&) {
        ordered_json list = ordered_json::array();
        for (const auto& [id, dir] : st.list_snapshots()) {
            std::ifstream in(dir / "manifest.json");
            ordered_json entry;
            entry["id"] = id;
            try {
                const json m = json::parse(in);
                entry["variant"] = m.at("variant");
                entry["step"] = m.at("step");
            } catch (const std::exception&) {
                entry["variant"] = nullptr;
            }
            std::ifstream attrs(dir / "attributes.txt");
            std::vector<std::string> labels;
            for (std::string line; std::getline(attrs, line);) {
                if (!line.empty()) labels.push_back(line);
            }
            entry["attributes"] = labels;
            list.push_back(entry);
        }
        return std::pair{200, ordered_json{{"snapshots", list}}};
    }));

    server.Post("/v1/sessions", wrap([&st](const httplib::Request& req) {
        const json body = parse_body(req);
        const auto snapshot_id = field<std::string>(body, "snapshot_id");
        auto model = st.snapshot(snapshot_id);
        auto s = std::make_shared<Session>();
        s->id = "s" + std::to_string(st.next_session++);
        s->snapshot_id = snapshot_id;
        s->created = utc_now();
        s->model = model;
        {
            std::lock_guard<std::mutex> lock(st.sessions_mutex);
            st.sessions.emplace(s->id, s);
        }
        ordered_json out;
        out["session_id"] = s->id;
        out["snapshot_id"] = snapshot_id;
        out["variant"] = to_string(model->variant());
        out["attributes"] = model->attributes().labels();
        return std::pair{201, out};
    }));

    server.Get(R"(/v1/sessions/([^/]+))", wrap([&st](const httplib::Request& req) {
        auto s = st.session(req.matches[1]);
        std::lock_guard<std::mutex> lock(s->mutex);
        ordered_json turns = ordered_json::array();
        for (const auto& e : s->history) turns.push_back({{"speaker", e.speaker}, {"role", e.role}, {"text", e.text}});
        ordered_json out;
        out["session_id"] = s->id;
        out["snapshot_id"] = s->snapshot_id;
        out["created"] = s->created;
        out["attributes"] = s->model->attributes().labels();
        out["turns"] = turns;
        return std::pair{200, out};
    }));

    server.Post(R"(/v1/sessions/([^/]+)/message)", wrap([&st](const httplib::Request& req) {
        auto s = st.session(req.matches[1]);
        const json body = parse_body(req);
        std::lock_guard<std::mutex> lock(s->mutex);
        if (!s->model) throw ApiError(409, "session snapshot is not loaded");
        const PhredModel& model = *s->model;
        const std::string speaker = field<std::string>(body, "speaker");
        const std::string respond_as = field<std::string>(body, "respond_as");
        const std::string text = field<std::string>(body, "text");
        const int speaker_k = attribute_or_400(model, speaker, "speaker");
        const int target_k = attribute_or_400(model, respond_as, "respond_as");

        GenerationRequest gr;
        for (const auto& e : s->history) gr.context.push_back(e.turn);
        gr.context.push_back(user_turn(model, speaker_k, text));
        gr.target_attribute = target_k;
        gr.num_candidates = candidate_count(body);
        gr.max_len = model.config().max_len;
        gr.alpha = optional_field<double>(body, "alpha").value_or(st.options.alpha.value_or(model.config().noise_std));
        gr.seed = st.request_seed(*s, gr.context, "message:" + respond_as + ":" + std::to_string(gr.num_candidates));
        const auto candidates = generate(model, gr);

        Session::Entry user{speaker, "user", text, gr.context.back()};
        std::vector<int> reply_tokens = candidates.front().tokens;
        if (!reply_tokens.empty() && reply_tokens.back() == Vocabulary::eos) reply_tokens.pop_back();
        if (reply_tokens.empty()) reply_tokens.push_back(Vocabulary::unk);
        Session::Entry reply{respond_as, "model", candidates.front().text, {target_k, reply_tokens}};
        s->history.push_back(user);
        s->history.push_back(reply);
        st.persist(*s, user);
        st.persist(*s, reply);

        ordered_json list = ordered_json::array();
        for (const auto& c : candidates) list.push_back(candidate_json(c));
        ordered_json out;
        out["responses"] = list;
        out["ranked"] = true;
        out["turn_count"] = s->history.size();
        return std::pair{200, out};
    }));

    server.Post(R"(/v1/sessions/([^/]+)/whatif)", wrap([&st](const httplib::Request& req) {
        auto s = st.session(req.matches[1]);
        const json body = parse_body(req);
        std::lock_guard<std::mutex> lock(s->mutex);
        if (!s->model) throw ApiError(409, "session snapshot is not loaded");
        const PhredModel& model = *s->model;
        std::vector<Turn> context;
        for (const auto& e : s->history) context.push_back(e.turn);
        if (const auto text = optional_field<std::string>(body, "text")) {
            const auto speaker = optional_field<std::string>(body, "speaker");
            int k = 0;
            if (speaker) {
                k = attribute_or_400(model, *speaker, "speaker");
            } else if (!s->history.empty()) {
                k = s->history.back().turn.attribute;
            }
            context.push_back(user_turn(model, k, *text));
        }
        if (context.empty()) throw ApiError(400, "empty session and no text to respond to");
        const int n = candidate_count(body);
        const double alpha =
            optional_field<double>(body, "alpha").value_or(st.options.alpha.value_or(model.config().noise_std));
        ordered_json per = ordered_json::object();
        for (int k = 0; k < model.attributes().size(); ++k) {
            const std::string& label = model.attributes().label(k);
            GenerationRequest gr;
            gr.context = context;
            gr.target_attribute = k;
            gr.num_candidates = n;
            gr.max_len = model.config().max_len;
            gr.alpha = alpha;
            gr.seed = st.request_seed(*s, context, "whatif:" + label + ":" + std::to_string(n));
            per[label] = candidate_json(generate(model, gr).front());
        }
        return std::pair{200, ordered_json{{"per_attribute", per}, {"turn_count", s->history.size()}}};
    }));

    if (st.options.ui_dir) {
        if (!server.set_mount_point("/ui", st.options.ui_dir->string())) {
            logging::error("cannot serve ", st.options.ui_dir->string(), " under /ui");
        }
    }
}

int serve(const ServiceOptions& options, const std::string& host, int port) {
    if (!fs::is_directory(options.snapshot_dir)) {
        throw std::runtime_error("snapshot directory " + options.snapshot_dir.string() + " does not exist");
    }
    ChatService service(options);
    httplib::Server server;
    service.mount(server);
    logging::info("serving ", options.snapshot_dir.string(), " on ", host, ":", port);
    if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
    return 0;
}

}  // namespace phred
