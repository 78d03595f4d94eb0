// SPDX-License-Identifier: Apache-2.0
//
// HTTP chat service over trained snapshots.
//
//   POST /v1/sessions                 {snapshot_id}
//   POST /v1/sessions/{id}/message    {speaker, text, respond_as, num_candidates?, alpha?}
//   POST /v1/sessions/{id}/whatif     {text?, speaker?, num_candidates?, alpha?}
//   GET  /v1/sessions/{id}
//   GET  /v1/snapshots
//
// Errors are {"code": <http status>, "message": ...}. A snapshot is any
// directory under the snapshot root (up to two levels deep) holding a
// checkpoint manifest; its id is the path relative to the root.

#ifndef PHRED_SERVICE_HPP
#define PHRED_SERVICE_HPP

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace phred {

class PhredModel;

enum class SeedMode { fixed, entropy };

SeedMode parse_seed_mode(const std::string& text);

struct ServiceOptions {
    std::filesystem::path snapshot_dir;
    std::optional<std::filesystem::path> persist_dir;
    std::optional<std::filesystem::path> ui_dir;
    SeedMode seed_mode = SeedMode::fixed;
    // Noise level for generation; unset uses the snapshot's training noise.
    std::optional<double> alpha;
};

class ChatService {
public:
    explicit ChatService(ServiceOptions options);
    ~ChatService();
    ChatService(const ChatService&) = delete;
    ChatService& operator=(const ChatService&) = delete;

    void mount(httplib::Server& server);

private:
    struct Session;
    struct State;
    std::unique_ptr<State> state_;
};

// Blocks until the server stops.
int serve(const ServiceOptions& options, const std::string& host, int port);

}  // namespace phred

#endif  // PHRED_SERVICE_HPP
