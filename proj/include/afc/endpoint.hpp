// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "afc/cml.hpp"
#include "afc/runtime.hpp"

namespace httplib {
class Server;
}

namespace afc::endpoint {

/// Wire format (see README): POST a JSON body {"model", "context",
/// "stream": true}; the response is a newline-delimited stream of
/// {"token": "...", "done": false} chunks ending with {"done": true}.
/// A stateless endpoint continues from the posted context, so injection is
/// implemented as a restart with the accumulated context.

struct EndpointConfig {
    std::string url; // http://host:port/path
    std::string auth_header = "Authorization";
    std::string auth_value;      // sent when nonempty; never echoed in errors
    std::string model = "default";
    double tpot_ms = 5.0;        // context-token accounting only
    int max_attempts = 3;        // connect retries, capped exponential backoff
    double backoff_ms = 200;
};

class EndpointError : public std::runtime_error {
public:
    explicit EndpointError(const std::string& what) : std::runtime_error(what) {}
};

struct ParsedUrl {
    std::string host;
    int port = 80;
    std::string path = "/";
};
ParsedUrl parse_url(const std::string& url); // throws EndpointError

/// Streaming client source. Pulls lexed CML tokens from the endpoint;
/// inject() appends to the context and restarts the request (naive mode).
class EndpointSource : public runtime::TokenSource {
public:
    EndpointSource(EndpointConfig cfg, std::string initial_context);
    ~EndpointSource() override;

    std::optional<runtime::StreamToken> next_token() override;
    void inject(const std::vector<cml::Token>& tokens, const std::vector<cml::CmlBlock>& blocks) override;
    void restart(const std::string& context) override;

    const std::string& context() const { return context_; }
    int restarts() const { return restarts_; }

private:
    void start_stream();
    void stop_stream();

    EndpointConfig cfg_;
    ParsedUrl url_;
    std::string context_;
    bool need_start_ = true;
    int restarts_ = -1; // first start is not a restart

    cml::Lexer lexer_;
    std::deque<cml::Token> pending_;

    std::mutex m_;
    std::condition_variable cv_;
    std::deque<std::string> lines_;
    bool stream_done_ = true;
    std::string stream_error_;
    std::atomic<bool> cancel_{false};
    std::thread worker_;
};

/// Minimal endpoint for tests and demos: serves one scripted token stream
/// over the wire format above, with configurable TTFT and TPOT delays. Each
/// request resumes the script after whatever prefix already appears in the
/// posted context, and every stream pauses after a trap block (the naive
/// client restarts once it has results to inject).
struct StubServerConfig {
    std::string host = "127.0.0.1";
    int port = 0; // 0 picks a free port
    std::string path = "/v1/stream";
    std::string script;
    double ttft_ms = 0;
    double tpot_ms = 0;
    std::string auth_header; // require this header to match when nonempty
    std::string auth_value;
};

class StubServer {
public:
    explicit StubServer(StubServerConfig cfg);
    ~StubServer();

    void start();
    void stop();
    int port() const { return port_; }
    std::string url() const;

private:
    StubServerConfig cfg_;
    std::vector<cml::Token> script_tokens_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

} // namespace afc::endpoint
