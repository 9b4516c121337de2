// SPDX-License-Identifier: Apache-2.0
#include "afc/endpoint.hpp"

#include <chrono>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

namespace afc::endpoint {

ParsedUrl parse_url(const std::string& url) {
    ParsedUrl out;
    const std::string prefix = "http://";
    if (url.rfind(prefix, 0) != 0) throw EndpointError("endpoint url must start with http://");
    std::string rest = url.substr(prefix.size());
    const auto slash = rest.find('/');
    std::string hostport = rest.substr(0, slash);
    out.path = slash == std::string::npos ? "/" : rest.substr(slash);
    const auto colon = hostport.find(':');
    if (colon == std::string::npos) {
        out.host = hostport;
    } else {
        out.host = hostport.substr(0, colon);
        out.port = std::stoi(hostport.substr(colon + 1));
    }
    if (out.host.empty()) throw EndpointError("endpoint url has no host");
    return out;
}

EndpointSource::EndpointSource(EndpointConfig cfg, std::string initial_context)
    : cfg_(std::move(cfg)), url_(parse_url(cfg_.url)), context_(std::move(initial_context)) {}

EndpointSource::~EndpointSource() { stop_stream(); }

void EndpointSource::stop_stream() {
    cancel_.store(true);
    if (worker_.joinable()) worker_.join();
    cancel_.store(false);
}

void EndpointSource::start_stream() {
    stop_stream();
    {
        std::lock_guard lock(m_);
        lines_.clear();
        stream_done_ = false;
        stream_error_.clear();
    }
    ++restarts_;
    need_start_ = false;

    worker_ = std::thread([this] {
        std::string carry;
        std::string failure;
        bool connected = false;
        for (int attempt = 0; attempt < cfg_.max_attempts && !connected && !cancel_.load(); ++attempt) {
            if (attempt > 0) {
                const double delay = std::min(cfg_.backoff_ms * std::pow(2.0, attempt - 1), 2000.0);
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
            }
            httplib::Client cli(url_.host, url_.port);
            cli.set_read_timeout(600, 0);
            httplib::Request req;
            req.method = "POST";
            req.path = url_.path;
            req.headers.emplace("Content-Type", "application/json");
            if (!cfg_.auth_value.empty()) req.headers.emplace(cfg_.auth_header, cfg_.auth_value);
            const nlohmann::json body{{"model", cfg_.model}, {"context", context_}, {"stream", true}};
            req.body = body.dump();
            req.content_receiver = [&](const char* data, size_t len, std::uint64_t, std::uint64_t) {
                carry.append(data, len);
                std::size_t nl;
                while ((nl = carry.find('\n')) != std::string::npos) {
                    std::string line = carry.substr(0, nl);
                    carry.erase(0, nl + 1);
                    if (line.empty()) continue;
                    std::lock_guard lock(m_);
                    lines_.push_back(std::move(line));
                    cv_.notify_all();
                }
                return !cancel_.load();
            };
            httplib::Response res;
            httplib::Error err = httplib::Error::Success;
            if (!cli.send(req, res, err)) {
                failure = "connection to endpoint failed (" + httplib::to_string(err) + ")";
                continue; // retry
            }
            connected = true;
            if (res.status != 200)
                failure = "endpoint returned status " + std::to_string(res.status);
            else
                failure.clear();
        }
        std::lock_guard lock(m_);
        stream_error_ = failure; // sanitized: never includes the auth value
        stream_done_ = true;
        cv_.notify_all();
    });
}

std::optional<runtime::StreamToken> EndpointSource::next_token() {
    for (;;) {
        if (!pending_.empty()) {
            cml::Token tok = std::move(pending_.front());
            pending_.pop_front();
            if (tok.kind == cml::TokenKind::Text)
                context_ += " " + tok.text + " ";
            else
                context_ += cml::sentinel_text(tok.kind);
            runtime::StreamToken st;
            st.count = tok.kind == cml::TokenKind::Text
                           ? static_cast<std::int64_t>((tok.text.size() + 3) / 4)
                           : (tok.kind == cml::TokenKind::Eos ? 0 : 1);
            st.cost_ticks = 0; // wall clock carries the time
            st.token = std::move(tok);
            return st;
        }
        if (need_start_) start_stream();

        std::string line;
        {
            std::unique_lock lock(m_);
            cv_.wait(lock, [&] { return !lines_.empty() || stream_done_; });
            if (lines_.empty()) {
                if (!stream_error_.empty()) throw EndpointError(stream_error_);
                // Stream ended (after a trap or the script ran out). Flush the
                // lexer; anything left is the tail of the session.
                lock.unlock();
                lexer_.finish();
                while (auto t = lexer_.next()) pending_.push_back(std::move(*t));
                if (pending_.empty()) return std::nullopt;
                continue;
            }
            line = std::move(lines_.front());
            lines_.pop_front();
        }
        nlohmann::json chunk = nlohmann::json::parse(line, nullptr, false);
        if (chunk.is_discarded()) throw EndpointError("endpoint sent a malformed stream chunk");
        if (chunk.value("done", false)) continue; // terminal marker; loop sees stream_done_
        lexer_.push(chunk.value("token", std::string{}));
        while (auto t = lexer_.next()) pending_.push_back(std::move(*t));
    }
}

void EndpointSource::inject(const std::vector<cml::Token>& tokens, const std::vector<cml::CmlBlock>&) {
    restart(context_ + cml::to_text(tokens));
}

void EndpointSource::restart(const std::string& context) {
    stop_stream();
    context_ = context;
    need_start_ = true; // a fresh request begins at the next pull
}

// ---------------------------------------------------------------------------
// Stub server.

StubServer::StubServer(StubServerConfig cfg) : cfg_(std::move(cfg)) {
    cml::Lexer lex;
    lex.push(cfg_.script);
    lex.finish();
    while (auto t = lex.next()) script_tokens_.push_back(std::move(*t));
    server_ = std::make_unique<httplib::Server>();
}

StubServer::~StubServer() { stop(); }

std::string StubServer::url() const {
    return "http://" + cfg_.host + ":" + std::to_string(port_) + cfg_.path;
}

void StubServer::start() {
    server_->Post(cfg_.path, [this](const httplib::Request& req, httplib::Response& res) {
        if (!cfg_.auth_header.empty()) {
            if (req.get_header_value(cfg_.auth_header) != cfg_.auth_value) {
                res.status = 401;
                res.set_content("{\"error\":\"unauthorized\"}\n", "application/json");
                return;
            }
        }
        nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
        const std::string context = body.is_discarded() ? "" : body.value("context", std::string{});

        // Resume after the longest script prefix already present in the
        // context (in order); injected blocks in between are skipped over.
        std::size_t cursor = 0, pos = 0;
        while (cursor < script_tokens_.size()) {
            const cml::Token& t = script_tokens_[cursor];
            const std::string needle = t.kind == cml::TokenKind::Text
                                           ? t.text
                                           : std::string(cml::sentinel_text(t.kind));
            const std::size_t at = context.find(needle, pos);
            if (at == std::string::npos) break;
            pos = at + needle.size();
            ++cursor;
        }

        const double ttft = cfg_.ttft_ms;
        const double tpot = cfg_.tpot_ms;
        auto tokens = script_tokens_; // copy for the provider closure
        res.set_chunked_content_provider(
            "application/x-ndjson",
            [tokens, cursor, ttft, tpot, first = true,
             i = cursor](std::size_t /*offset*/, httplib::DataSink& sink) mutable {
                if (first) {
                    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ttft));
                    first = false;
                }
                if (i >= tokens.size()) {
                    const std::string fin = "{\"done\":true}\n";
                    sink.write(fin.data(), fin.size());
                    sink.done();
                    return false;
                }
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(tpot));
                const cml::Token& t = tokens[i];
                const std::string piece = t.kind == cml::TokenKind::Text
                                              ? " " + t.text + " "
                                              : std::string(cml::sentinel_text(t.kind));
                const nlohmann::json chunk{{"token", piece}, {"done", false}};
                const std::string line = chunk.dump() + "\n";
                sink.write(line.data(), line.size());
                // Pause the stream after a trap block: the client will come
                // back with the interrupt in context.
                const bool pause = t.kind == cml::TokenKind::End && i > 0 &&
                                   tokens[i - 1].kind == cml::TokenKind::Trap;
                ++i;
                if (pause || (i <= tokens.size() && t.kind == cml::TokenKind::Eos)) {
                    const std::string fin = "{\"done\":true}\n";
                    sink.write(fin.data(), fin.size());
                    sink.done();
                    return false;
                }
                return true;
            });
    });

    if (cfg_.port == 0) {
        port_ = server_->bind_to_any_port(cfg_.host);
    } else {
        server_->bind_to_port(cfg_.host, cfg_.port);
        port_ = cfg_.port;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void StubServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

} // namespace afc::endpoint
