// SPDX-License-Identifier: Apache-2.0
#include "afc/runtime.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace afc::runtime {

namespace {

std::int64_t text_token_count(std::string_view s) {
    return static_cast<std::int64_t>((s.size() + 3) / 4);
}

std::int64_t default_value_tokens(const std::string& value) { return text_token_count(value); }

} // namespace

// ---------------------------------------------------------------------------
// Trap handling.

void TrapCostModel::validate() const {
    if (swap_ms_per_token <= 0 || recompute_quad_ms_per_token2 <= 0 || recompute_lin_ms_per_token <= 0)
        throw std::invalid_argument("trap cost coefficients must be positive");
}

std::optional<TrapCostModel> TrapCostModel::by_name(std::string_view name) {
    if (name == "1b") return profile_1b();
    if (name == "3b") return profile_3b();
    return std::nullopt;
}

std::string_view trap_decision_name(TrapDecision d) {
    switch (d) {
    case TrapDecision::Retain: return "retain";
    case TrapDecision::Swap: return "swap";
    case TrapDecision::Recompute: return "recompute";
    }
    return "?";
}

TrapDecision handle_trap(std::int64_t context_tokens, double expected_wait_ms, const TrapCostModel& model) {
    if (std::isinf(expected_wait_ms)) throw NoPendingJobs();
    const double swap = model.swap_ms(context_tokens);
    const double recompute = model.recompute_ms(context_tokens);
    if (std::min(swap, recompute) > expected_wait_ms) return TrapDecision::Retain;
    return recompute <= swap ? TrapDecision::Recompute : TrapDecision::Swap;
}

// ---------------------------------------------------------------------------
// Interrupt queue.

void InterruptQueue::push(PendingInterrupt intr) {
    {
        std::lock_guard lock(m_);
        q_.push_back(std::move(intr));
    }
    cv_.notify_one();
}

std::vector<PendingInterrupt> InterruptQueue::drain() {
    std::lock_guard lock(m_);
    std::vector<PendingInterrupt> out(q_.begin(), q_.end());
    q_.clear();
    return out;
}

bool InterruptQueue::empty() const {
    std::lock_guard lock(m_);
    return q_.empty();
}

std::size_t InterruptQueue::size() const {
    std::lock_guard lock(m_);
    return q_.size();
}

bool InterruptQueue::wait_nonempty_for(std::chrono::milliseconds timeout) {
    std::unique_lock lock(m_);
    return cv_.wait_for(lock, timeout, [&] { return !q_.empty(); });
}

// ---------------------------------------------------------------------------
// Registry / resolution.

void FunctionRegistry::add(FunctionSpec spec) {
    auto name = spec.name;
    specs_[std::move(name)] = std::move(spec);
}

const FunctionSpec* FunctionRegistry::find(const std::string& name) const {
    auto it = specs_.find(name);
    return it == specs_.end() ? nullptr : &it->second;
}

FunctionRegistry FunctionRegistry::for_graph(const taskmodel::TaskGraph& g) {
    FunctionRegistry reg;
    for (const auto& [id, n] : g.nodes()) reg.add(FunctionSpec{n.name, n.exec_ms, "done", nullptr});
    return reg;
}

std::string leading_identifier(std::string_view body) {
    std::size_t b = 0;
    while (b < body.size() && std::isspace(static_cast<unsigned char>(body[b]))) ++b;
    std::size_t e = b;
    if (e < body.size() && (std::isalpha(static_cast<unsigned char>(body[e])) || body[e] == '_')) {
        ++e;
        while (e < body.size() && (std::isalnum(static_cast<unsigned char>(body[e])) || body[e] == '_')) ++e;
    }
    return std::string(body.substr(b, e - b));
}

CallResolver make_registry_resolver(const FunctionRegistry& reg) {
    return [&reg](const cml::FunctionCall& call) {
        ResolvedCall rc;
        rc.name = leading_identifier(call.body);
        const FunctionSpec* spec = reg.find(rc.name);
        if (!spec) return rc;
        rc.known = true;
        rc.exec_ms = spec->exec_ms.value_or(0.0);
        rc.est_exec_ms = spec->exec_ms;
        rc.value = spec->result;
        return rc;
    };
}

// ---------------------------------------------------------------------------
// Sources.

ScriptSource::ScriptSource(std::string cml_text, double tpot_ms) {
    cml::Lexer lex;
    lex.push(cml_text);
    lex.finish();
    const Tick per_token = ticks_from_ms(tpot_ms);
    while (auto tok = lex.next()) {
        StreamToken st;
        if (tok->kind == cml::TokenKind::Text)
            st.count = text_token_count(tok->text);
        else if (tok->kind == cml::TokenKind::Eos)
            st.count = 0;
        else
            st.count = 1;
        st.cost_ticks = per_token * st.count;
        st.token = std::move(*tok);
        tokens_.push_back(std::move(st));
    }
}

std::optional<StreamToken> ScriptSource::next_token() {
    if (tokens_.empty()) return std::nullopt;
    StreamToken st = std::move(tokens_.front());
    tokens_.pop_front();
    context_ += st.token.kind == cml::TokenKind::Text ? " " + st.token.text + " " : st.token.text;
    return st;
}

void ScriptSource::inject(const std::vector<cml::Token>& tokens, const std::vector<cml::CmlBlock>&) {
    context_ += cml::to_text(tokens);
}

GraphSource::GraphSource(taskmodel::TaskGraph graph, PickPolicy policy, std::uint64_t seed)
    : graph_(std::move(graph)), policy_(policy), rng_(seed) {
    taskmodel::topological_check(graph_);
    for (const auto& [id, n] : graph_.nodes()) pending_.insert(id);
}

void GraphSource::queue_call_block(const std::string& id) {
    const taskmodel::CallNode& n = graph_.node(id);
    const Tick gen = ticks_from_ms(static_cast<double>(n.body_tokens) * graph_.tpot_ms());
    // Control tokens carry zero generation cost: the per-call generation
    // latency is exactly body_tokens x TPOT, matching the closed forms.
    emit_.push_back({cml::Token::sentinel(cml::TokenKind::Call), 0, 1});
    emit_.push_back({cml::Token::make_text(id), 0, 1});
    emit_.push_back({cml::Token::sentinel(cml::TokenKind::Head), 0, 1});
    emit_.push_back({cml::Token::make_text(n.name + "()"), gen, n.body_tokens});
    emit_.push_back({cml::Token::sentinel(cml::TokenKind::End), 0, 1});
}

void GraphSource::decide() {
    std::set<std::string> ready;
    for (const auto& id : pending_) {
        const auto& deps = graph_.node(id).deps;
        if (std::all_of(deps.begin(), deps.end(),
                        [&](const std::string& d) { return completed_.count(d) != 0; }))
            ready.insert(id);
    }
    if (!ready.empty()) {
        std::string pick;
        if (policy_ == PickPolicy::Lpt) {
            double best = -1;
            for (const auto& id : ready) { // ascending ids: ties keep the smaller
                const double e = graph_.node(id).exec_ms;
                if (e > best) {
                    best = e;
                    pick = id;
                }
            }
        } else {
            std::vector<std::string> ids(ready.begin(), ready.end());
            pick = ids[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(ids.size()) - 1))];
        }
        pending_.erase(pick);
        generating_ = pick;
        queue_call_block(pick);
    } else if (pending_.empty() && in_flight_.empty()) {
        emit_.push_back({cml::Token::sentinel(cml::TokenKind::Eos), 0, 0});
    } else {
        emit_.push_back({cml::Token::sentinel(cml::TokenKind::Trap), 0, 1});
        emit_.push_back({cml::Token::sentinel(cml::TokenKind::End), 0, 1});
    }
}

std::optional<StreamToken> GraphSource::next_token() {
    if (emit_.empty()) decide();
    StreamToken st = std::move(emit_.front());
    emit_.pop_front();
    if (st.token.kind == cml::TokenKind::End && generating_) {
        in_flight_.insert(*generating_);
        generating_.reset();
    }
    return st;
}

void GraphSource::inject(const std::vector<cml::Token>&, const std::vector<cml::CmlBlock>& blocks) {
    for (const auto& b : blocks) {
        if (!b.is_interrupt()) continue;
        const std::string& id = b.interrupt().id;
        if (in_flight_.erase(id)) completed_.insert(id);
    }
}

void GraphSource::merge_task(const taskmodel::TaskGraph& g, const std::string& id_prefix) {
    for (const auto& [id, n] : g.nodes()) {
        taskmodel::CallNode m = n;
        m.id = id_prefix + id;
        for (auto& d : m.deps) d = id_prefix + d;
        graph_.add_node(m);
        pending_.insert(m.id);
    }
}

// ---------------------------------------------------------------------------
// Transcript.

std::string_view event_kind_name(EventKind k) {
    switch (k) {
    case EventKind::SessionStart: return "session_start";
    case EventKind::Token: return "token";
    case EventKind::CallDetected: return "call";
    case EventKind::Dispatch: return "dispatch";
    case EventKind::TrapDetected: return "trap";
    case EventKind::TrapDecisionMade: return "trap_decision";
    case EventKind::Completion: return "completion";
    case EventKind::InterruptInjected: return "interrupt_injected";
    case EventKind::Restart: return "restart";
    case EventKind::Arrival: return "arrival";
    case EventKind::SessionEnd: return "session_end";
    case EventKind::SessionError: return "error";
    }
    return "?";
}

nlohmann::json Event::to_json() const {
    nlohmann::json j{{"t_ms", ms_from_ticks(t)}, {"kind", event_kind_name(kind)}};
    for (auto it = fields.begin(); it != fields.end(); ++it) j[it.key()] = it.value();
    return j;
}

std::string SessionTranscript::to_jsonl() const {
    std::ostringstream os;
    for (const Event& e : events) os << e.to_json().dump() << '\n';
    return os.str();
}

std::vector<std::pair<cml::Token, bool>> SessionTranscript::token_stream() const {
    std::vector<std::pair<cml::Token, bool>> out;
    for (const Event& e : events) {
        if (e.kind != EventKind::Token) continue;
        const std::string text = e.fields.value("text", std::string{});
        cml::Token tok;
        if (auto k = cml::sentinel_from_text(text))
            tok = cml::Token::sentinel(*k);
        else
            tok = cml::Token::make_text(text);
        out.emplace_back(std::move(tok), e.fields.value("injected", false));
    }
    return out;
}

std::size_t drain_interrupts(
    InterruptQueue& queue, bool critical, TokenSource& source,
    const std::function<void(const cml::Token&, const PendingInterrupt&, bool)>& on_token,
    const std::function<void(const cml::CmlBlock&)>& on_block) {
    if (critical) return 0; // deferred until the open block closes
    auto batch = queue.drain();
    if (batch.empty()) return 0;
    std::vector<cml::Token> all_tokens;
    std::vector<cml::CmlBlock> blocks;
    for (const PendingInterrupt& pi : batch) {
        cml::CmlBlock block{cml::Interrupt{pi.id, pi.value}};
        auto tokens = cml::serialize(block);
        bool id_text_seen = false;
        for (auto& tok : tokens) {
            const bool is_value = tok.kind == cml::TokenKind::Text && id_text_seen;
            if (tok.kind == cml::TokenKind::Text) id_text_seen = true;
            if (on_token) on_token(tok, pi, is_value);
            all_tokens.push_back(std::move(tok));
        }
        blocks.push_back(std::move(block));
    }
    source.inject(all_tokens, blocks);
    if (on_block)
        for (const cml::CmlBlock& b : blocks) on_block(b);
    return batch.size();
}

std::vector<std::string> check_transcript(const SessionTranscript& transcript) {
    std::vector<std::string> issues;
    cml::Parser parser;
    std::vector<cml::CmlBlock> blocks;
    bool inside_block = false;
    for (const auto& [tok, injected] : transcript.token_stream()) {
        if (tok.kind == cml::TokenKind::Intr) {
            if (!injected) issues.push_back("interrupt token generated by the model");
            if (inside_block) issues.push_back("interrupt token inside a call or trap span");
        }
        try {
            auto res = parser.feed(tok, injected);
            inside_block = res.critical;
            if (res.block) blocks.push_back(std::move(*res.block));
        } catch (const std::exception& e) {
            issues.push_back(std::string("transcript does not re-parse: ") + e.what());
            return issues;
        }
    }
    std::map<std::string, int> calls, interrupts;
    for (const cml::CmlBlock& b : blocks) {
        if (b.is_call() && b.call().id) ++calls[*b.call().id];
        if (b.is_interrupt()) ++interrupts[b.interrupt().id];
    }
    for (const auto& [id, n] : calls) {
        if (n != 1) issues.push_back("call id " + id + " used " + std::to_string(n) + " times");
        const int got = interrupts.count(id) ? interrupts.at(id) : 0;
        if (got != 1)
            issues.push_back("call " + id + " paired with " + std::to_string(got) + " interrupts");
    }
    for (const auto& [id, n] : interrupts)
        if (!calls.count(id) && id.rfind("user_", 0) != 0)
            issues.push_back("interrupt " + id + " has no matching call");
    return issues;
}

// ---------------------------------------------------------------------------
// Virtual-time engine.

SessionEngine::SessionEngine(TokenSource& source, CallResolver resolver, EngineConfig cfg)
    : source_(source), resolver_(std::move(resolver)), cfg_(std::move(cfg)), rng_(Rng::mix(cfg_.seed, 0x5e55)) {
    if (!cfg_.interrupt_value_tokens) cfg_.interrupt_value_tokens = default_value_tokens;
    cfg_.trap_model.validate();
}

void SessionEngine::set_arrivals(std::vector<ArrivalEntry> arrivals, GraphSource* merge_target) {
    arrivals_.assign(arrivals.begin(), arrivals.end());
    merge_target_ = merge_target;
}

void SessionEngine::log(Tick t, EventKind kind, nlohmann::json fields) {
    if (cfg_.record_transcript) transcript_.events.push_back({t, kind, std::move(fields)});
}

void SessionEngine::fail(const std::string& msg) {
    log(clock_, EventKind::SessionError, {{"message", msg}});
    transcript_.error = true;
    transcript_.error_message = msg;
    transcript_.end_tick = clock_;
    transcript_.context_tokens = context_tokens_;
    done_ = true;
    throw SessionError(msg, transcript_);
}

void SessionEngine::deliver_due() {
    struct Due {
        Tick at;
        int pri; // completions before arrivals at the same tick
        std::uint64_t seq;
        PendingInterrupt intr;
        nlohmann::json event_fields;
        EventKind kind;
        bool enqueue;
    };
    std::vector<Due> due;

    for (auto it = jobs_.begin(); it != jobs_.end();) {
        if (it->done_at <= clock_) {
            Due d;
            d.at = it->done_at;
            d.pri = 0;
            d.seq = it->seq;
            d.kind = EventKind::Completion;
            d.event_fields = {{"id", it->id},
                              {"name", it->name},
                              {"status", it->ok ? "done" : "failed"},
                              {"value", it->value}};
            d.enqueue = !it->id.empty();
            d.intr = {it->id, it->value, it->done_at};
            due.push_back(std::move(d));
            it = jobs_.erase(it);
        } else {
            ++it;
        }
    }
    while (arrival_index_ < arrivals_.size() && arrivals_[arrival_index_].at <= clock_) {
        const ArrivalEntry& a = arrivals_[arrival_index_];
        const std::string uid = "user_" + std::to_string(arrival_index_);
        Due d;
        d.at = a.at;
        d.pri = 1;
        d.seq = arrival_index_;
        d.kind = EventKind::Arrival;
        d.event_fields = {{"id", uid}, {"graph", a.graph.graph_id()}};
        d.enqueue = true;
        d.intr = {uid, a.description.empty() ? a.graph.graph_id() : a.description, a.at};
        pending_user_tasks_[uid] = {a.graph, "u" + std::to_string(arrival_index_) + "_"};
        due.push_back(std::move(d));
        ++arrival_index_;
    }
    std::sort(due.begin(), due.end(), [](const Due& x, const Due& y) {
        return std::tie(x.at, x.pri, x.seq) < std::tie(y.at, y.pri, y.seq);
    });
    for (Due& d : due) {
        log(d.at, d.kind, std::move(d.event_fields));
        if (d.enqueue) queue_.push(std::move(d.intr));
    }
}

std::optional<Tick> SessionEngine::next_wake() const {
    std::optional<Tick> wake;
    for (const VirtualJob& j : jobs_)
        if (!wake || j.done_at < *wake) wake = j.done_at;
    if (arrival_index_ < arrivals_.size()) {
        const Tick at = arrivals_[arrival_index_].at;
        if (!wake || at < *wake) wake = at;
    }
    return wake;
}

void SessionEngine::inject_batch() {
    nlohmann::json ids = nlohmann::json::array();
    const std::size_t injected = drain_interrupts(
        queue_, parser_.critical(), source_,
        [&](const cml::Token& tok, const PendingInterrupt& pi, bool is_value) {
            try {
                parser_.feed(tok, /*system_injected=*/true);
            } catch (const std::exception& e) {
                fail(std::string("interrupt injection rejected: ") + e.what());
            }
            const std::int64_t count = is_value ? cfg_.interrupt_value_tokens(pi.value) : 1;
            context_tokens_ += count;
            transcript_.injected_tokens += count;
            log(clock_, EventKind::Token,
                {{"text", tok.text}, {"token_kind", std::string(cml::token_kind_name(tok.kind))},
                 {"count", count}, {"injected", true}});
        },
        [&](const cml::CmlBlock& b) {
            if (!b.is_interrupt()) return;
            ids.push_back(b.interrupt().id);
            ++transcript_.interrupts;
            auto it = pending_user_tasks_.find(b.interrupt().id);
            if (it != pending_user_tasks_.end()) {
                if (merge_target_) merge_target_->merge_task(it->second.first, it->second.second);
                pending_user_tasks_.erase(it);
            }
        });
    log(clock_, EventKind::InterruptInjected, {{"count", injected}, {"ids", ids}});
    if (cfg_.naive_restarts) {
        clock_ += cfg_.ttft_ticks;
        ++transcript_.restarts;
        log(clock_, EventKind::Restart, {{"ttft_ms", ms_from_ticks(cfg_.ttft_ticks)}});
    }
    waiting_ = false;
    draining_ = false;
    source_.resume();
}

void SessionEngine::dispatch_call(const cml::CmlBlock& block) {
    const cml::FunctionCall& c = block.call();
    ResolvedCall rc = resolver_(c);
    ++transcript_.calls;
    log(clock_, EventKind::CallDetected,
        {{"id", c.id ? nlohmann::json(*c.id) : nlohmann::json()}, {"body", c.body}});

    VirtualJob j;
    j.seq = job_seq_++;
    j.id = c.id.value_or("");
    j.name = rc.name;
    if (!rc.known) {
        j.ok = false;
        j.value = "error: unknown function '" + rc.name + "'";
        j.done_at = clock_;
        j.est_done_at = clock_;
    } else {
        double noise = 1.0;
        if (cfg_.exec_noise_factor != 1.0)
            noise = rng_.uniform(1.0 / cfg_.exec_noise_factor, cfg_.exec_noise_factor);
        j.done_at = clock_ + ticks_from_ms(rc.exec_ms * noise);
        j.est_done_at = rc.est_exec_ms ? clock_ + ticks_from_ms(*rc.est_exec_ms) : Tick{-1};
        j.value = rc.value;
    }
    log(clock_, EventKind::Dispatch,
        {{"id", j.id}, {"name", j.name}, {"known", rc.known},
         {"exec_ms", rc.known ? nlohmann::json(rc.exec_ms) : nlohmann::json()}});
    jobs_.push_back(std::move(j));
}

void SessionEngine::do_trap() {
    ++transcript_.traps;
    log(clock_, EventKind::TrapDetected, {});

    const bool has_arrivals = arrival_index_ < arrivals_.size();
    if (jobs_.empty() && !has_arrivals) fail("trap raised with no function call in flight");

    std::optional<Tick> min_est;
    for (const VirtualJob& j : jobs_)
        if (j.est_done_at >= 0 && (!min_est || j.est_done_at < *min_est)) min_est = j.est_done_at;
    if (!min_est && jobs_.empty() && has_arrivals) min_est = arrivals_[arrival_index_].at;

    TrapDecision decision = TrapDecision::Retain; // unknown durations: safe default
    nlohmann::json wait_field;
    if (min_est) {
        const double wait_ms = ms_from_ticks(std::max<Tick>(*min_est - clock_, 0));
        decision = handle_trap(context_tokens_, wait_ms, cfg_.trap_model);
        wait_field = wait_ms;
    }
    log(clock_, EventKind::TrapDecisionMade,
        {{"choice", std::string(trap_decision_name(decision))},
         {"context_tokens", context_tokens_},
         {"expected_wait_ms", wait_field},
         {"swap_ms", cfg_.trap_model.swap_ms(context_tokens_)},
         {"recompute_ms", cfg_.trap_model.recompute_ms(context_tokens_)}});
    waiting_ = true;
    source_.pause();
}

EventKind SessionEngine::step() {
    if (done_) return EventKind::SessionEnd;
    if (!started_) {
        started_ = true;
        context_tokens_ = cfg_.prompt_tokens;
        log(0, EventKind::SessionStart, {{"ttft_ms", ms_from_ticks(cfg_.ttft_ticks)}});
        clock_ += cfg_.ttft_ticks;
    }
    for (;;) {
        deliver_due();
        if (!parser_.critical() && !queue_.empty()) {
            inject_batch();
            return EventKind::InterruptInjected;
        }
        if (waiting_) {
            auto wake = next_wake();
            if (!wake) {
                if (draining_ && queue_.empty()) { // outstanding work was anonymous; wrap up
                    waiting_ = false;
                    draining_ = false;
                    break;
                }
                fail("waiting for an interrupt with no pending work");
            }
            clock_ = std::max(clock_, *wake);
            continue;
        }
        break;
    }

    auto pulled = source_.next_token();
    StreamToken st = pulled ? std::move(*pulled) : StreamToken{cml::Token::sentinel(cml::TokenKind::Eos), 0, 0};
    clock_ += st.cost_ticks;
    cml::FeedResult res;
    try {
        res = parser_.feed(st.token);
    } catch (const std::exception& e) {
        fail(std::string("decode aborted: ") + e.what());
    }
    context_tokens_ += st.count;
    transcript_.generated_tokens += st.count;
    log(clock_, EventKind::Token,
        {{"text", st.token.text}, {"token_kind", std::string(cml::token_kind_name(st.token.kind))},
         {"count", st.count}, {"injected", false}});

    if (res.block) {
        if (res.block->is_call()) {
            dispatch_call(*res.block);
            return EventKind::CallDetected;
        }
        if (res.block->is_trap()) {
            do_trap();
            return EventKind::TrapDetected;
        }
    }
    if (st.token.kind == cml::TokenKind::Eos) {
        if (jobs_.empty() && queue_.empty() && arrival_index_ >= arrivals_.size()) {
            done_ = true;
            transcript_.end_tick = clock_;
            transcript_.context_tokens = context_tokens_;
            log(clock_, EventKind::SessionEnd, {});
            return EventKind::SessionEnd;
        }
        waiting_ = true; // results still outstanding: drain them, then end
        draining_ = true;
    }
    return EventKind::Token;
}

SessionTranscript SessionEngine::run() {
    while (step() != EventKind::SessionEnd) {}
    return take_transcript();
}

SessionTranscript SessionEngine::take_transcript() {
    transcript_.end_tick = clock_;
    transcript_.context_tokens = context_tokens_;
    return std::move(transcript_);
}

// ---------------------------------------------------------------------------
// Wall-clock executor and session.

ThreadExecutor::ThreadExecutor(InterruptQueue& queue, std::function<Tick()> clock)
    : queue_(queue), clock_(std::move(clock)) {}

ThreadExecutor::~ThreadExecutor() { wait_all(); }

void ThreadExecutor::wait_all() {
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(m_);
        threads.swap(threads_);
    }
    for (auto& t : threads)
        if (t.joinable()) t.join();
}

JobHandle ThreadExecutor::dispatch(const cml::FunctionCall& call, const FunctionRegistry& registry) {
    JobHandle h;
    h.id = call.id.value_or("");
    h.call_body = call.body;
    h.dispatched_at = clock_();
    const std::string name = leading_identifier(call.body);
    const FunctionSpec* spec = registry.find(name);
    if (!spec) {
        h.status = JobStatus::Failed;
        h.value = "error: unknown function '" + name + "'";
        if (!h.id.empty()) queue_.push({h.id, h.value, clock_()});
        return h;
    }
    {
        std::lock_guard lock(m_);
        h.seq = seq_++;
        ++live_;
        if (spec->exec_ms) est_done_[h.seq] = h.dispatched_at + ticks_from_ms(*spec->exec_ms);
    }
    FunctionSpec fspec = *spec;
    const std::uint64_t seq = h.seq;
    const std::string id = h.id;
    const std::string body = h.call_body;
    std::lock_guard lock(m_);
    threads_.emplace_back([this, fspec, seq, id, body] {
        std::string value;
        bool ok = true;
        try {
            if (fspec.fn) {
                value = fspec.fn(body);
            } else {
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(fspec.exec_ms.value_or(0)));
                value = fspec.result;
            }
        } catch (const std::exception& e) {
            ok = false;
            value = std::string("error: ") + e.what();
        }
        (void)ok;
        if (!id.empty()) queue_.push({id, value, clock_()});
        std::lock_guard inner(m_);
        est_done_.erase(seq);
        --live_;
    });
    return h;
}

std::size_t ThreadExecutor::live_count() const {
    std::lock_guard lock(m_);
    return live_;
}

std::optional<double> ThreadExecutor::min_est_remaining_ms(Tick now) const {
    std::lock_guard lock(m_);
    std::optional<double> best;
    for (const auto& [seq, at] : est_done_) {
        const double rem = ms_from_ticks(std::max<Tick>(at - now, 0));
        if (!best || rem < *best) best = rem;
    }
    return best;
}

LiveSession::LiveSession(TokenSource& source, const FunctionRegistry& registry, EngineConfig cfg)
    : source_(source), registry_(registry), cfg_(std::move(cfg)) {
    if (!cfg_.interrupt_value_tokens) cfg_.interrupt_value_tokens = default_value_tokens;
}

SessionTranscript LiveSession::run() {
    const auto start = std::chrono::steady_clock::now();
    const auto now_tick = [&] {
        const auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
        return static_cast<Tick>(us / 10);
    };

    SessionTranscript tr;
    InterruptQueue queue;
    ThreadExecutor executor(queue, now_tick);
    cml::Parser parser(cml::ParserOptions{.enforce_unique_call_ids = true});
    std::int64_t context_tokens = cfg_.prompt_tokens;
    enum class Wait { None, Trap, Drain };
    Wait waiting = Wait::None;

    const auto log = [&](Tick t, EventKind kind, nlohmann::json fields) {
        if (cfg_.record_transcript) tr.events.push_back({t, kind, std::move(fields)});
    };
    const auto fail = [&](const std::string& msg) {
        log(now_tick(), EventKind::SessionError, {{"message", msg}});
        tr.error = true;
        tr.error_message = msg;
        tr.end_tick = now_tick();
        tr.context_tokens = context_tokens;
        throw SessionError(msg, tr);
    };

    log(0, EventKind::SessionStart, {});
    for (;;) {
        if (!parser.critical() && !queue.empty()) {
            nlohmann::json ids = nlohmann::json::array();
            const Tick t = now_tick();
            const std::size_t injected = drain_interrupts(
                queue, parser.critical(), source_,
                [&](const cml::Token& tok, const PendingInterrupt& pi, bool is_value) {
                    parser.feed(tok, true);
                    const std::int64_t count = is_value ? cfg_.interrupt_value_tokens(pi.value) : 1;
                    context_tokens += count;
                    tr.injected_tokens += count;
                    log(t, EventKind::Token,
                        {{"text", tok.text}, {"token_kind", std::string(cml::token_kind_name(tok.kind))},
                         {"count", count}, {"injected", true}});
                },
                [&](const cml::CmlBlock& b) {
                    if (!b.is_interrupt()) return;
                    ids.push_back(b.interrupt().id);
                    ++tr.interrupts;
                });
            log(t, EventKind::InterruptInjected, {{"count", injected}, {"ids", ids}});
            if (cfg_.naive_restarts) ++tr.restarts;
            waiting = Wait::None;
            continue;
        }
        if (waiting != Wait::None) {
            if (executor.live_count() == 0 && queue.empty()) {
                if (waiting == Wait::Drain) { // leftovers were anonymous; wrap up
                    waiting = Wait::None;
                    continue;
                }
                fail("trap raised with no function call in flight");
            }
            queue.wait_nonempty_for(std::chrono::milliseconds(20));
            continue;
        }

        auto pulled = source_.next_token();
        StreamToken st =
            pulled ? std::move(*pulled) : StreamToken{cml::Token::sentinel(cml::TokenKind::Eos), 0, 0};
        cml::FeedResult res;
        try {
            res = parser.feed(st.token);
        } catch (const std::exception& e) {
            fail(std::string("decode aborted: ") + e.what());
        }
        const Tick t = now_tick();
        context_tokens += st.count;
        tr.generated_tokens += st.count;
        log(t, EventKind::Token,
            {{"text", st.token.text}, {"token_kind", std::string(cml::token_kind_name(st.token.kind))},
             {"count", st.count}, {"injected", false}});

        if (res.block && res.block->is_call()) {
            const auto& c = res.block->call();
            ++tr.calls;
            log(t, EventKind::CallDetected,
                {{"id", c.id ? nlohmann::json(*c.id) : nlohmann::json()}, {"body", c.body}});
            JobHandle h = executor.dispatch(c, registry_);
            log(t, EventKind::Dispatch,
                {{"id", h.id}, {"known", h.status != JobStatus::Failed}, {"body", h.call_body}});
        } else if (res.block && res.block->is_trap()) {
            ++tr.traps;
            log(t, EventKind::TrapDetected, {});
            if (executor.live_count() == 0 && queue.empty()) fail("trap raised with no function call in flight");
            auto wait = executor.min_est_remaining_ms(t);
            const TrapDecision decision =
                wait ? handle_trap(context_tokens, *wait, cfg_.trap_model) : TrapDecision::Retain;
            log(t, EventKind::TrapDecisionMade,
                {{"choice", std::string(trap_decision_name(decision))},
                 {"context_tokens", context_tokens},
                 {"expected_wait_ms", wait ? nlohmann::json(*wait) : nlohmann::json()}});
            waiting = Wait::Trap;
        } else if (st.token.kind == cml::TokenKind::Eos) {
            if (executor.live_count() == 0 && queue.empty()) {
                tr.end_tick = now_tick();
                tr.context_tokens = context_tokens;
                log(tr.end_tick, EventKind::SessionEnd, {});
                break;
            }
            waiting = Wait::Drain;
        }
    }
    executor.wait_all();
    return tr;
}

} // namespace afc::runtime
