// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

namespace afc::cml {

/// Context Markup Language: a token-level control protocol for asynchronous
/// function calling. Five sentinel tokens delimit control blocks inside an
/// otherwise free token stream:
///
///   [CALL] {body} [END]              anonymous function call
///   [CALL] {id} [HEAD] {body} [END]  function call with an identifier
///   [INTR] {id} [HEAD] {value} [END] system-injected completion notice
///   [TRAP][END]                      self-initiated pause request
///
/// Interrupts are injected by the serving system, never generated by the
/// model; decode masks therefore never permit [INTR].

enum class TokenKind : std::uint8_t { Text, Call, Intr, Trap, End, Head, Eos };

std::string_view token_kind_name(TokenKind k);

/// Fixed surface form of a sentinel ("" for Text).
std::string_view sentinel_text(TokenKind k);

/// Recognize a sentinel surface form, including "[EOS]".
std::optional<TokenKind> sentinel_from_text(std::string_view s);

struct Token {
    TokenKind kind = TokenKind::Text;
    std::string text; // payload for Text, canonical surface form otherwise

    static Token make_text(std::string payload) { return {TokenKind::Text, std::move(payload)}; }
    static Token sentinel(TokenKind k) { return {k, std::string(sentinel_text(k))}; }

    bool operator==(const Token&) const = default;
};

struct FunctionCall {
    std::optional<std::string> id;
    std::string body;
    bool operator==(const FunctionCall&) const = default;
};

struct Interrupt {
    std::string id;
    std::string value;
    bool operator==(const Interrupt&) const = default;
};

struct Trap {
    bool operator==(const Trap&) const = default;
};

struct CmlBlock {
    std::variant<FunctionCall, Interrupt, Trap> value;

    bool is_call() const { return std::holds_alternative<FunctionCall>(value); }
    bool is_interrupt() const { return std::holds_alternative<Interrupt>(value); }
    bool is_trap() const { return std::holds_alternative<Trap>(value); }
    const FunctionCall& call() const { return std::get<FunctionCall>(value); }
    const Interrupt& interrupt() const { return std::get<Interrupt>(value); }

    bool operator==(const CmlBlock&) const = default;
};

/// Python-style identifier: [A-Za-z_][A-Za-z0-9_]*
bool is_valid_identifier(std::string_view s);

enum class State : std::uint8_t {
    Outside,        // free text between blocks
    CallCollect,    // after [CALL]; text may still become an id or the body
    CallBody,       // after [CALL] id [HEAD]; id is fixed
    IntrExpectId,   // after [INTR] (system injection only)
    IntrExpectValue,// after [INTR] id [HEAD]
    TrapExpectEnd,  // after [TRAP]
};

std::string_view state_name(State s);

class SyntaxViolation : public std::runtime_error {
public:
    SyntaxViolation(TokenKind token, State state);
    TokenKind token;
    State state;
};

class IdentifierInvalid : public std::runtime_error {
public:
    explicit IdentifierInvalid(std::string id);
    std::string id;
};

class DuplicateId : public std::runtime_error {
public:
    explicit DuplicateId(std::string id);
    std::string id;
};

/// Set of token kinds permitted next. [INTR] is never a member: interrupts
/// enter the stream through system injection only.
struct DecodeMask {
    std::uint8_t bits = 0;

    bool contains(TokenKind k) const { return bits & (1u << static_cast<unsigned>(k)); }
    void add(TokenKind k) { bits |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(k)); }
    std::vector<TokenKind> kinds() const;
};

/// Pure function of the parser state.
DecodeMask decode_mask(State s);

struct FeedResult {
    State state = State::Outside;
    std::optional<CmlBlock> block; // set exactly when the token closes a block
    bool critical = false;         // true iff the successor state is inside a block
};

struct ParserOptions {
    // Reject a [CALL] id that repeats an id already used by a call in this
    // parse session.
    bool enforce_unique_call_ids = false;
};

/// Incremental FSM over CML tokens. One instance per stream; not shared
/// between threads.
class Parser {
public:
    explicit Parser(ParserOptions opts = {}) : opts_(opts) {}

    /// Advance by one token. `system_injected` permits [INTR] in Outside.
    /// Throws SyntaxViolation / IdentifierInvalid / DuplicateId.
    FeedResult feed(const Token& tok, bool system_injected = false);

    State state() const { return state_; }
    bool critical() const { return state_ != State::Outside; }
    void reset();

private:
    ParserOptions opts_;
    State state_ = State::Outside;
    std::string collect_;   // text gathered since the block opened
    std::string id_;        // fixed id once [HEAD] is seen
    std::unordered_set<std::string> used_call_ids_;
};

/// Canonical token sequence for a block. Throws IdentifierInvalid on a
/// malformed id. Round-trip law: feeding the result from Outside yields the
/// block back and returns to Outside.
std::vector<Token> serialize(const CmlBlock& block);

/// Canonical text: sentinels verbatim, text payloads padded with one space.
std::string to_text(const std::vector<Token>& tokens);
std::string to_text(const CmlBlock& block);

/// First duplicated id among function-call blocks, or nullopt when ids are
/// unique. Interrupts do not consume ids.
std::optional<std::string> validate_unique_ids(const std::vector<CmlBlock>& blocks);

/// Incremental lexer: splits raw text into sentinel and text tokens,
/// tolerating sentinels split across chunk boundaries. Whitespace-only runs
/// between sentinels are dropped; the parser trims segment edges.
class Lexer {
public:
    void push(std::string_view chunk);
    void finish(); // flush any pending partial-sentinel tail as text

    std::optional<Token> next();

private:
    void scan();
    void emit_text(std::string_view t);

    std::string buf_;
    std::deque<Token> ready_;
    bool finished_ = false;
};

/// Convenience: lex + parse a complete text stream (system injection
/// allowed, so interrupt blocks in transcripts parse).
std::vector<CmlBlock> parse_text(std::string_view text, ParserOptions opts = {});

} // namespace afc::cml
