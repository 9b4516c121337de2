// SPDX-License-Identifier: Apache-2.0
#include "afc/cml.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace afc::cml {

namespace {

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

} // namespace

std::string_view token_kind_name(TokenKind k) {
    switch (k) {
    case TokenKind::Text: return "Text";
    case TokenKind::Call: return "Call";
    case TokenKind::Intr: return "Intr";
    case TokenKind::Trap: return "Trap";
    case TokenKind::End: return "End";
    case TokenKind::Head: return "Head";
    case TokenKind::Eos: return "Eos";
    }
    return "?";
}

std::string_view sentinel_text(TokenKind k) {
    switch (k) {
    case TokenKind::Call: return "[CALL]";
    case TokenKind::Intr: return "[INTR]";
    case TokenKind::Trap: return "[TRAP]";
    case TokenKind::End: return "[END]";
    case TokenKind::Head: return "[HEAD]";
    case TokenKind::Eos: return "[EOS]";
    case TokenKind::Text: return "";
    }
    return "";
}

std::optional<TokenKind> sentinel_from_text(std::string_view s) {
    static constexpr std::array<TokenKind, 6> kinds = {TokenKind::Call, TokenKind::Intr, TokenKind::Trap,
                                                       TokenKind::End,  TokenKind::Head, TokenKind::Eos};
    for (TokenKind k : kinds)
        if (s == sentinel_text(k)) return k;
    return std::nullopt;
}

std::string_view state_name(State s) {
    switch (s) {
    case State::Outside: return "Outside";
    case State::CallCollect: return "CallCollect";
    case State::CallBody: return "CallBody";
    case State::IntrExpectId: return "IntrExpectId";
    case State::IntrExpectValue: return "IntrExpectValue";
    case State::TrapExpectEnd: return "TrapExpectEnd";
    }
    return "?";
}

bool is_valid_identifier(std::string_view s) {
    if (s.empty()) return false;
    const auto head = static_cast<unsigned char>(s[0]);
    if (!std::isalpha(head) && s[0] != '_') return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
}

SyntaxViolation::SyntaxViolation(TokenKind t, State s)
    : std::runtime_error("CML syntax violation: token " + std::string(token_kind_name(t)) +
                         " not permitted in state " + std::string(state_name(s))),
      token(t), state(s) {}

IdentifierInvalid::IdentifierInvalid(std::string bad)
    : std::runtime_error("invalid CML identifier: '" + bad + "'"), id(std::move(bad)) {}

DuplicateId::DuplicateId(std::string dup)
    : std::runtime_error("duplicate CML call identifier: '" + dup + "'"), id(std::move(dup)) {}

std::vector<TokenKind> DecodeMask::kinds() const {
    std::vector<TokenKind> out;
    for (unsigned i = 0; i <= static_cast<unsigned>(TokenKind::Eos); ++i)
        if (bits & (1u << i)) out.push_back(static_cast<TokenKind>(i));
    return out;
}

DecodeMask decode_mask(State s) {
    DecodeMask m;
    switch (s) {
    case State::Outside:
        m.add(TokenKind::Text);
        m.add(TokenKind::Call);
        m.add(TokenKind::Trap);
        m.add(TokenKind::Eos);
        break;
    case State::CallCollect:
        m.add(TokenKind::Text);
        m.add(TokenKind::Head);
        m.add(TokenKind::End);
        break;
    case State::CallBody:
        m.add(TokenKind::Text);
        m.add(TokenKind::End);
        break;
    case State::IntrExpectId:
        m.add(TokenKind::Text);
        m.add(TokenKind::Head);
        break;
    case State::IntrExpectValue:
        m.add(TokenKind::Text);
        m.add(TokenKind::End);
        break;
    case State::TrapExpectEnd:
        m.add(TokenKind::End);
        break;
    }
    return m;
}

FeedResult Parser::feed(const Token& tok, bool system_injected) {
    const bool injected_intr = tok.kind == TokenKind::Intr && system_injected && state_ == State::Outside;
    if (!injected_intr && !decode_mask(state_).contains(tok.kind)) throw SyntaxViolation(tok.kind, state_);

    FeedResult res;
    switch (state_) {
    case State::Outside:
        switch (tok.kind) {
        case TokenKind::Text:
        case TokenKind::Eos:
            break; // free prose / end of stream
        case TokenKind::Call:
            state_ = State::CallCollect;
            collect_.clear();
            id_.clear();
            break;
        case TokenKind::Intr:
            state_ = State::IntrExpectId;
            collect_.clear();
            id_.clear();
            break;
        case TokenKind::Trap:
            state_ = State::TrapExpectEnd;
            break;
        default:
            throw SyntaxViolation(tok.kind, state_);
        }
        break;

    case State::CallCollect:
        if (tok.kind == TokenKind::Text) {
            collect_ += tok.text;
        } else if (tok.kind == TokenKind::Head) {
            id_ = trim(collect_);
            if (!is_valid_identifier(id_)) throw IdentifierInvalid(id_);
            if (opts_.enforce_unique_call_ids && !used_call_ids_.insert(id_).second) throw DuplicateId(id_);
            collect_.clear();
            state_ = State::CallBody;
        } else { // End: anonymous call, collected text is the body
            res.block = CmlBlock{FunctionCall{std::nullopt, trim(collect_)}};
            state_ = State::Outside;
        }
        break;

    case State::CallBody:
        if (tok.kind == TokenKind::Text) {
            collect_ += tok.text;
        } else { // End
            res.block = CmlBlock{FunctionCall{id_, trim(collect_)}};
            state_ = State::Outside;
        }
        break;

    case State::IntrExpectId:
        if (tok.kind == TokenKind::Text) {
            collect_ += tok.text;
        } else { // Head
            id_ = trim(collect_);
            if (!is_valid_identifier(id_)) throw IdentifierInvalid(id_);
            collect_.clear();
            state_ = State::IntrExpectValue;
        }
        break;

    case State::IntrExpectValue:
        if (tok.kind == TokenKind::Text) {
            collect_ += tok.text;
        } else { // End
            res.block = CmlBlock{Interrupt{id_, trim(collect_)}};
            state_ = State::Outside;
        }
        break;

    case State::TrapExpectEnd:
        res.block = CmlBlock{Trap{}};
        state_ = State::Outside;
        break;
    }

    res.state = state_;
    res.critical = state_ != State::Outside;
    return res;
}

void Parser::reset() {
    state_ = State::Outside;
    collect_.clear();
    id_.clear();
    used_call_ids_.clear();
}

std::vector<Token> serialize(const CmlBlock& block) {
    std::vector<Token> out;
    if (block.is_trap()) {
        out.push_back(Token::sentinel(TokenKind::Trap));
        out.push_back(Token::sentinel(TokenKind::End));
        return out;
    }
    if (block.is_call()) {
        const auto& c = block.call();
        out.push_back(Token::sentinel(TokenKind::Call));
        if (c.id) {
            if (!is_valid_identifier(*c.id)) throw IdentifierInvalid(*c.id);
            out.push_back(Token::make_text(*c.id));
            out.push_back(Token::sentinel(TokenKind::Head));
        }
        if (!c.body.empty()) out.push_back(Token::make_text(c.body));
        out.push_back(Token::sentinel(TokenKind::End));
        return out;
    }
    const auto& i = block.interrupt();
    if (!is_valid_identifier(i.id)) throw IdentifierInvalid(i.id);
    out.push_back(Token::sentinel(TokenKind::Intr));
    out.push_back(Token::make_text(i.id));
    out.push_back(Token::sentinel(TokenKind::Head));
    if (!i.value.empty()) out.push_back(Token::make_text(i.value));
    out.push_back(Token::sentinel(TokenKind::End));
    return out;
}

std::string to_text(const std::vector<Token>& tokens) {
    std::string out;
    for (const Token& t : tokens) {
        if (t.kind == TokenKind::Text) {
            out += ' ';
            out += t.text;
            out += ' ';
        } else {
            out += sentinel_text(t.kind);
        }
    }
    return out;
}

std::string to_text(const CmlBlock& block) { return to_text(serialize(block)); }

std::optional<std::string> validate_unique_ids(const std::vector<CmlBlock>& blocks) {
    std::unordered_set<std::string> seen;
    for (const CmlBlock& b : blocks) {
        if (!b.is_call() || !b.call().id) continue;
        if (!seen.insert(*b.call().id).second) return *b.call().id;
    }
    return std::nullopt;
}

void Lexer::push(std::string_view chunk) {
    buf_ += chunk;
    scan();
}

void Lexer::finish() {
    finished_ = true;
    scan();
}

void Lexer::emit_text(std::string_view t) {
    if (t.empty()) return;
    if (std::all_of(t.begin(), t.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
        return;
    ready_.push_back(Token::make_text(std::string(t)));
}

void Lexer::scan() {
    static constexpr std::array<TokenKind, 6> kinds = {TokenKind::Call, TokenKind::Intr, TokenKind::Trap,
                                                       TokenKind::End,  TokenKind::Head, TokenKind::Eos};
    size_t pos = 0;
    for (;;) {
        size_t best = std::string::npos;
        TokenKind best_kind = TokenKind::Text;
        for (TokenKind k : kinds) {
            const size_t at = buf_.find(sentinel_text(k), pos);
            if (at < best) {
                best = at;
                best_kind = k;
            }
        }
        if (best == std::string::npos) break;
        emit_text(std::string_view(buf_).substr(pos, best - pos));
        ready_.push_back(Token::sentinel(best_kind));
        pos = best + sentinel_text(best_kind).size();
    }
    // Keep a tail that could still grow into a sentinel.
    std::string_view rest = std::string_view(buf_).substr(pos);
    size_t keep = rest.size();
    if (!finished_) {
        const size_t bracket = rest.rfind('[');
        if (bracket != std::string_view::npos) {
            const std::string_view tail = rest.substr(bracket);
            for (TokenKind k : kinds) {
                const std::string_view surface = sentinel_text(k);
                if (tail.size() < surface.size() && surface.substr(0, tail.size()) == tail) {
                    keep = bracket;
                    break;
                }
            }
        }
    }
    emit_text(rest.substr(0, keep));
    buf_.erase(0, pos + keep);
}

std::optional<Token> Lexer::next() {
    if (ready_.empty()) return std::nullopt;
    Token t = std::move(ready_.front());
    ready_.pop_front();
    return t;
}

std::vector<CmlBlock> parse_text(std::string_view text, ParserOptions opts) {
    Lexer lex;
    lex.push(text);
    lex.finish();
    Parser parser(opts);
    std::vector<CmlBlock> blocks;
    while (auto tok = lex.next()) {
        auto res = parser.feed(*tok, /*system_injected=*/true);
        if (res.block) blocks.push_back(std::move(*res.block));
    }
    return blocks;
}

} // namespace afc::cml
