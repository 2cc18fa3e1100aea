// Copyright 2026 The CVR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Rule DSL:
//
//   rule      := "rule" IDENT "{" structure relations odd "}"
//   structure := "objects" INT (";" "group" IDENT "=" "[" IDENT_LIST "]")* ";"
//   relations := ("rel" REL_KIND "(" ARG_LIST ")" (":" COMPARATOR)? ";")+
//   odd       := "odd" ":" "change" "(" REL_KIND ("|" REL_KIND)* ")" ";"
//   COMPARATOR := "equal" | "greater" | "offset" "(" NUMBER ")"
//
// Object slots are named o0..o{n-1}; `scene` names the root. '#' starts a
// comment that runs to the end of the line.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "cvr/rules.hpp"

namespace cvr::rules {

namespace {

struct Token {
    enum class Type { Ident, Number, Punct, End };
    Type type = Type::End;
    std::string text;
    int line = 1;
    int column = 1;
};

std::string describe(const Token& t) {
    switch (t.type) {
        case Token::Type::End: return "end of input";
        case Token::Type::Number: return "number '" + t.text + "'";
        case Token::Type::Ident: return "identifier '" + t.text + "'";
        case Token::Type::Punct: return "'" + t.text + "'";
    }
    return t.text;
}

std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k, ++i) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    while (i < src.size()) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        if (c == '#') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.column = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            t.type = Token::Type::Ident;
            t.text = std::string(src.substr(i, j - i));
            advance(j - i);
        } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.') {
            std::size_t j = i + 1;
            while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
            t.type = Token::Type::Number;
            t.text = std::string(src.substr(i, j - i));
            advance(j - i);
        } else if (std::string_view("{}()[];:,|=").find(c) != std::string_view::npos) {
            t.type = Token::Type::Punct;
            t.text = std::string(1, c);
            advance(1);
        } else {
            throw RuleError(RuleError::Code::SyntaxError, "line " + std::to_string(line) + ", column " +
                                                              std::to_string(col) + ": unexpected character '" +
                                                              std::string(1, c) + "'");
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.line = line;
    end.column = col;
    out.push_back(end);
    return out;
}

struct RawRelation {
    RelationKind kind;
    std::vector<Token> args;
    Comparator comparator;
    Token at;
};

struct RawGroup {
    std::string name;
    std::vector<Token> members;
};

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

    RuleSpec parse() {
        RuleSpec spec;
        expect_keyword("rule");
        spec.id = expect_ident("a rule name").text;
        id_ = spec.id;
        expect_punct("{");
        expect_keyword("objects");
        const Token n = expect(Token::Type::Number, "an object count");
        spec.object_count = to_int(n);
        if (spec.object_count < 1) fail(n, "object count must be at least 1");
        for (;;) {
            expect_punct(";");
            if (!peek_is_ident("group")) break;
            next();
            RawGroup g;
            g.name = expect_ident("a group name").text;
            expect_punct("=");
            expect_punct("[");
            g.members.push_back(expect_ident("a slot name"));
            while (peek_is_punct(",")) {
                next();
                g.members.push_back(expect_ident("a slot name"));
            }
            expect_punct("]");
            groups_.push_back(std::move(g));
        }
        if (!peek_is_ident("rel")) fail(peek(), "expected 'rel' but found " + describe(peek()));
        while (peek_is_ident("rel")) {
            next();
            RawRelation r;
            r.at = peek();
            r.kind = expect_kind();
            expect_punct("(");
            r.args.push_back(expect_ident("a slot name"));
            while (peek_is_punct(",")) {
                next();
                r.args.push_back(expect_ident("a slot name"));
            }
            expect_punct(")");
            if (peek_is_punct(":")) {
                next();
                r.comparator = parse_comparator();
            }
            expect_punct(";");
            raw_.push_back(std::move(r));
        }
        expect_keyword("odd");
        expect_punct(":");
        expect_keyword("change");
        expect_punct("(");
        spec.odd_kinds.push_back(expect_kind());
        while (peek_is_punct("|")) {
            next();
            spec.odd_kinds.push_back(expect_kind());
        }
        expect_punct(")");
        expect_punct(";");
        expect_punct("}");
        if (peek().type != Token::Type::End) fail(peek(), "expected end of input but found " + describe(peek()));
        resolve(spec);
        return spec;
    }

private:
    [[noreturn]] void fail(const Token& t, const std::string& msg, RuleError::Code code = RuleError::Code::SyntaxError) {
        throw RuleError(code, "line " + std::to_string(t.line) + ", column " + std::to_string(t.column) + ": " + msg,
                        id_);
    }

    const Token& peek() const { return toks_[pos_]; }
    Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
    bool peek_is_ident(std::string_view s) const { return peek().type == Token::Type::Ident && peek().text == s; }
    bool peek_is_punct(std::string_view s) const { return peek().type == Token::Type::Punct && peek().text == s; }

    Token expect(Token::Type type, const std::string& what) {
        if (peek().type != type) fail(peek(), "expected " + what + " but found " + describe(peek()));
        return next();
    }
    Token expect_ident(const std::string& what) { return expect(Token::Type::Ident, what); }
    void expect_keyword(std::string_view kw) {
        if (!peek_is_ident(kw)) fail(peek(), "expected '" + std::string(kw) + "' but found " + describe(peek()));
        next();
    }
    void expect_punct(std::string_view p) {
        if (!peek_is_punct(p)) fail(peek(), "expected '" + std::string(p) + "' but found " + describe(peek()));
        next();
    }

    RelationKind expect_kind() {
        const Token t = expect_ident("a relation kind");
        auto k = parse_relation_kind(t.text);
        if (!k) fail(t, "unknown relation '" + t.text + "'", RuleError::Code::UnknownRelation);
        return *k;
    }

    int to_int(const Token& t) {
        int v = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc() || p != t.text.data() + t.text.size()) fail(t, "expected an integer");
        return v;
    }

    double to_double(const Token& t) {
        std::istringstream in(t.text);
        in.imbue(std::locale::classic());
        double v = 0;
        in >> v;
        if (!in || in.peek() != EOF) fail(t, "malformed number '" + t.text + "'");
        return v;
    }

    Comparator parse_comparator() {
        const Token t = expect_ident("a comparator");
        Comparator c;
        if (t.text == "equal") {
            c.type = Comparator::Type::Equal;
        } else if (t.text == "greater") {
            c.type = Comparator::Type::Greater;
        } else if (t.text == "offset") {
            c.type = Comparator::Type::Offset;
            expect_punct("(");
            c.offset = to_double(expect(Token::Type::Number, "a number"));
            expect_punct(")");
        } else {
            fail(t, "expected 'equal', 'greater' or 'offset' but found " + describe(t));
        }
        return c;
    }

    NodeId resolve_name(const Token& t, const RuleSpec& spec, bool allow_scene) {
        if (t.text == "scene") {
            if (!allow_scene) fail(t, "'scene' cannot be a group member", RuleError::Code::UnknownSlot);
            return kRootId;
        }
        if (t.text.size() > 1 && t.text[0] == 'o' &&
            std::all_of(t.text.begin() + 1, t.text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            const int idx = std::stoi(t.text.substr(1));
            if (idx < spec.object_count && t.text.substr(1) == std::to_string(idx)) return slot_id(idx);
        }
        for (std::size_t g = 0; g < groups_.size(); ++g)
            if (groups_[g].name == t.text) return group_id(g);
        fail(t, "unknown slot '" + t.text + "'", RuleError::Code::UnknownSlot);
    }

    void resolve(RuleSpec& spec) {
        for (std::size_t i = 0; i < groups_.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (groups_[i].name == groups_[j].name)
                    fail(groups_[i].members.front(), "duplicate group '" + groups_[i].name + "'");
        for (const auto& g : groups_) {
            GroupDecl d{g.name, {}};
            for (const auto& m : g.members) d.members.push_back(resolve_name(m, spec, false));
            spec.groups.push_back(std::move(d));
        }
        for (std::size_t i = 0; i < raw_.size(); ++i) {
            const auto& raw = raw_[i];
            ElementaryRelation r;
            r.kind = raw.kind;
            r.comparator = raw.comparator;
            r.node = relation_node_id(i);
            for (const auto& a : raw.args) r.operands.push_back(resolve_name(a, spec, true));
            spec.reference_relations.push_back(r);
            validate_relation(spec, raw, r);
        }
    }

    void validate_relation(const RuleSpec& spec, const RawRelation& raw, const ElementaryRelation& r) {
        const auto arity = [&](const std::string& msg) { fail(raw.at, msg, RuleError::Code::InvalidArity); };
        const auto bad_cmp = [&]() {
            fail(raw.at, "comparator not supported for " + std::string(to_string(r.kind)),
                 RuleError::Code::InvalidComparator);
        };
        const auto type = r.comparator.type;
        switch (r.kind) {
            case RelationKind::Inside:
            case RelationKind::Contact:
                if (r.operands.size() != 2) arity(std::string(to_string(r.kind)) + " takes exactly two objects");
                for (NodeId op : r.operands)
                    if (op == kRootId || op >= kFirstGroupId)
                        arity(std::string(to_string(r.kind)) + " operands must be objects");
                if (type != Comparator::Type::Equal) bad_cmp();
                return;
            case RelationKind::Count:
                for (NodeId op : r.operands)
                    if (op != kRootId && op < kFirstGroupId) arity("count operands must be groups or scene");
                if (r.operands.size() == 1 && type == Comparator::Type::Greater) bad_cmp();
                return;
            default: break;
        }
        std::set<NodeId> members;
        for (NodeId op : r.operands)
            for (NodeId m : spec.expand_static(op)) members.insert(m);
        if (members.size() < 2) arity(std::string(to_string(r.kind)) + " needs at least two objects");
        if (type == Comparator::Type::Greater &&
            (r.kind == RelationKind::Shape || r.kind == RelationKind::Color || r.kind == RelationKind::Rotation ||
             r.kind == RelationKind::Flip))
            bad_cmp();
        if (type == Comparator::Type::Offset && r.kind == RelationKind::Shape) bad_cmp();
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::string id_;
    std::vector<RawGroup> groups_;
    std::vector<RawRelation> raw_;
};

std::string format_number(double v) {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out.precision(17);
    out << v;
    return out.str();
}

}  // namespace

std::string RuleError::format(Code code, const std::string& message, const std::string& rule_id) {
    std::string s(rules::to_string(code));
    if (!rule_id.empty()) s += " in rule '" + rule_id + "'";
    return s + ": " + message;
}

std::string_view to_string(RuleError::Code code) {
    switch (code) {
        case RuleError::Code::SyntaxError: return "SyntaxError";
        case RuleError::Code::UnknownRelation: return "UnknownRelation";
        case RuleError::Code::UnknownSlot: return "UnknownSlot";
        case RuleError::Code::InvalidArity: return "InvalidArity";
        case RuleError::Code::InvalidComparator: return "InvalidComparator";
        case RuleError::Code::InvalidOddRule: return "InvalidOddRule";
        case RuleError::Code::OverConstrained: return "OverConstrained";
        case RuleError::Code::CyclicStructure: return "CyclicStructure";
        case RuleError::Code::TooComplex: return "TooComplex";
        case RuleError::Code::NoVariantDeclared: return "NoVariantDeclared";
        case RuleError::Code::ManifestError: return "ManifestError";
    }
    return "RuleError";
}

std::vector<RelationKind> RuleSpec::component_kinds() const {
    std::set<RelationKind> s;
    for (const auto& r : reference_relations) s.insert(r.kind);
    return {s.begin(), s.end()};
}

std::vector<ElementaryRelation> RuleSpec::odd_relations() const {
    std::vector<ElementaryRelation> out;
    for (const auto& r : reference_relations)
        if (std::find(odd_kinds.begin(), odd_kinds.end(), r.kind) != odd_kinds.end()) out.push_back(r);
    return out;
}

std::string RuleSpec::slot_name(NodeId id) const {
    if (id == kRootId) return "scene";
    if (id >= kFirstGroupId && id < kFirstRelationId) return groups.at(id - kFirstGroupId).name;
    return "o" + std::to_string(id - 1);
}

std::vector<NodeId> RuleSpec::expand_static(NodeId id) const {
    std::vector<NodeId> out;
    std::set<NodeId> seen;
    std::function<void(NodeId)> visit = [&](NodeId n) {
        if (!seen.insert(n).second) return;
        if (n == kRootId) {
            for (int i = 0; i < object_count; ++i) visit(slot_id(i));
        } else if (n >= kFirstGroupId) {
            const std::size_t g = n - kFirstGroupId;
            if (g < groups.size())
                for (NodeId m : groups[g].members) visit(m);
        } else if (std::find(out.begin(), out.end(), n) == out.end()) {
            out.push_back(n);
        }
    };
    visit(id);
    return out;
}

RuleSpec parse_rule(std::string_view text) { return Parser(lex(text)).parse(); }

std::string print_rule(const RuleSpec& spec) {
    std::ostringstream out;
    out << "rule " << spec.id << " {\n";
    out << "  objects " << spec.object_count << ";\n";
    for (const auto& g : spec.groups) {
        out << "  group " << g.name << " = [";
        for (std::size_t i = 0; i < g.members.size(); ++i) out << (i ? ", " : "") << spec.slot_name(g.members[i]);
        out << "];\n";
    }
    for (const auto& r : spec.reference_relations) {
        out << "  rel " << to_string(r.kind) << "(";
        for (std::size_t i = 0; i < r.operands.size(); ++i) out << (i ? ", " : "") << spec.slot_name(r.operands[i]);
        out << ")";
        switch (r.comparator.type) {
            case Comparator::Type::Equal:
                if (r.kind != RelationKind::Inside && r.kind != RelationKind::Contact) out << ": equal";
                break;
            case Comparator::Type::Greater: out << ": greater"; break;
            case Comparator::Type::Offset: out << ": offset(" << format_number(r.comparator.offset) << ")"; break;
        }
        out << ";\n";
    }
    out << "  odd: change(";
    for (std::size_t i = 0; i < spec.odd_kinds.size(); ++i) out << (i ? " | " : "") << to_string(spec.odd_kinds[i]);
    out << ");\n}\n";
    return out.str();
}

}  // namespace cvr::rules
