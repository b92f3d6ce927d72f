#include "jitagent/bench/oracle.hpp"

#include <cctype>
#include <cmath>

#include "jitagent/common.hpp"

namespace jitagent::bench {

using nlohmann::json;

struct Predicate::Node {
    enum class Kind { literal, path, unary, binary, call } kind = Kind::literal;
    std::string op;  // operator or function name
    json value;
    bool initial = false;
    std::vector<std::string> segments;  // for paths; "[n]" marks an index
    std::string text;
    std::vector<std::shared_ptr<const Node>> kids;
};

namespace {

using NodeP = std::shared_ptr<const Predicate::Node>;
using Node = Predicate::Node;

struct Token {
    enum class T { num, str, ident, op, end } t = T::end;
    std::string text;
    json value;
};

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
            std::string num(s.substr(i, j - i));
            if (std::count(num.begin(), num.end(), '.') > 1) throw ParseError("bad number '" + num + "'");
            out.push_back({Token::T::num, num, num.find('.') == std::string::npos ? json(std::stoll(num)) : json(std::stod(num))});
            i = j;
        } else if (c == '"') {
            std::string str;
            ++i;
            while (i < s.size() && s[i] != '"') {
                if (s[i] == '\\' && i + 1 < s.size()) ++i;
                str += s[i++];
            }
            if (i >= s.size()) throw ParseError("unterminated string");
            ++i;
            out.push_back({Token::T::str, str, str});
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            // identifiers swallow dotted paths and [n] indexes
            while (j < s.size()) {
                char d = s[j];
                if (std::isalnum(static_cast<unsigned char>(d)) || d == '_' || d == '.') {
                    ++j;
                } else if (d == '[') {
                    std::size_t k = s.find(']', j);
                    if (k == std::string_view::npos) throw ParseError("unterminated '['");
                    j = k + 1;
                } else {
                    break;
                }
            }
            out.push_back({Token::T::ident, std::string(s.substr(i, j - i)), nullptr});
            i = j;
        } else {
            static const char* two[] = {"==", "!=", "<=", ">="};
            std::string op(1, c);
            for (const char* t : two)
                if (s.substr(i, 2) == t) op = t;
            if (std::string("+-*/%()<>,").find(c) == std::string::npos && op.size() == 1)
                throw ParseError(std::string("unexpected character '") + c + "'");
            if (op == "!") throw ParseError("unexpected '!'");
            out.push_back({Token::T::op, op, nullptr});
            i += op.size();
        }
    }
    out.push_back({Token::T::end, "", nullptr});
    return out;
}

std::vector<std::string> split_path(const std::string& text) {
    std::vector<std::string> segs;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '.') {
            if (cur.empty()) throw ParseError("empty path segment in '" + text + "'");
            segs.push_back(cur);
            cur.clear();
        } else if (c == '[') {
            if (!cur.empty()) segs.push_back(cur);
            cur.clear();
            std::size_t k = text.find(']', i);
            std::string idx = text.substr(i + 1, k - i - 1);
            if (idx.empty() || !std::all_of(idx.begin() + (idx[0] == '-' ? 1 : 0), idx.end(), [](char d) { return std::isdigit(static_cast<unsigned char>(d)); }) || idx == "-")
                throw ParseError("bad index '" + idx + "' in '" + text + "'");
            segs.push_back("[" + idx + "]");
            i = k;
            if (i + 1 < text.size() && text[i + 1] == '.') ++i;
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) segs.push_back(cur);
    if (segs.empty()) throw ParseError("empty path");
    return segs;
}

class Parser {
public:
    explicit Parser(std::string_view s) : toks_(lex(s)) {}

    NodeP parse() {
        NodeP e = expr();
        if (peek().t != Token::T::end) throw ParseError("unexpected '" + peek().text + "'");
        return e;
    }

private:
    const Token& peek() const { return toks_[i_]; }
    Token next() { return toks_[i_++]; }
    bool accept_op(std::string_view op) {
        if (peek().t == Token::T::op && peek().text == op) return ++i_, true;
        return false;
    }
    bool accept_word(std::string_view w) {
        if (peek().t == Token::T::ident && peek().text == w) return ++i_, true;
        return false;
    }
    NodeP make(Node n) { return std::make_shared<const Node>(std::move(n)); }
    NodeP binary(std::string op, NodeP a, NodeP b) {
        Node n;
        n.kind = Node::Kind::binary;
        n.op = std::move(op);
        n.kids = {std::move(a), std::move(b)};
        return make(std::move(n));
    }

    NodeP expr() {
        NodeP l = conj();
        while (accept_word("or")) l = binary("or", l, conj());
        return l;
    }
    NodeP conj() {
        NodeP l = unary();
        while (accept_word("and")) l = binary("and", l, unary());
        return l;
    }
    NodeP unary() {
        if (accept_word("not")) {
            Node n;
            n.kind = Node::Kind::unary;
            n.op = "not";
            n.kids = {unary()};
            return make(std::move(n));
        }
        return compare();
    }
    NodeP compare() {
        NodeP l = sum();
        for (const char* op : {"==", "!=", "<=", ">=", "<", ">"})
            if (accept_op(op)) return binary(op, l, sum());
        if (accept_word("contains")) return binary("contains", l, sum());
        return l;
    }
    NodeP sum() {
        NodeP l = product();
        for (;;) {
            if (accept_op("+")) l = binary("+", l, product());
            else if (accept_op("-")) l = binary("-", l, product());
            else return l;
        }
    }
    NodeP product() {
        NodeP l = atom();
        for (;;) {
            if (accept_op("*")) l = binary("*", l, atom());
            else if (accept_op("/")) l = binary("/", l, atom());
            else if (accept_op("%")) l = binary("%", l, atom());
            else return l;
        }
    }
    NodeP atom() {
        Token t = next();
        Node n;
        switch (t.t) {
            case Token::T::num:
            case Token::T::str: n.value = t.value; return make(std::move(n));
            case Token::T::op:
                if (t.text == "(") {
                    NodeP e = expr();
                    if (!accept_op(")")) throw ParseError("expected ')'");
                    return e;
                }
                if (t.text == "-") {  // negative literal
                    NodeP inner = atom();
                    Node zero;
                    zero.value = 0;
                    return binary("-", make(std::move(zero)), inner);
                }
                throw ParseError("unexpected '" + t.text + "'");
            case Token::T::end: throw ParseError("unexpected end of predicate");
            case Token::T::ident: break;
        }
        if (t.text == "true" || t.text == "false") {
            n.value = t.text == "true";
            return make(std::move(n));
        }
        if (t.text == "null") return make(std::move(n));
        if (accept_op("(")) {
            static const std::vector<std::pair<std::string, std::size_t>> fns = {
                {"len", 1}, {"delta", 1}, {"slice", 3}, {"lower", 1}, {"last", 1}};
            auto fn = std::find_if(fns.begin(), fns.end(), [&](const auto& f) { return f.first == t.text; });
            if (fn == fns.end()) throw ParseError("unknown function '" + t.text + "'");
            n.kind = Node::Kind::call;
            n.op = t.text;
            if (!accept_op(")")) {
                do n.kids.push_back(expr());
                while (accept_op(","));
                if (!accept_op(")")) throw ParseError("expected ')' after arguments of " + t.text);
            }
            if (n.kids.size() != fn->second)
                throw ParseError(t.text + " takes " + std::to_string(fn->second) + " argument(s)");
            if (n.op == "delta" && n.kids[0]->kind != Node::Kind::path) throw ParseError("delta takes a path");
            return make(std::move(n));
        }
        n.kind = Node::Kind::path;
        n.text = t.text;
        n.segments = split_path(t.text);
        if (n.segments.front() == "initial" || n.segments.front() == "final") {
            n.initial = n.segments.front() == "initial";
            n.segments.erase(n.segments.begin());
            if (n.segments.empty()) throw ParseError("path '" + t.text + "' names no field");
        }
        return make(std::move(n));
    }

    std::vector<Token> toks_;
    std::size_t i_ = 0;
};

const json& resolve(const json& root, const Node& n) {
    const json* cur = &root;
    for (const std::string& seg : n.segments) {
        if (seg.front() == '[') {
            long long idx = std::stoll(seg.substr(1, seg.size() - 2));
            if (!cur->is_array()) throw OraclePathError("'" + n.text + "': not an array before " + seg);
            long long size = static_cast<long long>(cur->size());
            if (idx < 0) idx += size;
            if (idx < 0 || idx >= size) throw OraclePathError("'" + n.text + "': index " + seg + " out of range");
            cur = &(*cur)[static_cast<std::size_t>(idx)];
        } else {
            if (!cur->is_object() || !cur->contains(seg)) throw OraclePathError("'" + n.text + "': no field '" + seg + "'");
            cur = &(*cur)[seg];
        }
    }
    return *cur;
}

double num(const json& v, const char* what) {
    if (!v.is_number()) throw DomainError(std::string(what) + " needs numbers, got " + v.dump());
    return v.get<double>();
}

bool truth(const json& v) {
    if (!v.is_boolean()) throw DomainError("expected a boolean, got " + v.dump());
    return v.get<bool>();
}

bool equal(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return std::fabs(a.get<double>() - b.get<double>()) <= 1e-9;
    return a == b;
}

json number_result(double d) {
    if (std::floor(d) == d && std::fabs(d) < 9e15) return json(static_cast<long long>(d));
    return json(d);
}

json eval(const Node& n, const json& ini, const json& fin) {
    switch (n.kind) {
        case Node::Kind::literal: return n.value;
        case Node::Kind::path: return resolve(n.initial ? ini : fin, n);
        case Node::Kind::unary: return !truth(eval(*n.kids[0], ini, fin));
        case Node::Kind::call: {
            if (n.op == "delta") {
                const Node& p = *n.kids[0];
                return number_result(num(resolve(fin, p), "delta") - num(resolve(ini, p), "delta"));
            }
            json a = eval(*n.kids[0], ini, fin);
            if (n.op == "len") {
                if (a.is_string()) return a.get<std::string>().size();
                if (a.is_array() || a.is_object()) return a.size();
                throw DomainError("len needs a string, array or object");
            }
            if (n.op == "lower") {
                if (!a.is_string()) throw DomainError("lower needs a string");
                std::string s = a.get<std::string>();
                for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                return s;
            }
            if (n.op == "last") {
                if (!a.is_array() || a.empty()) throw DomainError("last needs a non-empty array");
                return a.back();
            }
            // slice(array, from, to)
            if (!a.is_array()) throw DomainError("slice needs an array");
            auto from = static_cast<long long>(num(eval(*n.kids[1], ini, fin), "slice"));
            auto to = static_cast<long long>(num(eval(*n.kids[2], ini, fin), "slice"));
            from = std::clamp<long long>(from, 0, static_cast<long long>(a.size()));
            to = std::clamp<long long>(to, from, static_cast<long long>(a.size()));
            return json(a.begin() + from, a.begin() + to);
        }
        case Node::Kind::binary: break;
    }
    const std::string& op = n.op;
    if (op == "and") return truth(eval(*n.kids[0], ini, fin)) && truth(eval(*n.kids[1], ini, fin));
    if (op == "or") return truth(eval(*n.kids[0], ini, fin)) || truth(eval(*n.kids[1], ini, fin));
    json a = eval(*n.kids[0], ini, fin);
    json b = eval(*n.kids[1], ini, fin);
    if (op == "==") return equal(a, b);
    if (op == "!=") return !equal(a, b);
    if (op == "contains") {
        if (a.is_string() && b.is_string()) return a.get<std::string>().find(b.get<std::string>()) != std::string::npos;
        if (a.is_array()) {
            for (const json& e : a) {
                if (equal(e, b)) return true;
                if (e.is_string() && b.is_string() && e.get<std::string>().find(b.get<std::string>()) != std::string::npos) return true;
            }
            return false;
        }
        throw DomainError("contains needs a string or array on the left");
    }
    if (op == "<" || op == "<=" || op == ">" || op == ">=") {
        if (a.is_string() && b.is_string()) {
            int c = a.get<std::string>().compare(b.get<std::string>());
            return op == "<" ? c < 0 : op == "<=" ? c <= 0 : op == ">" ? c > 0 : c >= 0;
        }
        double x = num(a, op.c_str()), y = num(b, op.c_str());
        return op == "<" ? x < y : op == "<=" ? x <= y : op == ">" ? x > y : x >= y;
    }
    if (op == "+") {
        if (a.is_string() && b.is_string()) return a.get<std::string>() + b.get<std::string>();
        if (a.is_array() && b.is_array()) {
            json out = a;
            for (const json& e : b) out.push_back(e);
            return out;
        }
        return number_result(num(a, "+") + num(b, "+"));
    }
    double x = num(a, op.c_str()), y = num(b, op.c_str());
    if (op == "-") return number_result(x - y);
    if (op == "*") return number_result(x * y);
    if (y == 0) throw DomainError("division by zero");
    if (op == "/") return number_result(x / y);
    return number_result(std::fmod(x, y));
}

void collect(const Node& n, std::vector<std::string>& out) {
    if (n.kind == Node::Kind::path) out.push_back(n.text);
    for (const auto& k : n.kids) collect(*k, out);
}

void resolve_all(const Node& n, const json& ini, const json& fin) {
    if (n.kind == Node::Kind::path) resolve(n.initial ? ini : fin, n);
    if (n.kind == Node::Kind::call && n.op == "delta") {
        resolve(ini, *n.kids[0]);
        resolve(fin, *n.kids[0]);
    }
    for (const auto& k : n.kids) resolve_all(*k, ini, fin);
}

}  // namespace

Predicate Predicate::parse(std::string_view text) {
    Predicate p;
    p.source_ = std::string(text);
    p.root_ = Parser(text).parse();
    return p;
}

bool Predicate::evaluate(const json& initial_view, const json& final_view) const {
    return truth(eval(*root_, initial_view, final_view));
}

std::vector<std::string> Predicate::paths() const {
    std::vector<std::string> out;
    collect(*root_, out);
    return out;
}

void Predicate::check_paths(const json& initial_view, const json& final_view) const {
    resolve_all(*root_, initial_view, final_view);
}

json oracle_view(const host::HostState& state, const std::vector<std::string>& console) {
    json v = host::to_json(state);
    v["route"] = state.current_route;
    v["active"] = v["documents"][state.active_tab().document_id];
    v["console"] = console;
    return v;
}

}  // namespace jitagent::bench
