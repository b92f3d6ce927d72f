#include "jitagent/script/parser.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <unordered_set>
#include <vector>

namespace jitagent::script {
namespace {

enum class Tok { Ident, Num, Str, Template, Punct, End };

struct TemplatePart {
    std::string source;
    Pos pos;
};

struct Token {
    Tok type = Tok::End;
    std::string text;  // identifier name, punctuator, or cooked string
    double number = 0;
    Pos pos;
    bool newline_before = false;
    std::vector<std::string> quasis;
    std::vector<TemplatePart> parts;
};

const std::array<std::string_view, 50> kPunctuators = {
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "?\?=", "=>", "==",
    "!=",   "<=",  ">=",  "&&",  "||",  "??",  "?.",  "++",  "--",  "+=",  "-=",  "*=", "/=",
    "%=",   "&=",  "|=",  "^=",  "**",  "<<",  ">>",  "{",   "}",   "(",   ")",   "[",  "]",
    ";",    ",",   "<",   ">",   "+",   "-",   "*",   "/",   "%",   "&",   "|"};

const std::array<std::string_view, 9> kSinglePunct = {"^", "!", "~", "?", ":", "=", ".", "@", "#"};

bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '$' ||
           static_cast<unsigned char>(c) >= 0x80;
}
bool is_ident_part(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

void append_utf8(std::string& out, unsigned cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

class Lexer {
public:
    Lexer(std::string_view src, Pos origin) : src_(src), line_(origin.line), col_(origin.column) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        bool newline = false;
        for (;;) {
            newline = skip_space_and_comments() || newline;
            Token t;
            t.pos = here();
            t.newline_before = newline;
            newline = false;
            if (i_ >= src_.size()) {
                t.type = Tok::End;
                out.push_back(std::move(t));
                return out;
            }
            char c = src_[i_];
            if (is_ident_start(c)) {
                std::size_t start = i_;
                while (i_ < src_.size() && is_ident_part(src_[i_])) advance();
                t.type = Tok::Ident;
                t.text = std::string(src_.substr(start, i_ - start));
            } else if ((c >= '0' && c <= '9') || (c == '.' && i_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
                t.type = Tok::Num;
                t.number = lex_number();
            } else if (c == '"' || c == '\'') {
                t.type = Tok::Str;
                t.text = lex_string(c);
            } else if (c == '`') {
                t.type = Tok::Template;
                lex_template(t);
            } else {
                t.type = Tok::Punct;
                t.text = lex_punct();
            }
            out.push_back(std::move(t));
        }
    }

private:
    Pos here() const { return Pos{line_, col_}; }

    void advance() {
        if (src_[i_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++i_;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ScriptSyntaxError(here(), msg); }

    bool skip_space_and_comments() {
        bool newline = false;
        while (i_ < src_.size()) {
            char c = src_[i_];
            if (c == '\n') {
                newline = true;
                advance();
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
                advance();
            } else if (c == '/' && i_ + 1 < src_.size() && src_[i_ + 1] == '/') {
                while (i_ < src_.size() && src_[i_] != '\n') advance();
            } else if (c == '/' && i_ + 1 < src_.size() && src_[i_ + 1] == '*') {
                advance();
                advance();
                while (i_ + 1 < src_.size() && !(src_[i_] == '*' && src_[i_ + 1] == '/')) {
                    if (src_[i_] == '\n') newline = true;
                    advance();
                }
                if (i_ + 1 >= src_.size()) fail("Unterminated comment");
                advance();
                advance();
            } else if (static_cast<unsigned char>(c) == 0xC2 && i_ + 1 < src_.size() &&
                       static_cast<unsigned char>(src_[i_ + 1]) == 0xA0) {
                advance();
                advance();
            } else {
                break;
            }
        }
        return newline;
    }

    double lex_number() {
        std::size_t start = i_;
        if (src_[i_] == '0' && i_ + 1 < src_.size() && std::strchr("xXoObB", src_[i_ + 1]) != nullptr) {
            char k = static_cast<char>(std::tolower(static_cast<unsigned char>(src_[i_ + 1])));
            int base = k == 'x' ? 16 : k == 'o' ? 8 : 2;
            advance();
            advance();
            double v = 0;
            std::size_t digits = 0;
            while (i_ < src_.size()) {
                char d = src_[i_];
                int dv = -1;
                if (d >= '0' && d <= '9') dv = d - '0';
                else if (d >= 'a' && d <= 'f') dv = d - 'a' + 10;
                else if (d >= 'A' && d <= 'F') dv = d - 'A' + 10;
                else if (d == '_') { advance(); continue; }
                if (dv < 0 || dv >= base) break;
                v = v * base + dv;
                ++digits;
                advance();
            }
            if (digits == 0) fail("Invalid number literal");
            if (i_ < src_.size() && is_ident_start(src_[i_])) fail("Invalid or unexpected token");
            return v;
        }
        std::string digits;
        auto take_digits = [&] {
            while (i_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_')) {
                if (src_[i_] != '_') digits.push_back(src_[i_]);
                advance();
            }
        };
        take_digits();
        if (i_ < src_.size() && src_[i_] == '.') {
            digits.push_back('.');
            advance();
            take_digits();
        }
        if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
            digits.push_back('e');
            advance();
            if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) {
                digits.push_back(src_[i_]);
                advance();
            }
            std::size_t before = digits.size();
            take_digits();
            if (digits.size() == before) fail("Invalid number literal");
        }
        if (i_ < src_.size() && src_[i_] == 'n') fail("BigInt literals are not supported");
        if (i_ < src_.size() && is_ident_start(src_[i_])) fail("Invalid or unexpected token");
        (void)start;
        if (!digits.empty() && digits.front() == '.') digits.insert(digits.begin(), '0');
        if (!digits.empty() && digits.back() == '.') digits.push_back('0');
        double v = 0;
        auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (res.ec == std::errc::result_out_of_range) return std::strtod(digits.c_str(), nullptr);
        if (res.ec != std::errc()) fail("Invalid number literal");
        return v;
    }

    unsigned hex_value(std::size_t count) {
        unsigned v = 0;
        for (std::size_t k = 0; k < count; ++k) {
            if (i_ >= src_.size() || !std::isxdigit(static_cast<unsigned char>(src_[i_]))) fail("Invalid hexadecimal escape sequence");
            char d = src_[i_];
            v = v * 16 + static_cast<unsigned>(std::isdigit(static_cast<unsigned char>(d)) ? d - '0' : std::tolower(static_cast<unsigned char>(d)) - 'a' + 10);
            advance();
        }
        return v;
    }

    // Consumes the escape after a backslash and appends its cooked form.
    void lex_escape(std::string& out) {
        if (i_ >= src_.size()) fail("Invalid or unexpected token");
        char e = src_[i_];
        advance();
        switch (e) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            case 'b': out.push_back('\b'); break;
            case 'f': out.push_back('\f'); break;
            case 'v': out.push_back('\v'); break;
            case '0': out.push_back('\0'); break;
            case '\n': break;  // line continuation
            case 'x': append_utf8(out, hex_value(2)); break;
            case 'u': {
                unsigned cp = 0;
                if (i_ < src_.size() && src_[i_] == '{') {
                    advance();
                    while (i_ < src_.size() && src_[i_] != '}') {
                        cp = cp * 16 + hex_value(1);
                    }
                    if (i_ >= src_.size()) fail("Invalid Unicode escape sequence");
                    advance();
                } else {
                    cp = hex_value(4);
                    if (cp >= 0xD800 && cp <= 0xDBFF && i_ + 1 < src_.size() && src_[i_] == '\\' && src_[i_ + 1] == 'u') {
                        std::size_t save_i = i_;
                        int save_line = line_, save_col = col_;
                        advance();
                        advance();
                        unsigned lo = hex_value(4);
                        if (lo >= 0xDC00 && lo <= 0xDFFF) {
                            cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
                        } else {
                            i_ = save_i;
                            line_ = save_line;
                            col_ = save_col;
                        }
                    }
                }
                append_utf8(out, cp);
                break;
            }
            default: out.push_back(e); break;
        }
    }

    std::string lex_string(char quote) {
        advance();
        std::string out;
        while (true) {
            if (i_ >= src_.size() || src_[i_] == '\n') fail("Invalid or unexpected token: unterminated string");
            char c = src_[i_];
            if (c == quote) {
                advance();
                return out;
            }
            if (c == '\\') {
                advance();
                lex_escape(out);
                continue;
            }
            out.push_back(c);
            advance();
        }
    }

    // Skips a nested quoted string or template inside a `${...}` substitution.
    void skip_nested_literal(char quote) {
        advance();
        while (i_ < src_.size() && src_[i_] != quote) {
            if (src_[i_] == '\\') advance();
            if (i_ < src_.size()) advance();
        }
        if (i_ >= src_.size()) fail("Unterminated template literal");
        advance();
    }

    void lex_template(Token& t) {
        advance();
        std::string cur;
        while (true) {
            if (i_ >= src_.size()) fail("Unterminated template literal");
            char c = src_[i_];
            if (c == '`') {
                advance();
                t.quasis.push_back(std::move(cur));
                return;
            }
            if (c == '\\') {
                advance();
                lex_escape(cur);
                continue;
            }
            if (c == '$' && i_ + 1 < src_.size() && src_[i_ + 1] == '{') {
                advance();
                advance();
                t.quasis.push_back(std::move(cur));
                cur.clear();
                Pos start = here();
                std::size_t begin = i_;
                int depth = 0;
                while (true) {
                    if (i_ >= src_.size()) fail("Unterminated template literal");
                    char d = src_[i_];
                    if (d == '}' && depth == 0) break;
                    if (d == '{') ++depth;
                    if (d == '}') --depth;
                    if (d == '\'' || d == '"' || d == '`') {
                        skip_nested_literal(d);
                        continue;
                    }
                    advance();
                }
                t.parts.push_back(TemplatePart{std::string(src_.substr(begin, i_ - begin)), start});
                advance();
                continue;
            }
            cur.push_back(c);
            advance();
        }
    }

    std::string lex_punct() {
        for (std::string_view p : kPunctuators) {
            if (src_.substr(i_, p.size()) == p) {
                // `a?.5:1` is a conditional, not optional chaining.
                if (p == "?." && i_ + 2 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 2]))) continue;
                for (std::size_t k = 0; k < p.size(); ++k) advance();
                return std::string(p);
            }
        }
        for (std::string_view p : kSinglePunct) {
            if (src_[i_] == p[0]) {
                if (p == "@" || p == "#") fail("Invalid or unexpected token");
                advance();
                return std::string(p);
            }
        }
        fail(std::string("Invalid or unexpected token '") + src_[i_] + "'");
    }

    std::string_view src_;
    std::size_t i_ = 0;
    int line_;
    int col_;
};

const std::unordered_set<std::string> kReserved = {
    "break",  "case",   "catch", "class",      "const", "continue", "debugger", "default", "delete",
    "do",     "else",   "export", "extends",   "finally", "for",    "function", "if",      "import",
    "in",     "instanceof", "new", "return",   "super", "switch",   "this",     "throw",   "try",
    "typeof", "var",    "void",  "while",      "with",  "yield",    "let",      "await",   "null",
    "true",   "false"};

bool is_assign_op(const std::string& s) {
    static const std::unordered_set<std::string> ops = {"=",  "+=", "-=",  "*=",  "/=",  "%=",  "**=", "<<=",
                                                        ">>=", ">>>=", "&=", "|=", "^=", "&&=", "||=", "?\?="};
    return ops.count(s) != 0;
}

int binary_precedence(const std::string& op, bool no_in) {
    if (op == "??") return 1;
    if (op == "||") return 2;
    if (op == "&&") return 3;
    if (op == "|") return 4;
    if (op == "^") return 5;
    if (op == "&") return 6;
    if (op == "==" || op == "!=" || op == "===" || op == "!==") return 7;
    if (op == "<" || op == ">" || op == "<=" || op == ">=" || op == "instanceof") return 8;
    if (op == "in") return no_in ? -1 : 8;
    if (op == "<<" || op == ">>" || op == ">>>") return 9;
    if (op == "+" || op == "-") return 10;
    if (op == "*" || op == "/" || op == "%") return 11;
    if (op == "**") return 12;
    return -1;
}

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    std::unique_ptr<Program> program() {
        auto prog = std::make_unique<Program>(Pos{1, 1}, NodeKind::Program);
        while (peek().type != Tok::End) prog->body.push_back(statement());
        return prog;
    }

    NodePtr lone_expression() {
        NodePtr e = expression(false);
        if (peek().type != Tok::End) unexpected(peek());
        return e;
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        std::size_t k = std::min(pos_ + ahead, toks_.size() - 1);
        return toks_[k];
    }
    const Token& next() {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size()) ++pos_;
        return t;
    }
    bool is_punct(const std::string& p, std::size_t ahead = 0) const {
        const Token& t = peek(ahead);
        return t.type == Tok::Punct && t.text == p;
    }
    bool is_word(const std::string& w, std::size_t ahead = 0) const {
        const Token& t = peek(ahead);
        return t.type == Tok::Ident && t.text == w;
    }
    bool eat_punct(const std::string& p) {
        if (!is_punct(p)) return false;
        next();
        return true;
    }
    bool eat_word(const std::string& w) {
        if (!is_word(w)) return false;
        next();
        return true;
    }

    [[noreturn]] void unexpected(const Token& t) const {
        switch (t.type) {
            case Tok::End: throw ScriptSyntaxError(t.pos, "Unexpected end of input");
            case Tok::Num: throw ScriptSyntaxError(t.pos, "Unexpected number");
            case Tok::Str: throw ScriptSyntaxError(t.pos, "Unexpected string");
            case Tok::Template: throw ScriptSyntaxError(t.pos, "Unexpected template string");
            default: throw ScriptSyntaxError(t.pos, "Unexpected token '" + t.text + "'");
        }
    }

    void expect_punct(const std::string& p) {
        if (!eat_punct(p)) unexpected(peek());
    }

    void consume_semicolon() {
        if (eat_punct(";")) return;
        const Token& t = peek();
        if (t.type == Tok::End || is_punct("}") || t.newline_before) return;
        unexpected(t);
    }

    std::string identifier_name() {
        const Token& t = peek();
        if (t.type != Tok::Ident) unexpected(t);
        return next().text;
    }

    std::unique_ptr<Identifier> binding_identifier() {
        const Token& t = peek();
        if (t.type != Tok::Ident || (kReserved.count(t.text) != 0U)) unexpected(t);
        next();
        return std::make_unique<Identifier>(t.pos, t.text);
    }

    // ---- statements ----

    NodePtr statement() {
        const Token& t = peek();
        if (t.type == Tok::Punct) {
            if (t.text == "{") return block();
            if (t.text == ";") {
                next();
                return std::make_unique<EmptyStmt>(t.pos);
            }
        }
        if (t.type == Tok::Ident) {
            const std::string& w = t.text;
            if (w == "var" || w == "const" || (w == "let" && (peek(1).type == Tok::Ident || is_punct("[", 1) || is_punct("{", 1)))) {
                NodePtr d = var_decl(false);
                consume_semicolon();
                return d;
            }
            if (w == "function") return function_decl(false);
            if (w == "async" && is_word("function", 1) && !peek(1).newline_before) {
                next();
                return function_decl(true);
            }
            if (w == "if") return if_stmt();
            if (w == "for") return for_stmt();
            if (w == "while") {
                next();
                auto s = std::make_unique<WhileStmt>(t.pos, NodeKind::While);
                expect_punct("(");
                s->test = expression(false);
                expect_punct(")");
                s->body = statement();
                return s;
            }
            if (w == "do") {
                next();
                auto s = std::make_unique<WhileStmt>(t.pos, NodeKind::DoWhile);
                s->body = statement();
                if (!eat_word("while")) unexpected(peek());
                expect_punct("(");
                s->test = expression(false);
                expect_punct(")");
                eat_punct(";");
                return s;
            }
            if (w == "return") {
                next();
                auto s = std::make_unique<ReturnStmt>(t.pos);
                if (!is_punct(";") && !is_punct("}") && peek().type != Tok::End && !peek().newline_before)
                    s->arg = expression(false);
                consume_semicolon();
                return s;
            }
            if (w == "break" || w == "continue") {
                next();
                if (peek().type == Tok::Ident && !peek().newline_before)
                    throw ScriptSyntaxError(peek().pos, "Labeled statements are not supported");
                consume_semicolon();
                return std::make_unique<JumpStmt>(t.pos, w == "break" ? NodeKind::Break : NodeKind::Continue);
            }
            if (w == "throw") {
                next();
                if (peek().newline_before) throw ScriptSyntaxError(peek().pos, "Illegal newline after throw");
                auto s = std::make_unique<ThrowStmt>(t.pos, expression(false));
                consume_semicolon();
                return s;
            }
            if (w == "try") return try_stmt();
            if (w == "switch") return switch_stmt();
            if (w == "class") throw ScriptSyntaxError(t.pos, "Class declarations are not supported");
            if (w == "import" || w == "export") throw ScriptSyntaxError(t.pos, "Cannot use import statement outside a module");
            if (w == "with") throw ScriptSyntaxError(t.pos, "with statements are not supported");
            if (w == "debugger") {
                next();
                consume_semicolon();
                return std::make_unique<EmptyStmt>(t.pos);
            }
            if (peek(1).type == Tok::Punct && peek(1).text == ":" && kReserved.count(w) == 0)
                throw ScriptSyntaxError(t.pos, "Labeled statements are not supported");
        }
        auto s = std::make_unique<ExprStmt>(t.pos, expression(false));
        consume_semicolon();
        return s;
    }

    NodePtr block() {
        Pos p = peek().pos;
        expect_punct("{");
        auto b = std::make_unique<BlockStmt>(p);
        while (!is_punct("}")) {
            if (peek().type == Tok::End) unexpected(peek());
            b->body.push_back(statement());
        }
        next();
        return b;
    }

    std::unique_ptr<VarDecl> var_decl(bool in_for_head) {
        const Token& t = next();
        DeclKind k = t.text == "var" ? DeclKind::Var : t.text == "let" ? DeclKind::Let : DeclKind::Const;
        auto d = std::make_unique<VarDecl>(t.pos, k);
        do {
            Declarator decl;
            decl.target = binding_target();
            if (eat_punct("=")) decl.init = assignment(in_for_head);
            d->decls.push_back(std::move(decl));
        } while (eat_punct(","));
        return d;
    }

    NodePtr function_decl(bool is_async) {
        Pos p = peek().pos;
        next();  // function
        if (is_punct("*")) throw ScriptSyntaxError(peek().pos, "Generator functions are not supported");
        auto fn = std::make_unique<FunctionNode>(p);
        fn->is_async = is_async;
        fn->name = binding_identifier()->name;
        params_and_body(*fn);
        return std::make_unique<FunctionDecl>(p, std::move(fn));
    }

    NodePtr if_stmt() {
        auto s = std::make_unique<IfStmt>(next().pos);
        expect_punct("(");
        s->test = expression(false);
        expect_punct(")");
        s->consequent = statement();
        if (eat_word("else")) s->alternate = statement();
        return s;
    }

    NodePtr for_stmt() {
        Pos p = next().pos;
        if (is_word("await")) throw ScriptSyntaxError(peek().pos, "for await is not supported");
        expect_punct("(");
        NodePtr init;
        if (is_word("var") || is_word("let") || is_word("const")) {
            auto decl = var_decl(true);
            if ((is_word("of") || is_word("in")) && decl->decls.size() == 1 && !decl->decls[0].init) {
                auto s = std::make_unique<ForEachStmt>(p, is_word("of") ? NodeKind::ForOf : NodeKind::ForIn);
                next();
                s->decl_kind = decl->decl_kind;
                s->target = std::move(decl->decls[0].target);
                s->iterable = is_word("of", 0) ? assignment(false) : expression(false);
                expect_punct(")");
                s->body = statement();
                return s;
            }
            init = std::move(decl);
        } else if (!is_punct(";")) {
            NodePtr e = expression(true);
            if (is_word("of") || is_word("in")) {
                if (e->kind != NodeKind::Identifier && e->kind != NodeKind::Member)
                    throw ScriptSyntaxError(e->pos, "Invalid left-hand side in for-loop");
                auto s = std::make_unique<ForEachStmt>(p, is_word("of") ? NodeKind::ForOf : NodeKind::ForIn);
                next();
                s->target = std::move(e);
                s->iterable = expression(false);
                expect_punct(")");
                s->body = statement();
                return s;
            }
            init = std::make_unique<ExprStmt>(e->pos, std::move(e));
        }
        auto s = std::make_unique<ForStmt>(p);
        s->init = std::move(init);
        expect_punct(";");
        if (!is_punct(";")) s->test = expression(false);
        expect_punct(";");
        if (!is_punct(")")) s->update = expression(false);
        expect_punct(")");
        s->body = statement();
        return s;
    }

    NodePtr try_stmt() {
        auto s = std::make_unique<TryStmt>(next().pos);
        s->block = block();
        if (eat_word("catch")) {
            if (eat_punct("(")) {
                s->param = binding_target();
                expect_punct(")");
            }
            s->handler = block();
        }
        if (eat_word("finally")) s->finalizer = block();
        if (!s->handler && !s->finalizer) throw ScriptSyntaxError(peek().pos, "Missing catch or finally after try");
        return s;
    }

    NodePtr switch_stmt() {
        auto s = std::make_unique<SwitchStmt>(next().pos);
        expect_punct("(");
        s->discriminant = expression(false);
        expect_punct(")");
        expect_punct("{");
        bool seen_default = false;
        while (!eat_punct("}")) {
            SwitchCase c;
            if (eat_word("case")) {
                c.test = expression(false);
            } else if (is_word("default")) {
                if (seen_default) throw ScriptSyntaxError(peek().pos, "More than one default clause in switch statement");
                seen_default = true;
                next();
            } else {
                unexpected(peek());
            }
            expect_punct(":");
            while (!is_word("case") && !is_word("default") && !is_punct("}")) {
                if (peek().type == Tok::End) unexpected(peek());
                c.body.push_back(statement());
            }
            s->cases.push_back(std::move(c));
        }
        return s;
    }

    // ---- binding patterns ----

    NodePtr binding_target() {
        Pos p = peek().pos;
        if (eat_punct("[")) {
            auto pat = std::make_unique<ArrayPattern>(p);
            while (!eat_punct("]")) {
                if (is_punct(",")) {
                    next();
                    pat->elements.push_back(nullptr);
                    continue;
                }
                if (is_punct("...")) {
                    Pos rp = next().pos;
                    pat->elements.push_back(std::make_unique<RestElement>(rp, binding_target()));
                    eat_punct(",");
                    expect_punct("]");
                    break;
                }
                pat->elements.push_back(binding_element());
                if (!is_punct("]")) expect_punct(",");
            }
            return pat;
        }
        if (eat_punct("{")) {
            auto pat = std::make_unique<ObjectPattern>(p);
            while (!eat_punct("}")) {
                if (is_punct("...")) {
                    next();
                    pat->rest = binding_identifier();
                    eat_punct(",");
                    expect_punct("}");
                    break;
                }
                PatternProp prop;
                prop.pos = peek().pos;
                if (eat_punct("[")) {
                    prop.computed_key = assignment(false);
                    expect_punct("]");
                    expect_punct(":");
                    prop.target = binding_element();
                } else {
                    const Token& kt = peek();
                    if (kt.type == Tok::Str) {
                        prop.key = next().text;
                    } else if (kt.type == Tok::Num) {
                        prop.key = number_key(next().number);
                    } else {
                        prop.key = identifier_name();
                    }
                    if (eat_punct(":")) {
                        prop.target = binding_element();
                    } else {
                        if (kt.type != Tok::Ident || kReserved.count(prop.key) != 0U) unexpected(kt);
                        NodePtr id = std::make_unique<Identifier>(kt.pos, prop.key);
                        if (eat_punct("=")) id = std::make_unique<AssignPattern>(kt.pos, std::move(id), assignment(false));
                        prop.target = std::move(id);
                    }
                }
                pat->props.push_back(std::move(prop));
                if (!is_punct("}")) expect_punct(",");
            }
            return pat;
        }
        return binding_identifier();
    }

    NodePtr binding_element() {
        Pos p = peek().pos;
        NodePtr target = binding_target();
        if (eat_punct("=")) return std::make_unique<AssignPattern>(p, std::move(target), assignment(false));
        return target;
    }

    static std::string number_key(double v) {
        if (v == std::floor(v) && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
        char buf[64];
        auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    }

    void params_and_body(FunctionNode& fn) {
        expect_punct("(");
        while (!eat_punct(")")) {
            if (is_punct("...")) {
                Pos rp = next().pos;
                fn.params.push_back(std::make_unique<RestElement>(rp, binding_target()));
                eat_punct(",");
                expect_punct(")");
                break;
            }
            fn.params.push_back(binding_element());
            if (!is_punct(")")) expect_punct(",");
        }
        fn.body = block();
    }

    // ---- expressions ----

    NodePtr expression(bool no_in) {
        Pos p = peek().pos;
        NodePtr first = assignment(no_in);
        if (!is_punct(",")) return first;
        auto seq = std::make_unique<SequenceExpr>(p);
        seq->exprs.push_back(std::move(first));
        while (eat_punct(",")) seq->exprs.push_back(assignment(no_in));
        return seq;
    }

    // True when the tokens at `pos_` start an arrow function's parameter list.
    bool arrow_ahead() const {
        std::size_t k = pos_;
        if (toks_[k].type == Tok::Ident && toks_[k].text == "async" && k + 1 < toks_.size() && !toks_[k + 1].newline_before) {
            if (toks_[k + 1].type == Tok::Ident && k + 2 < toks_.size() && toks_[k + 2].type == Tok::Punct && toks_[k + 2].text == "=>")
                return true;
            if (toks_[k + 1].type == Tok::Punct && toks_[k + 1].text == "(") ++k;
            else return false;
        }
        if (toks_[k].type == Tok::Ident && kReserved.count(toks_[k].text) == 0) {
            return k + 1 < toks_.size() && toks_[k + 1].type == Tok::Punct && toks_[k + 1].text == "=>" &&
                   !toks_[k + 1].newline_before;
        }
        if (!(toks_[k].type == Tok::Punct && toks_[k].text == "(")) return false;
        int depth = 0;
        for (; k < toks_.size(); ++k) {
            const Token& t = toks_[k];
            if (t.type == Tok::End) return false;
            if (t.type != Tok::Punct) continue;
            if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
            if (t.text == ")" || t.text == "]" || t.text == "}") {
                --depth;
                if (depth == 0) {
                    return k + 1 < toks_.size() && toks_[k + 1].type == Tok::Punct && toks_[k + 1].text == "=>";
                }
            }
        }
        return false;
    }

    NodePtr arrow_function(bool no_in) {
        Pos p = peek().pos;
        auto fn = std::make_unique<FunctionNode>(p);
        fn->arrow = true;
        if (is_word("async")) {
            fn->is_async = true;
            next();
        }
        if (peek().type == Tok::Ident) {
            fn->params.push_back(binding_identifier());
        } else {
            expect_punct("(");
            while (!eat_punct(")")) {
                if (is_punct("...")) {
                    Pos rp = next().pos;
                    fn->params.push_back(std::make_unique<RestElement>(rp, binding_target()));
                    eat_punct(",");
                    expect_punct(")");
                    break;
                }
                fn->params.push_back(binding_element());
                if (!is_punct(")")) expect_punct(",");
            }
        }
        expect_punct("=>");
        if (is_punct("{")) {
            fn->body = block();
        } else {
            fn->expression_body = true;
            fn->body = assignment(no_in);
        }
        return fn;
    }

    NodePtr assignment(bool no_in) {
        if (arrow_ahead()) return arrow_function(no_in);
        Pos p = peek().pos;
        NodePtr left = conditional(no_in);
        if (peek().type == Tok::Punct && is_assign_op(peek().text)) {
            if (left->kind != NodeKind::Identifier && left->kind != NodeKind::Member) {
                if (left->kind == NodeKind::Array || left->kind == NodeKind::Object)
                    throw ScriptSyntaxError(left->pos, "Destructuring assignment is not supported; use a declaration");
                throw ScriptSyntaxError(left->pos, "Invalid left-hand side in assignment");
            }
            if (left->kind == NodeKind::Member && as<MemberExpr>(*left).optional)
                throw ScriptSyntaxError(left->pos, "Invalid left-hand side in assignment");
            std::string op = next().text;
            return std::make_unique<AssignExpr>(p, op, std::move(left), assignment(no_in));
        }
        return left;
    }

    NodePtr conditional(bool no_in) {
        Pos p = peek().pos;
        NodePtr test = binary(0, no_in);
        if (!eat_punct("?")) return test;
        auto c = std::make_unique<ConditionalExpr>(p);
        c->test = std::move(test);
        c->consequent = assignment(false);
        expect_punct(":");
        c->alternate = assignment(no_in);
        return c;
    }

    NodePtr binary(int min_prec, bool no_in) {
        NodePtr left = unary();
        for (;;) {
            const Token& t = peek();
            if (t.type != Tok::Punct && !(t.type == Tok::Ident && (t.text == "in" || t.text == "instanceof"))) break;
            int prec = binary_precedence(t.text, no_in);
            if (prec < 0 || prec < min_prec) break;
            std::string op = next().text;
            // `**` is right-associative.
            NodePtr right = binary(op == "**" ? prec : prec + 1, no_in);
            NodeKind k = (op == "&&" || op == "||" || op == "??") ? NodeKind::Logical : NodeKind::Binary;
            left = std::make_unique<BinaryExpr>(t.pos, k, op, std::move(left), std::move(right));
        }
        return left;
    }

    NodePtr unary() {
        const Token& t = peek();
        if (t.type == Tok::Punct && (t.text == "!" || t.text == "-" || t.text == "+" || t.text == "~")) {
            next();
            return std::make_unique<UnaryExpr>(t.pos, t.text, unary());
        }
        if (t.type == Tok::Punct && (t.text == "++" || t.text == "--")) {
            next();
            NodePtr arg = unary();
            if (arg->kind != NodeKind::Identifier && arg->kind != NodeKind::Member)
                throw ScriptSyntaxError(arg->pos, "Invalid left-hand side expression in prefix operation");
            return std::make_unique<UpdateExpr>(t.pos, t.text, true, std::move(arg));
        }
        if (t.type == Tok::Ident && (t.text == "typeof" || t.text == "void" || t.text == "delete")) {
            next();
            return std::make_unique<UnaryExpr>(t.pos, t.text, unary());
        }
        if (t.type == Tok::Ident && t.text == "await") {
            next();
            return std::make_unique<AwaitExpr>(t.pos, unary());
        }
        NodePtr e = postfix();
        if (is_punct("**") && e->kind == NodeKind::Unary)
            throw ScriptSyntaxError(e->pos, "Unary operator used immediately before exponentiation expression");
        return e;
    }

    NodePtr postfix() {
        NodePtr e = call_member(false);
        const Token& t = peek();
        if (t.type == Tok::Punct && (t.text == "++" || t.text == "--") && !t.newline_before) {
            if (e->kind != NodeKind::Identifier && e->kind != NodeKind::Member)
                throw ScriptSyntaxError(e->pos, "Invalid left-hand side expression in postfix operation");
            next();
            return std::make_unique<UpdateExpr>(t.pos, t.text, false, std::move(e));
        }
        return e;
    }

    std::vector<NodePtr> arguments() {
        std::vector<NodePtr> args;
        expect_punct("(");
        while (!eat_punct(")")) {
            if (is_punct("...")) {
                Pos sp = next().pos;
                args.push_back(std::make_unique<SpreadExpr>(sp, assignment(false)));
            } else {
                args.push_back(assignment(false));
            }
            if (!is_punct(")")) expect_punct(",");
        }
        return args;
    }

    NodePtr call_member(bool no_call) {
        NodePtr e;
        const Token& t = peek();
        if (t.type == Tok::Ident && t.text == "new") {
            next();
            if (is_punct(".")) throw ScriptSyntaxError(peek().pos, "new.target is not supported");
            auto n = std::make_unique<CallExpr>(t.pos, NodeKind::New);
            n->callee = call_member(true);
            if (is_punct("(")) n->args = arguments();
            e = std::move(n);
        } else {
            e = primary();
        }
        for (;;) {
            const Token& c = peek();
            if (c.type == Tok::Template) throw ScriptSyntaxError(c.pos, "Tagged templates are not supported");
            if (c.type != Tok::Punct) break;
            if (c.text == ".") {
                next();
                auto m = std::make_unique<MemberExpr>(c.pos);
                m->object = std::move(e);
                m->property = identifier_name();
                e = std::move(m);
            } else if (c.text == "?.") {
                if (no_call) throw ScriptSyntaxError(c.pos, "Invalid optional chain from new expression");
                next();
                if (is_punct("(")) {
                    auto call = std::make_unique<CallExpr>(c.pos);
                    call->callee = std::move(e);
                    call->optional = true;
                    call->args = arguments();
                    e = std::move(call);
                } else {
                    auto m = std::make_unique<MemberExpr>(c.pos);
                    m->object = std::move(e);
                    m->optional = true;
                    if (eat_punct("[")) {
                        m->computed = expression(false);
                        expect_punct("]");
                    } else {
                        m->property = identifier_name();
                    }
                    e = std::move(m);
                }
            } else if (c.text == "[") {
                next();
                auto m = std::make_unique<MemberExpr>(c.pos);
                m->object = std::move(e);
                m->computed = expression(false);
                expect_punct("]");
                e = std::move(m);
            } else if (c.text == "(" && !no_call) {
                auto call = std::make_unique<CallExpr>(c.pos);
                call->callee = std::move(e);
                call->args = arguments();
                e = std::move(call);
            } else {
                break;
            }
        }
        return e;
    }

    NodePtr primary() {
        const Token& t = peek();
        switch (t.type) {
            case Tok::Num: next(); return std::make_unique<NumberLit>(t.pos, t.number);
            case Tok::Str: next(); return std::make_unique<StringLit>(t.pos, t.text);
            case Tok::Template: {
                next();
                auto tl = std::make_unique<TemplateLit>(t.pos);
                tl->quasis = t.quasis;
                for (const TemplatePart& part : t.parts) {
                    Lexer sub(part.source, part.pos);
                    Parser inner(sub.run());
                    tl->exprs.push_back(inner.lone_expression());
                }
                return tl;
            }
            case Tok::End: unexpected(t);
            case Tok::Punct: {
                if (t.text == "(") {
                    next();
                    NodePtr e = expression(false);
                    expect_punct(")");
                    return e;
                }
                if (t.text == "[") return array_literal();
                if (t.text == "{") return object_literal();
                if (t.text == "/" || t.text == "/=")
                    throw ScriptSyntaxError(t.pos, "Regular expression literals are not supported");
                unexpected(t);
            }
            case Tok::Ident: break;
        }
        const std::string& w = t.text;
        if (w == "true" || w == "false") {
            next();
            return std::make_unique<BooleanLit>(t.pos, w == "true");
        }
        if (w == "null") {
            next();
            return std::make_unique<NullLit>(t.pos);
        }
        if (w == "this") {
            next();
            return std::make_unique<ThisExpr>(t.pos);
        }
        if (w == "function" || (w == "async" && is_word("function", 1))) {
            bool is_async = w == "async";
            if (is_async) next();
            next();
            if (is_punct("*")) throw ScriptSyntaxError(peek().pos, "Generator functions are not supported");
            auto fn = std::make_unique<FunctionNode>(t.pos);
            fn->is_async = is_async;
            if (peek().type == Tok::Ident) fn->name = binding_identifier()->name;
            params_and_body(*fn);
            return fn;
        }
        if (w == "class") throw ScriptSyntaxError(t.pos, "Class expressions are not supported");
        if (w == "super" || w == "import") throw ScriptSyntaxError(t.pos, "'" + w + "' keyword unexpected here");
        if (kReserved.count(w) != 0U) unexpected(t);
        next();
        return std::make_unique<Identifier>(t.pos, w);
    }

    NodePtr array_literal() {
        Pos p = next().pos;
        auto a = std::make_unique<ArrayLit>(p);
        while (!eat_punct("]")) {
            if (is_punct(",")) throw ScriptSyntaxError(peek().pos, "Array holes are not supported");
            if (is_punct("...")) {
                Pos sp = next().pos;
                a->elements.push_back(std::make_unique<SpreadExpr>(sp, assignment(false)));
            } else {
                a->elements.push_back(assignment(false));
            }
            if (!is_punct("]")) expect_punct(",");
        }
        return a;
    }

    NodePtr object_literal() {
        Pos p = next().pos;
        auto o = std::make_unique<ObjectLit>(p);
        while (!eat_punct("}")) {
            Property prop;
            prop.pos = peek().pos;
            if (is_punct("...")) {
                next();
                prop.spread = true;
                prop.value = assignment(false);
            } else {
                bool is_async = false;
                if (is_word("async") && !is_punct(",", 1) && !is_punct(":", 1) && !is_punct("(", 1) && !is_punct("}", 1)) {
                    is_async = true;
                    next();
                }
                if ((is_word("get") || is_word("set")) && !is_punct(",", 1) && !is_punct(":", 1) && !is_punct("(", 1) && !is_punct("}", 1))
                    throw ScriptSyntaxError(peek().pos, "Accessor properties are not supported");
                const Token& kt = peek();
                bool key_is_ident = false;
                if (eat_punct("[")) {
                    prop.computed_key = assignment(false);
                    expect_punct("]");
                } else if (kt.type == Tok::Str) {
                    prop.key = next().text;
                } else if (kt.type == Tok::Num) {
                    prop.key = number_key(next().number);
                } else {
                    prop.key = identifier_name();
                    key_is_ident = true;
                }
                if (is_punct("(")) {
                    auto fn = std::make_unique<FunctionNode>(kt.pos);
                    fn->name = prop.key;
                    fn->is_async = is_async;
                    params_and_body(*fn);
                    prop.value = std::move(fn);
                } else if (eat_punct(":")) {
                    prop.value = assignment(false);
                } else {
                    if (!key_is_ident || kReserved.count(prop.key) != 0U) unexpected(peek());
                    prop.value = std::make_unique<Identifier>(kt.pos, prop.key);
                }
            }
            o->props.push_back(std::move(prop));
            if (!is_punct("}")) expect_punct(",");
        }
        return o;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace

std::unique_ptr<Program> parse(std::string_view source) {
    Lexer lexer(source, Pos{1, 1});
    Parser parser(lexer.run());
    return parser.program();
}

}  // namespace jitagent::script
