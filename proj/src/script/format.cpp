#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "jitagent/common.hpp"
#include "runtime.hpp"

namespace jitagent::script {

std::string number_to_string(double v) {
    if (std::isnan(v)) return "NaN";
    if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
    if (v == 0) return "0";
    std::string sign = v < 0 ? "-" : "";
    double a = std::fabs(v);
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, a, std::chars_format::scientific);
    std::string sci(buf, res.ptr);
    auto epos = sci.find('e');
    std::string mant = sci.substr(0, epos);
    int exp10 = std::stoi(sci.substr(epos + 1));
    std::string digits;
    for (char c : mant)
        if (c != '.') digits += c;
    while (digits.size() > 1 && digits.back() == '0') digits.pop_back();
    int k = static_cast<int>(digits.size());
    int n = exp10 + 1;
    std::string out;
    if (k <= n && n <= 21) {
        out = digits + std::string(static_cast<std::size_t>(n - k), '0');
    } else if (0 < n && n <= 21) {
        out = digits.substr(0, static_cast<std::size_t>(n)) + "." + digits.substr(static_cast<std::size_t>(n));
    } else if (-6 < n && n <= 0) {
        out = "0." + std::string(static_cast<std::size_t>(-n), '0') + digits;
    } else {
        int e = n - 1;
        out = digits.substr(0, 1);
        if (k > 1) out += "." + digits.substr(1);
        out += e < 0 ? "e-" : "e+";
        out += std::to_string(std::abs(e));
    }
    return sign + out;
}

namespace detail {
namespace {

bool is_identifier_name(const std::string& s) {
    if (s.empty()) return false;
    auto ok_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$'; };
    if (!ok_start(s[0])) return false;
    for (char c : s)
        if (!ok_start(c) && !std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

std::string single_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "\\'";
        else if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else out += c;
    }
    return out + "'";
}

template <class J>
Value from_any(Runtime& rt, const J& j, const std::function<void(const ObjectRef&, const J&)>& methods) {
    switch (j.type()) {
        case nlohmann::json::value_t::null:
        case nlohmann::json::value_t::discarded: return Null{};
        case nlohmann::json::value_t::boolean: return j.template get<bool>();
        case nlohmann::json::value_t::number_integer:
        case nlohmann::json::value_t::number_unsigned:
        case nlohmann::json::value_t::number_float: return j.template get<double>();
        case nlohmann::json::value_t::string: return j.template get<std::string>();
        case nlohmann::json::value_t::array: {
            std::vector<Value> items;
            items.reserve(j.size());
            for (const auto& e : j) items.push_back(from_any(rt, e, methods));
            return rt.new_array(std::move(items));
        }
        case nlohmann::json::value_t::object: {
            auto obj = rt.new_object();
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (it.key() == "$methods") continue;
                obj->set(it.key(), from_any(rt, it.value(), methods));
            }
            if (methods && j.contains("$methods")) methods(obj, j.at("$methods"));
            return obj;
        }
        default: return Undefined{};
    }
}

}  // namespace

bool Runtime::truthy(const Value& v) {
    switch (v.index()) {
        case 0:
        case 1: return false;
        case 2: return std::get<bool>(v);
        case 3: {
            double d = std::get<double>(v);
            return d != 0 && !std::isnan(d);
        }
        case 4: return !std::get<std::string>(v).empty();
        default: return true;
    }
}

std::string Runtime::type_of(const Value& v) const {
    switch (v.index()) {
        case 0: return "undefined";
        case 1: return "object";
        case 2: return "boolean";
        case 3: return "number";
        case 4: return "string";
        default: return std::get<ObjectRef>(v)->callable() ? "function" : "object";
    }
}

std::string Runtime::to_string(const Value& v) {
    switch (v.index()) {
        case 0: return "undefined";
        case 1: return "null";
        case 2: return std::get<bool>(v) ? "true" : "false";
        case 3: return number_to_string(std::get<double>(v));
        case 4: return std::get<std::string>(v);
        default: break;
    }
    const ObjectRef& o = std::get<ObjectRef>(v);
    switch (o->kind) {
        case Object::Kind::array: {
            if (++depth_ > limits_.max_call_depth) {
                --depth_;
                throw LimitAbort{LimitKind::call_depth};
            }
            std::string out;
            for (std::size_t i = 0; i < o->items.size(); ++i) {
                if (i > 0) out += ',';
                const Value& item = o->items[i];
                if (!std::holds_alternative<Undefined>(item) && !std::holds_alternative<Null>(item)) out += to_string(item);
                check_string(out);
            }
            --depth_;
            return out;
        }
        case Object::Kind::error: {
            const Value* n = o->find("name");
            const Value* m = o->find("message");
            std::string name = n != nullptr ? to_string(*n) : "Error";
            std::string msg = m != nullptr ? to_string(*m) : "";
            return msg.empty() ? name : name + ": " + msg;
        }
        case Object::Kind::function:
        case Object::Kind::native: return "function " + o->name + "() { [native code] }";
        case Object::Kind::promise: return "[object Promise]";
        default: return "[object Object]";
    }
}

double Runtime::to_number(const Value& v) {
    switch (v.index()) {
        case 0: return std::nan("");
        case 1: return 0;
        case 2: return std::get<bool>(v) ? 1 : 0;
        case 3: return std::get<double>(v);
        case 4: {
            std::string s = std::get<std::string>(v);
            auto b = s.find_first_not_of(" \t\n\r\f\v");
            if (b == std::string::npos) return 0;
            auto e = s.find_last_not_of(" \t\n\r\f\v");
            s = s.substr(b, e - b + 1);
            if (s == "Infinity" || s == "+Infinity") return INFINITY;
            if (s == "-Infinity") return -INFINITY;
            if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X' || s[1] == 'o' || s[1] == 'O' || s[1] == 'b' || s[1] == 'B')) {
                int base = (s[1] == 'x' || s[1] == 'X') ? 16 : (s[1] == 'o' || s[1] == 'O') ? 8 : 2;
                double r = 0;
                for (std::size_t i = 2; i < s.size(); ++i) {
                    int d = std::isdigit(static_cast<unsigned char>(s[i])) ? s[i] - '0'
                            : std::isalpha(static_cast<unsigned char>(s[i])) ? std::tolower(s[i]) - 'a' + 10
                                                                             : 99;
                    if (d >= base) return std::nan("");
                    r = r * base + d;
                }
                return r;
            }
            for (char c : s)
                if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' || c == '+' || c == '-'))
                    return std::nan("");
            char* end = nullptr;
            double r = std::strtod(s.c_str(), &end);
            if (end != s.c_str() + s.size()) return std::nan("");
            return r;
        }
        default: break;
    }
    const ObjectRef& o = std::get<ObjectRef>(v);
    if (o->kind == Object::Kind::array) {
        if (o->items.empty()) return 0;
        if (o->items.size() == 1) return to_number(Value{to_string(o->items[0])});
    }
    return std::nan("");
}

bool Runtime::strict_equals(const Value& a, const Value& b) const {
    if (a.index() != b.index()) return false;
    switch (a.index()) {
        case 0:
        case 1: return true;
        case 2: return std::get<bool>(a) == std::get<bool>(b);
        case 3: return std::get<double>(a) == std::get<double>(b);
        case 4: return std::get<std::string>(a) == std::get<std::string>(b);
        default: return std::get<ObjectRef>(a) == std::get<ObjectRef>(b);
    }
}

bool Runtime::loose_equals(const Value& a, const Value& b) {
    bool an = a.index() <= 1;
    bool bn = b.index() <= 1;
    if (an || bn) return an && bn;
    if (a.index() == b.index()) return strict_equals(a, b);
    bool ao = std::holds_alternative<ObjectRef>(a);
    bool bo = std::holds_alternative<ObjectRef>(b);
    if (ao && bo) return false;
    if (ao) return loose_equals(Value{to_string(a)}, b);
    if (bo) return loose_equals(a, Value{to_string(b)});
    return to_number(a) == to_number(b);
}

std::string Runtime::inspect(const Value& v, int depth, bool top) {
    switch (v.index()) {
        case 0: return "undefined";
        case 1: return "null";
        case 2: return std::get<bool>(v) ? "true" : "false";
        case 3: {
            double d = std::get<double>(v);
            if (d == 0 && std::signbit(d)) return "-0";
            return number_to_string(d);
        }
        case 4: return top ? std::get<std::string>(v) : single_quote(std::get<std::string>(v));
        default: break;
    }
    const ObjectRef& o = std::get<ObjectRef>(v);
    switch (o->kind) {
        case Object::Kind::array: {
            if (o->items.empty()) return "[]";
            if (depth > 2) return "[Array]";
            std::string out = "[ ";
            for (std::size_t i = 0; i < o->items.size(); ++i) {
                if (i > 0) out += ", ";
                if (i >= 100) {
                    out += "... " + std::to_string(o->items.size() - 100) + " more items";
                    break;
                }
                out += inspect(o->items[i], depth + 1, false);
            }
            return out + " ]";
        }
        case Object::Kind::function:
        case Object::Kind::native:
            return o->name.empty() ? "[Function (anonymous)]" : "[Function: " + o->name + "]";
        case Object::Kind::error: return top ? to_string(v) : "[" + to_string(v) + "]";
        case Object::Kind::promise:
            switch (o->promise_state) {
                case Object::PromiseState::pending: return "Promise { <pending> }";
                case Object::PromiseState::fulfilled: return "Promise { " + inspect(o->settled, depth + 1, false) + " }";
                case Object::PromiseState::rejected: return "Promise { <rejected> " + inspect(o->settled, depth + 1, false) + " }";
            }
            return "Promise {}";
        case Object::Kind::host: return "[Bridge " + o->host_path + "]";
        default: break;
    }
    std::vector<const std::pair<std::string, Value>*> shown;
    for (const auto& p : o->props)
        if (p.first != "__ctor__") shown.push_back(&p);
    if (shown.empty()) return "{}";
    if (depth > 2) return "[Object]";
    std::string out = "{ ";
    for (std::size_t i = 0; i < shown.size(); ++i) {
        if (i > 0) out += ", ";
        const auto& [k, val] = *shown[i];
        out += is_identifier_name(k) ? k : single_quote(k);
        out += ": ";
        out += inspect(val, depth + 1, false);
    }
    return out + " }";
}

std::string Runtime::json_stringify(const Value& v, const std::string& indent, const std::string& current, bool& present) {
    present = true;
    switch (v.index()) {
        case 0: present = false; return {};
        case 1: return "null";
        case 2: return std::get<bool>(v) ? "true" : "false";
        case 3: {
            double d = std::get<double>(v);
            return std::isfinite(d) ? number_to_string(d) : "null";
        }
        case 4: return nlohmann::json(std::get<std::string>(v)).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        default: break;
    }
    const ObjectRef& o = std::get<ObjectRef>(v);
    if (o->callable()) {
        present = false;
        return {};
    }
    if (current.size() > 200 * std::max<std::size_t>(1, indent.size()) || depth_ > limits_.max_call_depth)
        throw_error("TypeError", "Converting circular structure to JSON");
    ++depth_;
    struct Guard {
        std::size_t& d;
        ~Guard() { --d; }
    } guard{depth_};
    std::string inner = current + indent;
    std::string sep = indent.empty() ? "," : ",\n" + inner;
    std::string open_pad = indent.empty() ? "" : "\n" + inner;
    std::string close_pad = indent.empty() ? "" : "\n" + current;
    std::string next = indent.empty() ? current + " " : inner;
    if (o->kind == Object::Kind::array) {
        if (o->items.empty()) return "[]";
        std::string out = "[" + open_pad;
        for (std::size_t i = 0; i < o->items.size(); ++i) {
            if (i > 0) out += sep;
            bool p = false;
            std::string s = json_stringify(o->items[i], indent, next, p);
            out += p ? s : "null";
            check_string(out);
        }
        return out + close_pad + "]";
    }
    if (o->kind != Object::Kind::plain) return "{}";
    std::string out;
    bool any = false;
    for (const auto& [k, val] : o->props) {
        if (k == "__ctor__") continue;
        bool p = false;
        std::string s = json_stringify(val, indent, next, p);
        if (!p) continue;
        out += any ? sep : "{" + open_pad;
        any = true;
        out += nlohmann::json(k).dump() + (indent.empty() ? ":" : ": ") + s;
        check_string(out);
    }
    if (!any) return "{}";
    return out + close_pad + "}";
}

Value Runtime::json_parse(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw_error("SyntaxError", "Unexpected token in JSON at position " + std::to_string(e.byte > 0 ? e.byte - 1 : 0));
    }
    return from_any<nlohmann::ordered_json>(*this, j, {});
}

nlohmann::json Runtime::to_json(const Value& v, int depth) {
    switch (v.index()) {
        case 0:
        case 1: return nullptr;
        case 2: return std::get<bool>(v);
        case 3: {
            double d = std::get<double>(v);
            if (!std::isfinite(d)) return nullptr;
            if (d == std::trunc(d) && std::fabs(d) < 9007199254740992.0) return static_cast<std::int64_t>(d);
            return d;
        }
        case 4: return std::get<std::string>(v);
        default: break;
    }
    if (depth > 64) throw_error("TypeError", "Converting circular structure to JSON");
    const ObjectRef& o = std::get<ObjectRef>(v);
    switch (o->kind) {
        case Object::Kind::array: {
            nlohmann::json arr = nlohmann::json::array();
            for (const Value& item : o->items) arr.push_back(to_json(item, depth + 1));
            return arr;
        }
        case Object::Kind::plain: {
            nlohmann::json obj = nlohmann::json::object();
            for (const auto& [k, val] : o->props) {
                if (k == "__ctor__" || std::holds_alternative<Undefined>(val)) continue;
                if (const auto* f = std::get_if<ObjectRef>(&val); f != nullptr && (*f)->callable()) continue;
                obj[k] = to_json(val, depth + 1);
            }
            return obj;
        }
        case Object::Kind::error: {
            nlohmann::json obj = nlohmann::json::object();
            if (const Value* n = o->find("name")) obj["name"] = to_string(*n);
            if (const Value* m = o->find("message")) obj["message"] = to_string(*m);
            return obj;
        }
        case Object::Kind::promise:
            return o->promise_state == Object::PromiseState::fulfilled ? to_json(o->settled, depth + 1) : nlohmann::json(nullptr);
        default: return nullptr;
    }
}

Value Runtime::from_json(const nlohmann::json& j) {
    std::function<void(const ObjectRef&, const nlohmann::json&)> methods = [this](const ObjectRef& obj, const nlohmann::json& spec) {
        if (!spec.is_object()) return;
        for (auto it = spec.begin(); it != spec.end(); ++it) {
            std::string path = it.value().value("path", "");
            nlohmann::json prefix = it.value().value("args", nlohmann::json::array());
            if (path.empty()) continue;
            obj->set(it.key(), new_native(it.key(), [path, prefix](Runtime& rt, const Value&, std::vector<Value>& args) {
                std::vector<Value> all;
                for (const auto& p : prefix) all.push_back(rt.from_json(p));
                all.insert(all.end(), args.begin(), args.end());
                return rt.host_invoke(path, all, rt.current_pos_);
            }));
        }
    };
    return from_any<nlohmann::json>(*this, j, methods);
}

}  // namespace detail
}  // namespace jitagent::script
