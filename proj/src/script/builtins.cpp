#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "runtime.hpp"

namespace jitagent::script::detail {
namespace {

const Value kUndefined = Undefined{};

const Value& arg(const std::vector<Value>& args, std::size_t i) { return i < args.size() ? args[i] : kUndefined; }

bool is_nullish(const Value& v) { return v.index() <= 1; }

double to_integer(Runtime& rt, const Value& v) {
    double d = rt.to_number(v);
    if (std::isnan(d)) return 0;
    return std::trunc(d);
}

// Resolves a relative index (negative counts from the end) into [0, len].
std::size_t rel_index(Runtime& rt, const Value& v, std::size_t len, std::size_t dflt) {
    if (std::holds_alternative<Undefined>(v)) return dflt;
    double d = to_integer(rt, v);
    auto n = static_cast<double>(len);
    if (d < 0) d = std::max(0.0, n + d);
    return static_cast<std::size_t>(std::min(d, n));
}

std::string ascii_case(std::string s, bool upper) {
    for (char& c : s) c = static_cast<char>(upper ? std::toupper(static_cast<unsigned char>(c)) : std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s, bool start, bool end) {
    const char* ws = " \t\n\r\f\v";
    std::size_t b = start ? s.find_first_not_of(ws) : 0;
    if (b == std::string::npos) return {};
    std::size_t e = end ? s.find_last_not_of(ws) : s.size() - 1;
    return s.substr(b, e - b + 1);
}

double parse_int(const std::string& text, int radix) {
    std::string s = trim(text, true, true);
    double sign = 1;
    std::size_t i = 0;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
        if (s[i] == '-') sign = -1;
        ++i;
    }
    if (radix == 0) {
        radix = 10;
        if (s.size() > i + 1 && s[i] == '0' && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
            radix = 16;
            i += 2;
        }
    } else if (radix == 16 && s.size() > i + 1 && s[i] == '0' && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
        i += 2;
    }
    if (radix < 2 || radix > 36) return std::nan("");
    double r = 0;
    bool any = false;
    for (; i < s.size(); ++i) {
        char c = s[i];
        int d = std::isdigit(static_cast<unsigned char>(c)) ? c - '0'
                : std::isalpha(static_cast<unsigned char>(c)) ? std::tolower(static_cast<unsigned char>(c)) - 'a' + 10
                                                              : 99;
        if (d >= radix) break;
        r = r * radix + d;
        any = true;
    }
    return any ? sign * r : std::nan("");
}

double parse_float(const std::string& text) {
    std::string s = trim(text, true, false);
    std::size_t i = 0;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
    if (s.compare(i, 8, "Infinity") == 0) return s[0] == '-' ? -INFINITY : INFINITY;
    std::size_t start = i;
    bool digits = false;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, digits = true;
    if (i < s.size() && s[i] == '.') {
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, digits = true;
    }
    if (!digits) return std::nan("");
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
        if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            i = j;
        }
    }
    (void)start;
    return std::strtod(s.substr(0, i).c_str(), nullptr);
}

std::string to_radix(double d, int radix) {
    if (radix == 10 || !std::isfinite(d)) return number_to_string(d);
    bool neg = d < 0;
    double ip = std::floor(std::fabs(d));
    std::string out;
    const char* digits = "0123456789abcdefghijklmnopqrstuvwxyz";
    if (ip == 0) out = "0";
    while (ip > 0) {
        out.insert(out.begin(), digits[static_cast<int>(std::fmod(ip, radix))]);
        ip = std::floor(ip / radix);
    }
    double frac = std::fabs(d) - std::floor(std::fabs(d));
    if (frac > 0) {
        out += '.';
        for (int i = 0; i < 20 && frac > 0; ++i) {
            frac *= radix;
            int digit = static_cast<int>(frac);
            out += digits[digit];
            frac -= digit;
        }
    }
    return neg ? "-" + out : out;
}

}  // namespace

bool Runtime::is_string_method(const std::string& key) const {
    static const std::unordered_set<std::string> names = {
        "charAt", "charCodeAt", "codePointAt", "indexOf", "lastIndexOf", "includes", "startsWith", "endsWith",
        "slice", "substring", "substr", "toUpperCase", "toLowerCase", "toLocaleUpperCase", "toLocaleLowerCase",
        "trim", "trimStart", "trimEnd", "padStart", "padEnd", "repeat", "split", "replace", "replaceAll",
        "concat", "at", "toString", "valueOf", "localeCompare", "normalize"};
    return names.count(key) > 0;
}

bool Runtime::is_array_method(const std::string& key) const {
    static const std::unordered_set<std::string> names = {
        "push", "pop", "shift", "unshift", "slice", "splice", "concat", "join", "indexOf", "lastIndexOf",
        "includes", "find", "findIndex", "findLast", "findLastIndex", "filter", "map", "forEach", "some",
        "every", "reduce", "reduceRight", "reverse", "sort", "flat", "flatMap", "fill", "at", "keys", "values",
        "entries", "toString"};
    return names.count(key) > 0;
}

bool Runtime::string_method(const std::string& s, const std::string& key, std::vector<Value>& args, Value& out) {
    const std::size_t len = s.size();
    if (key == "charAt") {
        double i = to_integer(*this, arg(args, 0));
        out = (i >= 0 && i < static_cast<double>(len)) ? std::string(1, s[static_cast<std::size_t>(i)]) : std::string();
    } else if (key == "charCodeAt" || key == "codePointAt") {
        double i = to_integer(*this, arg(args, 0));
        if (i >= 0 && i < static_cast<double>(len)) out = static_cast<double>(static_cast<unsigned char>(s[static_cast<std::size_t>(i)]));
        else out = key == "charCodeAt" ? Value{std::nan("")} : Value{Undefined{}};
    } else if (key == "indexOf") {
        std::string needle = to_string(arg(args, 0));
        std::size_t from = rel_index(*this, arg(args, 1), len, 0);
        auto p = s.find(needle, from);
        out = p == std::string::npos ? -1.0 : static_cast<double>(p);
    } else if (key == "lastIndexOf") {
        std::string needle = to_string(arg(args, 0));
        auto p = s.rfind(needle);
        out = p == std::string::npos ? -1.0 : static_cast<double>(p);
    } else if (key == "includes") {
        std::string needle = to_string(arg(args, 0));
        out = s.find(needle, rel_index(*this, arg(args, 1), len, 0)) != std::string::npos;
    } else if (key == "startsWith") {
        std::string needle = to_string(arg(args, 0));
        std::size_t from = rel_index(*this, arg(args, 1), len, 0);
        out = s.compare(from, needle.size(), needle) == 0 && from + needle.size() <= len;
    } else if (key == "endsWith") {
        std::string needle = to_string(arg(args, 0));
        std::size_t end = rel_index(*this, arg(args, 1), len, len);
        out = needle.size() <= end && s.compare(end - needle.size(), needle.size(), needle) == 0;
    } else if (key == "slice") {
        std::size_t b = rel_index(*this, arg(args, 0), len, 0);
        std::size_t e = rel_index(*this, arg(args, 1), len, len);
        out = b < e ? s.substr(b, e - b) : std::string();
    } else if (key == "substring") {
        auto clamp = [&](const Value& v, std::size_t dflt) -> std::size_t {
            if (std::holds_alternative<Undefined>(v)) return dflt;
            double d = to_integer(*this, v);
            return static_cast<std::size_t>(std::clamp(d, 0.0, static_cast<double>(len)));
        };
        std::size_t b = clamp(arg(args, 0), 0);
        std::size_t e = clamp(arg(args, 1), len);
        if (b > e) std::swap(b, e);
        out = s.substr(b, e - b);
    } else if (key == "substr") {
        std::size_t b = rel_index(*this, arg(args, 0), len, 0);
        double n = std::holds_alternative<Undefined>(arg(args, 1)) ? static_cast<double>(len) : to_integer(*this, arg(args, 1));
        out = n <= 0 ? std::string() : s.substr(b, static_cast<std::size_t>(n));
    } else if (key == "toUpperCase" || key == "toLocaleUpperCase") {
        out = ascii_case(s, true);
    } else if (key == "toLowerCase" || key == "toLocaleLowerCase") {
        out = ascii_case(s, false);
    } else if (key == "trim") {
        out = trim(s, true, true);
    } else if (key == "trimStart") {
        out = trim(s, true, false);
    } else if (key == "trimEnd") {
        out = trim(s, false, true);
    } else if (key == "padStart" || key == "padEnd") {
        double target = to_integer(*this, arg(args, 0));
        std::string fill = std::holds_alternative<Undefined>(arg(args, 1)) ? " " : to_string(arg(args, 1));
        if (target <= static_cast<double>(len) || fill.empty()) {
            out = s;
        } else {
            auto need = static_cast<std::size_t>(target) - len;
            check_array(need);
            std::string pad;
            while (pad.size() < need) pad += fill;
            pad.resize(need);
            out = key == "padStart" ? pad + s : s + pad;
        }
    } else if (key == "repeat") {
        double n = to_integer(*this, arg(args, 0));
        if (n < 0 || std::isinf(n)) throw_error("RangeError", "Invalid count value: " + number_to_string(n));
        if (n * static_cast<double>(len) > static_cast<double>(limits_.max_string_length)) throw LimitAbort{LimitKind::memory};
        std::string r;
        for (int i = 0; i < static_cast<int>(n); ++i) r += s;
        out = r;
    } else if (key == "split") {
        std::vector<Value> parts;
        double limit = std::holds_alternative<Undefined>(arg(args, 1)) ? 4294967295.0 : to_integer(*this, arg(args, 1));
        if (std::holds_alternative<Undefined>(arg(args, 0))) {
            parts.emplace_back(s);
        } else {
            std::string sep = to_string(arg(args, 0));
            if (sep.empty()) {
                for (char c : s) parts.emplace_back(std::string(1, c));
            } else {
                std::size_t start = 0;
                for (;;) {
                    auto p = s.find(sep, start);
                    if (p == std::string::npos) {
                        parts.emplace_back(s.substr(start));
                        break;
                    }
                    parts.emplace_back(s.substr(start, p - start));
                    start = p + sep.size();
                    tick();
                }
            }
        }
        if (static_cast<double>(parts.size()) > limit) parts.resize(static_cast<std::size_t>(std::max(0.0, limit)));
        out = new_array(std::move(parts));
    } else if (key == "replace" || key == "replaceAll") {
        std::string needle = to_string(arg(args, 0));
        const Value& with = arg(args, 1);
        const auto* fn = std::get_if<ObjectRef>(&with);
        bool call_fn = fn != nullptr && (*fn)->callable();
        std::string replacement = call_fn ? std::string() : to_string(with);
        std::string r;
        std::size_t start = 0;
        for (;;) {
            auto p = s.find(needle, start);
            if (p == std::string::npos) break;
            r += s.substr(start, p - start);
            if (call_fn) {
                std::vector<Value> cargs{needle, static_cast<double>(p), s};
                r += to_string(call(with, Undefined{}, cargs));
            } else {
                r += replacement;
            }
            check_string(r);
            start = p + needle.size();
            if (key == "replace") break;
            if (needle.empty()) {
                if (start >= len) break;
                r += s[start];
                ++start;
            }
        }
        r += s.substr(std::min(start, len));
        out = r;
    } else if (key == "concat") {
        std::string r = s;
        for (const Value& a : args) r += to_string(a);
        check_string(r);
        out = r;
    } else if (key == "at") {
        double i = to_integer(*this, arg(args, 0));
        if (i < 0) i += static_cast<double>(len);
        out = (i >= 0 && i < static_cast<double>(len)) ? Value{std::string(1, s[static_cast<std::size_t>(i)])} : Value{Undefined{}};
    } else if (key == "toString" || key == "valueOf" || key == "normalize") {
        out = s;
    } else if (key == "localeCompare") {
        int c = s.compare(to_string(arg(args, 0)));
        out = static_cast<double>(c < 0 ? -1 : c > 0 ? 1 : 0);
    } else {
        return false;
    }
    return true;
}

bool Runtime::number_method(double d, const std::string& key, std::vector<Value>& args, Value& out) {
    if (key == "toFixed") {
        double digits = to_integer(*this, arg(args, 0));
        if (digits < 0 || digits > 100) throw_error("RangeError", "toFixed() digits argument must be between 0 and 100");
        if (!std::isfinite(d) || std::fabs(d) >= 1e21) {
            out = number_to_string(d);
        } else {
            std::vector<char> buf(400);
            std::snprintf(buf.data(), buf.size(), "%.*f", static_cast<int>(digits), d);
            std::string r = buf.data();
            if (r.size() > 1 && r[0] == '-' && r.find_first_not_of("-0.") == std::string::npos) r = r.substr(1);
            out = r;
        }
    } else if (key == "toPrecision") {
        if (std::holds_alternative<Undefined>(arg(args, 0)) || !std::isfinite(d)) {
            out = number_to_string(d);
        } else {
            int p = static_cast<int>(to_integer(*this, arg(args, 0)));
            if (p < 1 || p > 100) throw_error("RangeError", "toPrecision() argument must be between 1 and 100");
            std::vector<char> buf(400);
            std::snprintf(buf.data(), buf.size(), "%.*e", p - 1, d);
            std::string sci = buf.data();
            int e = std::stoi(sci.substr(sci.find('e') + 1));
            if (e < -6 || e >= p) {
                std::string mant = sci.substr(0, sci.find('e'));
                out = mant + (e < 0 ? "e-" : "e+") + std::to_string(std::abs(e));
            } else {
                std::snprintf(buf.data(), buf.size(), "%.*f", std::max(0, p - 1 - e), d);
                out = std::string(buf.data());
            }
        }
    } else if (key == "toString") {
        int radix = std::holds_alternative<Undefined>(arg(args, 0)) ? 10 : static_cast<int>(to_integer(*this, arg(args, 0)));
        if (radix < 2 || radix > 36) throw_error("RangeError", "toString() radix must be between 2 and 36");
        out = to_radix(d, radix);
    } else if (key == "toLocaleString") {
        out = number_to_string(d);
    } else if (key == "valueOf") {
        out = d;
    } else {
        return false;
    }
    return true;
}

bool Runtime::object_method(const ObjectRef& o, const std::string& key, std::vector<Value>& args, Value& out) {
    if (key == "hasOwnProperty") {
        std::string k = to_string(arg(args, 0));
        out = k != "__ctor__" && o->find(k) != nullptr;
        return true;
    }
    if (key == "toString") {
        out = to_string(Value{o});
        return true;
    }
    return false;
}

bool Runtime::array_method(const ObjectRef& a, const std::string& key, std::vector<Value>& args, Value& out) {
    auto& items = a->items;
    Value self = a;
    auto callback = [&](std::size_t i) -> const Value& {
        const Value& f = arg(args, i);
        const auto* fo = std::get_if<ObjectRef>(&f);
        if (fo == nullptr || !(*fo)->callable()) throw_error("TypeError", inspect(f) + " is not a function");
        return f;
    };
    auto invoke = [&](const Value& f, const Value& item, std::size_t i) {
        std::vector<Value> cargs{item, static_cast<double>(i), self};
        return call(f, arg(args, 1), cargs);
    };
    if (key == "push") {
        check_array(items.size() + args.size());
        for (Value& v : args) items.push_back(v);
        out = static_cast<double>(items.size());
    } else if (key == "pop") {
        if (items.empty()) {
            out = Undefined{};
        } else {
            out = items.back();
            items.pop_back();
        }
    } else if (key == "shift") {
        if (items.empty()) {
            out = Undefined{};
        } else {
            out = items.front();
            items.erase(items.begin());
        }
    } else if (key == "unshift") {
        check_array(items.size() + args.size());
        items.insert(items.begin(), args.begin(), args.end());
        out = static_cast<double>(items.size());
    } else if (key == "slice") {
        std::size_t b = rel_index(*this, arg(args, 0), items.size(), 0);
        std::size_t e = rel_index(*this, arg(args, 1), items.size(), items.size());
        out = new_array(b < e ? std::vector<Value>(items.begin() + static_cast<std::ptrdiff_t>(b), items.begin() + static_cast<std::ptrdiff_t>(e))
                              : std::vector<Value>{});
    } else if (key == "splice") {
        std::size_t start = rel_index(*this, arg(args, 0), items.size(), 0);
        std::size_t count = items.size() - start;
        if (args.size() >= 2) count = static_cast<std::size_t>(std::clamp(to_integer(*this, args[1]), 0.0, static_cast<double>(count)));
        if (args.empty()) count = 0;
        auto first = items.begin() + static_cast<std::ptrdiff_t>(start);
        std::vector<Value> removed(first, first + static_cast<std::ptrdiff_t>(count));
        items.erase(first, first + static_cast<std::ptrdiff_t>(count));
        if (args.size() > 2) {
            check_array(items.size() + args.size() - 2);
            items.insert(items.begin() + static_cast<std::ptrdiff_t>(start), args.begin() + 2, args.end());
        }
        out = new_array(std::move(removed));
    } else if (key == "concat") {
        std::vector<Value> r = items;
        for (const Value& v : args) {
            if (const auto* o = std::get_if<ObjectRef>(&v); o != nullptr && (*o)->kind == Object::Kind::array)
                r.insert(r.end(), (*o)->items.begin(), (*o)->items.end());
            else
                r.push_back(v);
            check_array(r.size());
        }
        out = new_array(std::move(r));
    } else if (key == "join" || key == "toString") {
        std::string sep = key == "join" && !std::holds_alternative<Undefined>(arg(args, 0)) ? to_string(args[0]) : ",";
        std::string r;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i > 0) r += sep;
            if (!is_nullish(items[i])) r += to_string(items[i]);
            check_string(r);
        }
        out = r;
    } else if (key == "indexOf" || key == "lastIndexOf" || key == "includes") {
        const Value& needle = arg(args, 0);
        double found = -1;
        if (key == "lastIndexOf") {
            for (std::size_t i = items.size(); i-- > 0;)
                if (strict_equals(items[i], needle)) {
                    found = static_cast<double>(i);
                    break;
                }
        } else {
            for (std::size_t i = rel_index(*this, arg(args, 1), items.size(), 0); i < items.size(); ++i) {
                bool eq = strict_equals(items[i], needle);
                if (!eq && key == "includes") {
                    const auto* x = std::get_if<double>(&items[i]);
                    const auto* y = std::get_if<double>(&needle);
                    eq = x != nullptr && y != nullptr && std::isnan(*x) && std::isnan(*y);
                }
                if (eq) {
                    found = static_cast<double>(i);
                    break;
                }
            }
        }
        out = key == "includes" ? Value{found >= 0} : Value{found};
    } else if (key == "find" || key == "findIndex" || key == "findLast" || key == "findLastIndex") {
        const Value& f = callback(0);
        bool last = key == "findLast" || key == "findLastIndex";
        bool want_index = key == "findIndex" || key == "findLastIndex";
        out = want_index ? Value{-1.0} : Value{Undefined{}};
        std::size_t n = items.size();
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t i = last ? n - 1 - k : k;
            Value item = i < items.size() ? items[i] : Value{Undefined{}};
            if (truthy(invoke(f, item, i))) {
                out = want_index ? Value{static_cast<double>(i)} : item;
                break;
            }
        }
    } else if (key == "filter") {
        const Value& f = callback(0);
        std::vector<Value> r;
        for (std::size_t i = 0; i < items.size(); ++i) {
            Value item = items[i];
            if (truthy(invoke(f, item, i))) r.push_back(std::move(item));
        }
        out = new_array(std::move(r));
    } else if (key == "map") {
        const Value& f = callback(0);
        std::vector<Value> r;
        std::size_t n = items.size();
        for (std::size_t i = 0; i < n && i < items.size(); ++i) r.push_back(invoke(f, items[i], i));
        out = new_array(std::move(r));
    } else if (key == "forEach") {
        const Value& f = callback(0);
        std::size_t n = items.size();
        for (std::size_t i = 0; i < n && i < items.size(); ++i) invoke(f, Value{items[i]}, i);
        out = Undefined{};
    } else if (key == "some" || key == "every") {
        const Value& f = callback(0);
        bool some = key == "some";
        out = !some;
        for (std::size_t i = 0; i < items.size(); ++i) {
            bool t = truthy(invoke(f, Value{items[i]}, i));
            if (some && t) {
                out = true;
                break;
            }
            if (!some && !t) {
                out = false;
                break;
            }
        }
    } else if (key == "reduce" || key == "reduceRight") {
        const Value& f = callback(0);
        bool right = key == "reduceRight";
        std::size_t n = items.size();
        std::size_t k = 0;
        Value acc;
        if (args.size() >= 2) {
            acc = args[1];
        } else {
            if (n == 0) throw_error("TypeError", "Reduce of empty array with no initial value");
            acc = items[right ? n - 1 : 0];
            k = 1;
        }
        for (; k < n && k < items.size(); ++k) {
            std::size_t i = right ? n - 1 - k : k;
            std::vector<Value> cargs{acc, items[i], static_cast<double>(i), self};
            acc = call(f, Undefined{}, cargs);
        }
        out = acc;
    } else if (key == "reverse") {
        std::reverse(items.begin(), items.end());
        out = a;
    } else if (key == "sort") {
        const Value& cmp = arg(args, 0);
        bool has_cmp = !std::holds_alternative<Undefined>(cmp);
        if (has_cmp) callback(0);
        std::vector<Value> defined;
        std::size_t undefined_count = 0;
        for (Value& v : items) {
            if (std::holds_alternative<Undefined>(v)) ++undefined_count;
            else defined.push_back(v);
        }
        std::stable_sort(defined.begin(), defined.end(), [&](const Value& x, const Value& y) {
            tick();
            if (has_cmp) {
                std::vector<Value> cargs{x, y};
                double r = to_number(call(cmp, Undefined{}, cargs));
                return r < 0;
            }
            return to_string(x) < to_string(y);
        });
        defined.resize(defined.size() + undefined_count, Undefined{});
        items = std::move(defined);
        out = a;
    } else if (key == "flat" || key == "flatMap") {
        double depth = key == "flatMap" ? 1 : std::holds_alternative<Undefined>(arg(args, 0)) ? 1 : to_integer(*this, args[0]);
        std::vector<Value> source = items;
        if (key == "flatMap") {
            const Value& f = callback(0);
            for (std::size_t i = 0; i < source.size(); ++i) source[i] = invoke(f, source[i], i);
        }
        std::vector<Value> r;
        std::function<void(const std::vector<Value>&, double)> flatten = [&](const std::vector<Value>& src, double d) {
            for (const Value& v : src) {
                const auto* o = std::get_if<ObjectRef>(&v);
                if (d > 0 && o != nullptr && (*o)->kind == Object::Kind::array) flatten((*o)->items, d - 1);
                else r.push_back(v);
                check_array(r.size());
            }
        };
        flatten(source, depth);
        out = new_array(std::move(r));
    } else if (key == "fill") {
        std::size_t b = rel_index(*this, arg(args, 1), items.size(), 0);
        std::size_t e = rel_index(*this, arg(args, 2), items.size(), items.size());
        for (std::size_t i = b; i < e; ++i) items[i] = arg(args, 0);
        out = a;
    } else if (key == "at") {
        double i = to_integer(*this, arg(args, 0));
        if (i < 0) i += static_cast<double>(items.size());
        out = (i >= 0 && i < static_cast<double>(items.size())) ? items[static_cast<std::size_t>(i)] : Value{Undefined{}};
    } else if (key == "keys" || key == "values" || key == "entries") {
        std::vector<Value> r;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (key == "keys") r.emplace_back(static_cast<double>(i));
            else if (key == "values") r.push_back(items[i]);
            else r.emplace_back(new_array({static_cast<double>(i), items[i]}));
        }
        out = new_array(std::move(r));
    } else {
        return false;
    }
    return true;
}

void Runtime::install_globals() {
    auto def = [this](const std::string& name, Value v) { global_->vars[name] = Binding{std::move(v), false, true}; };
    auto method = [this](const ObjectRef& obj, const std::string& name, NativeFn fn) { obj->set(name, new_native(name, std::move(fn))); };

    global_->vars["undefined"] = Binding{Undefined{}, true, true};
    global_->vars["NaN"] = Binding{std::nan(""), true, true};
    global_->vars["Infinity"] = Binding{INFINITY, true, true};

    // console
    auto console = new_object();
    auto printer = [](std::string prefix) {
        return [prefix](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
            std::string line = prefix;
            for (std::size_t i = 0; i < args.size(); ++i) {
                if (i > 0) line += ' ';
                line += rt.inspect(args[i]);
            }
            rt.emit_console(line);
            return Undefined{};
        };
    };
    method(console, "log", printer(""));
    method(console, "info", printer(""));
    method(console, "debug", printer(""));
    method(console, "warn", printer("[warn] "));
    method(console, "error", printer("[error] "));
    def("console", console);

    // Math
    auto math = new_object();
    math->set("PI", M_PI);
    math->set("E", M_E);
    math->set("LN2", M_LN2);
    math->set("LN10", M_LN10);
    math->set("LOG2E", M_LOG2E);
    math->set("LOG10E", M_LOG10E);
    math->set("SQRT2", M_SQRT2);
    math->set("SQRT1_2", M_SQRT1_2);
    auto unary = [&](const std::string& name, double (*f)(double)) {
        method(math, name, [f](Runtime& rt, const Value&, std::vector<Value>& args) -> Value { return f(rt.to_number(arg(args, 0))); });
    };
    unary("abs", [](double x) { return std::fabs(x); });
    unary("floor", [](double x) { return std::floor(x); });
    unary("ceil", [](double x) { return std::ceil(x); });
    unary("round", [](double x) { return std::isfinite(x) ? std::floor(x + 0.5) : x; });
    unary("trunc", [](double x) { return std::trunc(x); });
    unary("sign", [](double x) { return std::isnan(x) ? x : x > 0 ? 1.0 : x < 0 ? -1.0 : x; });
    unary("sqrt", [](double x) { return std::sqrt(x); });
    unary("cbrt", [](double x) { return std::cbrt(x); });
    unary("log", [](double x) { return std::log(x); });
    unary("log2", [](double x) { return std::log2(x); });
    unary("log10", [](double x) { return std::log10(x); });
    unary("exp", [](double x) { return std::exp(x); });
    unary("sin", [](double x) { return std::sin(x); });
    unary("cos", [](double x) { return std::cos(x); });
    unary("tan", [](double x) { return std::tan(x); });
    unary("asin", [](double x) { return std::asin(x); });
    unary("acos", [](double x) { return std::acos(x); });
    unary("atan", [](double x) { return std::atan(x); });
    method(math, "atan2", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return std::atan2(rt.to_number(arg(args, 0)), rt.to_number(arg(args, 1)));
    });
    method(math, "pow", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return std::pow(rt.to_number(arg(args, 0)), rt.to_number(arg(args, 1)));
    });
    method(math, "hypot", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        double s = 0;
        for (const Value& v : args) {
            double d = rt.to_number(v);
            s += d * d;
        }
        return std::sqrt(s);
    });
    auto extreme = [](bool want_max) {
        return [want_max](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
            double r = want_max ? -INFINITY : INFINITY;
            for (const Value& v : args) {
                double d = rt.to_number(v);
                if (std::isnan(d)) return d;
                r = want_max ? std::max(r, d) : std::min(r, d);
            }
            return r;
        };
    };
    method(math, "max", extreme(true));
    method(math, "min", extreme(false));
    def("Math", math);

    // JSON
    auto json = new_object();
    method(json, "stringify", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        std::string indent;
        const Value& space = arg(args, 2);
        if (const auto* n = std::get_if<double>(&space)) indent = std::string(static_cast<std::size_t>(std::clamp(*n, 0.0, 10.0)), ' ');
        else if (const auto* s = std::get_if<std::string>(&space)) indent = s->substr(0, 10);
        bool present = false;
        std::string r = rt.json_stringify(arg(args, 0), indent, "", present);
        if (!present) return Undefined{};
        return r;
    });
    method(json, "parse", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return rt.json_parse(rt.to_string(arg(args, 0)));
    });
    def("JSON", json);

    // Number
    auto number = new_native("Number", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return args.empty() ? 0.0 : rt.to_number(args[0]);
    }, true);
    method(number, "isInteger", [](Runtime&, const Value&, std::vector<Value>& args) -> Value {
        const auto* d = std::get_if<double>(&arg(args, 0));
        return d != nullptr && std::isfinite(*d) && std::trunc(*d) == *d;
    });
    method(number, "isSafeInteger", [](Runtime&, const Value&, std::vector<Value>& args) -> Value {
        const auto* d = std::get_if<double>(&arg(args, 0));
        return d != nullptr && std::isfinite(*d) && std::trunc(*d) == *d && std::fabs(*d) <= 9007199254740991.0;
    });
    method(number, "isFinite", [](Runtime&, const Value&, std::vector<Value>& args) -> Value {
        const auto* d = std::get_if<double>(&arg(args, 0));
        return d != nullptr && std::isfinite(*d);
    });
    method(number, "isNaN", [](Runtime&, const Value&, std::vector<Value>& args) -> Value {
        const auto* d = std::get_if<double>(&arg(args, 0));
        return d != nullptr && std::isnan(*d);
    });
    NativeFn parse_int_fn = [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        int radix = std::holds_alternative<Undefined>(arg(args, 1)) ? 0 : static_cast<int>(to_integer(rt, arg(args, 1)));
        return parse_int(rt.to_string(arg(args, 0)), radix);
    };
    NativeFn parse_float_fn = [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return parse_float(rt.to_string(arg(args, 0)));
    };
    method(number, "parseInt", parse_int_fn);
    method(number, "parseFloat", parse_float_fn);
    number->set("MAX_SAFE_INTEGER", 9007199254740991.0);
    number->set("MIN_SAFE_INTEGER", -9007199254740991.0);
    number->set("EPSILON", 2.220446049250313e-16);
    number->set("MAX_VALUE", 1.7976931348623157e308);
    number->set("MIN_VALUE", 5e-324);
    number->set("POSITIVE_INFINITY", INFINITY);
    number->set("NEGATIVE_INFINITY", -INFINITY);
    number->set("NaN", std::nan(""));
    def("Number", number);
    def("parseInt", new_native("parseInt", parse_int_fn));
    def("parseFloat", new_native("parseFloat", parse_float_fn));
    def("isNaN", new_native("isNaN", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return std::isnan(rt.to_number(arg(args, 0)));
    }));
    def("isFinite", new_native("isFinite", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return std::isfinite(rt.to_number(arg(args, 0)));
    }));

    // String / Boolean
    auto string = new_native("String", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return args.empty() ? std::string() : rt.to_string(args[0]);
    }, true);
    method(string, "fromCharCode", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        std::string r;
        for (const Value& v : args) {
            auto c = static_cast<std::uint32_t>(rt.to_number(v));
            if (c < 0x80) {
                r += static_cast<char>(c);
            } else if (c < 0x800) {
                r += static_cast<char>(0xC0 | (c >> 6));
                r += static_cast<char>(0x80 | (c & 0x3F));
            } else {
                r += static_cast<char>(0xE0 | ((c >> 12) & 0x0F));
                r += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
                r += static_cast<char>(0x80 | (c & 0x3F));
            }
        }
        return r;
    });
    def("String", string);
    def("Boolean", new_native("Boolean", [](Runtime&, const Value&, std::vector<Value>& args) -> Value {
        return truthy(arg(args, 0));
    }, true));

    // Array
    auto array = new_native("Array", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        if (args.size() == 1 && std::holds_alternative<double>(args[0])) {
            double n = std::get<double>(args[0]);
            if (n < 0 || n != std::trunc(n)) rt.throw_error("RangeError", "Invalid array length");
            rt.check_array(static_cast<std::size_t>(n));
            return rt.new_array(std::vector<Value>(static_cast<std::size_t>(n), Undefined{}));
        }
        return rt.new_array(args);
    }, true);
    method(array, "isArray", [](Runtime&, const Value&, std::vector<Value>& args) -> Value {
        const auto* o = std::get_if<ObjectRef>(&arg(args, 0));
        return o != nullptr && (*o)->kind == Object::Kind::array;
    });
    method(array, "of", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value { return rt.new_array(args); });
    method(array, "from", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        const Value& src = arg(args, 0);
        std::vector<Value> items;
        if (const auto* o = std::get_if<ObjectRef>(&src); o != nullptr && (*o)->kind == Object::Kind::plain) {
            // array-like: {length: n}
            const Value* len = (*o)->find("length");
            double n = len != nullptr ? rt.to_number(*len) : 0;
            if (std::isnan(n) || n < 0) n = 0;
            rt.check_array(static_cast<std::size_t>(n));
            for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
                const Value* v = (*o)->find(std::to_string(i));
                items.push_back(v != nullptr ? *v : Value{Undefined{}});
            }
        } else {
            items = rt.iterate(src, {});
        }
        const Value& f = arg(args, 1);
        if (!std::holds_alternative<Undefined>(f)) {
            for (std::size_t i = 0; i < items.size(); ++i) {
                std::vector<Value> cargs{items[i], static_cast<double>(i)};
                items[i] = rt.call(f, Undefined{}, cargs);
            }
        }
        return rt.new_array(std::move(items));
    });
    def("Array", array);

    // Object
    auto object = new_native("Object", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        if (!args.empty() && std::holds_alternative<ObjectRef>(args[0])) return args[0];
        return rt.new_object();
    }, true);
    // Enumerates own keys the way Object.keys would.
    auto own_keys = [](Runtime& rt, const Value& v) -> std::vector<std::string> {
        std::vector<std::string> keys;
        if (is_nullish(v)) rt.throw_error("TypeError", "Cannot convert undefined or null to object");
        if (const auto* s = std::get_if<std::string>(&v)) {
            for (std::size_t i = 0; i < s->size(); ++i) keys.push_back(std::to_string(i));
        }
        const auto* o = std::get_if<ObjectRef>(&v);
        if (o == nullptr) return keys;
        switch ((*o)->kind) {
            case Object::Kind::array:
                for (std::size_t i = 0; i < (*o)->items.size(); ++i) keys.push_back(std::to_string(i));
                break;
            case Object::Kind::host: keys = rt.bridge().members((*o)->host_path); break;
            case Object::Kind::plain:
                for (const auto& [k, val] : (*o)->props)
                    if (k != "__ctor__") keys.push_back(k);
                break;
            default: break;
        }
        return keys;
    };
    method(object, "keys", [own_keys](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        std::vector<Value> r;
        for (auto& k : own_keys(rt, arg(args, 0))) r.emplace_back(k);
        return rt.new_array(std::move(r));
    });
    method(object, "values", [own_keys](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        std::vector<Value> r;
        for (auto& k : own_keys(rt, arg(args, 0))) r.push_back(rt.get_member(arg(args, 0), k, {}, nullptr));
        return rt.new_array(std::move(r));
    });
    method(object, "entries", [own_keys](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        std::vector<Value> r;
        for (auto& k : own_keys(rt, arg(args, 0))) r.emplace_back(rt.new_array({k, rt.get_member(arg(args, 0), k, {}, nullptr)}));
        return rt.new_array(std::move(r));
    });
    method(object, "assign", [own_keys](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        const Value& target = arg(args, 0);
        for (std::size_t i = 1; i < args.size(); ++i) {
            if (is_nullish(args[i])) continue;
            for (auto& k : own_keys(rt, args[i])) rt.set_member(target, k, rt.get_member(args[i], k, {}, nullptr), {}, nullptr);
        }
        return target;
    });
    method(object, "fromEntries", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        auto obj = rt.new_object();
        for (const Value& e : rt.iterate(arg(args, 0), {})) {
            std::vector<Value> pair = rt.iterate(e, {});
            obj->set(rt.to_string(arg(pair, 0)), arg(pair, 1));
        }
        return obj;
    });
    NativeFn identity = [](Runtime&, const Value&, std::vector<Value>& args) -> Value { return arg(args, 0); };
    method(object, "freeze", identity);
    method(object, "seal", identity);
    method(object, "create", [](Runtime& rt, const Value&, std::vector<Value>&) -> Value { return rt.new_object(); });
    def("Object", object);

    // Errors
    for (const char* name : {"Error", "TypeError", "RangeError", "ReferenceError", "SyntaxError", "EvalError", "URIError"}) {
        std::string n = name;
        def(n, new_native(n, [n](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
            std::string msg = std::holds_alternative<Undefined>(arg(args, 0)) ? std::string() : rt.to_string(args[0]);
            return rt.make_error(n, msg);
        }, true));
    }

    // Promise: everything settles synchronously because no asynchronous host
    // facility is reachable from action code.
    auto promise = new_native("Promise", [](Runtime& rt, const Value& self, std::vector<Value>& args) -> Value {
        if (!std::holds_alternative<std::string>(self)) rt.throw_error("TypeError", "Promise constructor cannot be invoked without 'new'");
        const Value& executor = arg(args, 0);
        const auto* ex = std::get_if<ObjectRef>(&executor);
        if (ex == nullptr || !(*ex)->callable()) rt.throw_error("TypeError", "Promise resolver is not a function");
        ObjectRef p = rt.new_promise(Object::PromiseState::pending, Undefined{});
        auto settle = [p](Runtime& r, Object::PromiseState state, Value v) {
            if (p->promise_state != Object::PromiseState::pending) return;
            if (const auto* inner = std::get_if<ObjectRef>(&v); inner != nullptr && (*inner)->kind == Object::Kind::promise &&
                                                                state == Object::PromiseState::fulfilled) {
                (*inner)->handled = true;
                state = (*inner)->promise_state;
                v = (*inner)->settled;
                if (state == Object::PromiseState::pending) return;
            }
            p->promise_state = state;
            p->settled = std::move(v);
            if (state == Object::PromiseState::rejected) r.rejected_.push_back(p);
        };
        std::vector<Value> ex_args{
            rt.new_native("resolve", [settle](Runtime& r, const Value&, std::vector<Value>& a) -> Value {
                settle(r, Object::PromiseState::fulfilled, arg(a, 0));
                return Undefined{};
            }),
            rt.new_native("reject", [settle](Runtime& r, const Value&, std::vector<Value>& a) -> Value {
                settle(r, Object::PromiseState::rejected, arg(a, 0));
                return Undefined{};
            })};
        try {
            rt.call(executor, Undefined{}, ex_args);
        } catch (JsThrow& t) {
            settle(rt, Object::PromiseState::rejected, t.value);
        }
        return p;
    }, true);
    method(promise, "resolve", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        const Value& v = arg(args, 0);
        if (const auto* o = std::get_if<ObjectRef>(&v); o != nullptr && (*o)->kind == Object::Kind::promise) return v;
        return rt.new_promise(Object::PromiseState::fulfilled, v);
    });
    method(promise, "reject", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        return rt.new_promise(Object::PromiseState::rejected, arg(args, 0));
    });
    method(promise, "all", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        std::vector<Value> results;
        for (const Value& v : rt.iterate(arg(args, 0), {})) {
            const auto* o = std::get_if<ObjectRef>(&v);
            if (o == nullptr || (*o)->kind != Object::Kind::promise) {
                results.push_back(v);
                continue;
            }
            (*o)->handled = true;
            if ((*o)->promise_state == Object::PromiseState::rejected) return rt.new_promise(Object::PromiseState::rejected, (*o)->settled);
            if ((*o)->promise_state == Object::PromiseState::pending) return rt.new_promise(Object::PromiseState::pending, Undefined{});
            results.push_back((*o)->settled);
        }
        return rt.new_promise(Object::PromiseState::fulfilled, rt.new_array(std::move(results)));
    });
    method(promise, "allSettled", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        std::vector<Value> results;
        for (const Value& v : rt.iterate(arg(args, 0), {})) {
            auto entry = rt.new_object();
            const auto* o = std::get_if<ObjectRef>(&v);
            if (o != nullptr && (*o)->kind == Object::Kind::promise && (*o)->promise_state == Object::PromiseState::rejected) {
                (*o)->handled = true;
                entry->set("status", std::string("rejected"));
                entry->set("reason", (*o)->settled);
            } else {
                entry->set("status", std::string("fulfilled"));
                entry->set("value", o != nullptr && (*o)->kind == Object::Kind::promise ? (*o)->settled : v);
            }
            results.emplace_back(entry);
        }
        return rt.new_promise(Object::PromiseState::fulfilled, rt.new_array(std::move(results)));
    });
    method(promise, "race", [](Runtime& rt, const Value&, std::vector<Value>& args) -> Value {
        for (const Value& v : rt.iterate(arg(args, 0), {})) {
            const auto* o = std::get_if<ObjectRef>(&v);
            if (o == nullptr || (*o)->kind != Object::Kind::promise) return rt.new_promise(Object::PromiseState::fulfilled, v);
            (*o)->handled = true;
            if ((*o)->promise_state != Object::PromiseState::pending) return rt.new_promise((*o)->promise_state, (*o)->settled);
        }
        return rt.new_promise(Object::PromiseState::pending, Undefined{});
    });
    def("Promise", promise);

    auto root = new_object(Object::Kind::host);
    root->host_path = bridge_.root_name();
    global_->vars[bridge_.root_name()] = Binding{root, true, true};
}

}  // namespace jitagent::script::detail
