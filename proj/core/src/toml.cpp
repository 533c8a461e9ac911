#include "amoc/toml.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "amoc/common.hpp"

namespace amoc {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

bool is_bare_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

struct Cursor {
    const std::string& s;
    size_t pos = 0;
    int line;

    bool done() const { return pos >= s.size(); }
    char peek() const { return s[pos]; }
    void skip_ws() {
        while (!done() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }
};

std::string parse_bare_key(Cursor& c) {
    size_t start = c.pos;
    while (!c.done() && is_bare_char(c.peek())) ++c.pos;
    if (c.pos == start) fail(c.line, "expected a key");
    return c.s.substr(start, c.pos - start);
}

// Dotted sequence of bare segments: a.b.c
std::string parse_key_path(Cursor& c) {
    std::string key = parse_bare_key(c);
    while (!c.done()) {
        c.skip_ws();
        if (c.done() || c.peek() != '.') break;
        ++c.pos;  // '.'
        c.skip_ws();
        key += '.';
        key += parse_bare_key(c);
    }
    return key;
}

std::string parse_basic_string(Cursor& c) {
    ++c.pos;  // opening quote
    std::string out;
    while (true) {
        if (c.done()) fail(c.line, "unterminated string");
        char ch = c.s[c.pos++];
        if (ch == '"') return out;
        if (ch == '\\') {
            if (c.done()) fail(c.line, "unterminated escape");
            char e = c.s[c.pos++];
            switch (e) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                default: fail(c.line, std::string("unsupported escape \\") + e);
            }
        } else {
            out += ch;
        }
    }
}

TomlValue parse_value(Cursor& c);

TomlValue parse_array(Cursor& c) {
    ++c.pos;  // '['
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    c.skip_ws();
    if (!c.done() && c.peek() == ']') {
        ++c.pos;
        return v;
    }
    while (true) {
        c.skip_ws();
        v.items.push_back(parse_value(c));
        c.skip_ws();
        if (c.done()) fail(c.line, "unterminated array");
        char ch = c.s[c.pos++];
        if (ch == ']') return v;
        if (ch != ',') fail(c.line, "expected ',' or ']' in array");
    }
}

TomlValue parse_number_or_bool(Cursor& c) {
    size_t start = c.pos;
    while (!c.done() && !std::isspace(static_cast<unsigned char>(c.peek())) && c.peek() != ',' &&
           c.peek() != ']' && c.peek() != '#')
        ++c.pos;
    std::string tok = c.s.substr(start, c.pos - start);
    if (tok.empty()) fail(c.line, "expected a value");
    if (tok == "true") return TomlValue::of_bool(true);
    if (tok == "false") return TomlValue::of_bool(false);

    bool int_like = true;
    for (size_t i = 0; i < tok.size(); ++i) {
        char ch = tok[i];
        if (i == 0 && (ch == '+' || ch == '-')) continue;
        if (!std::isdigit(static_cast<unsigned char>(ch))) int_like = false;
    }
    try {
        size_t used = 0;
        if (int_like) {
            int64_t v = std::stoll(tok, &used);
            if (used == tok.size()) return TomlValue::of_int(v);
        }
        double d = std::stod(tok, &used);
        if (used != tok.size()) fail(c.line, "bad number '" + tok + "'");
        return TomlValue::of_double(d);
    } catch (const std::exception&) {
        fail(c.line, "bad value '" + tok + "'");
    }
}

TomlValue parse_value(Cursor& c) {
    if (c.done()) fail(c.line, "expected a value");
    char ch = c.peek();
    if (ch == '"') {
        TomlValue v = TomlValue::of_string(parse_basic_string(c));
        return v;
    }
    if (ch == '[') return parse_array(c);
    return parse_number_or_bool(c);
}

void expect_line_end(Cursor& c) {
    c.skip_ws();
    if (!c.done() && c.peek() != '#') fail(c.line, "unexpected trailing text");
}

}  // namespace

TomlValue TomlValue::of_string(std::string s) {
    TomlValue v;
    v.kind = Kind::string;
    v.str = std::move(s);
    return v;
}

TomlValue TomlValue::of_int(int64_t x) {
    TomlValue v;
    v.kind = Kind::integer;
    v.integer = x;
    return v;
}

TomlValue TomlValue::of_double(double x) {
    TomlValue v;
    v.kind = Kind::floating;
    v.floating = x;
    return v;
}

TomlValue TomlValue::of_bool(bool x) {
    TomlValue v;
    v.kind = Kind::boolean;
    v.boolean = x;
    return v;
}

std::string TomlValue::as_string(const std::string& key) const {
    if (kind != Kind::string) throw ConfigError("config key '" + key + "' must be a string");
    return str;
}

int64_t TomlValue::as_int(const std::string& key) const {
    if (kind != Kind::integer) throw ConfigError("config key '" + key + "' must be an integer");
    return integer;
}

double TomlValue::as_double(const std::string& key) const {
    if (kind == Kind::floating) return floating;
    if (kind == Kind::integer) return static_cast<double>(integer);
    throw ConfigError("config key '" + key + "' must be a number");
}

bool TomlValue::as_bool(const std::string& key) const {
    if (kind != Kind::boolean) throw ConfigError("config key '" + key + "' must be a boolean");
    return boolean;
}

std::vector<double> TomlValue::as_double_array(const std::string& key) const {
    if (kind != Kind::array) throw ConfigError("config key '" + key + "' must be an array");
    std::vector<double> out;
    out.reserve(items.size());
    for (const TomlValue& v : items) out.push_back(v.as_double(key));
    return out;
}

std::string TomlValue::to_toml() const {
    switch (kind) {
        case Kind::string: {
            std::string out = "\"";
            for (char c : str) {
                switch (c) {
                    case '"': out += "\\\""; break;
                    case '\\': out += "\\\\"; break;
                    case '\n': out += "\\n"; break;
                    case '\t': out += "\\t"; break;
                    case '\r': out += "\\r"; break;
                    default: out += c;
                }
            }
            return out + "\"";
        }
        case Kind::integer: return std::to_string(integer);
        case Kind::floating: {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", floating);
            std::string s(buf);
            // keep floats recognizably floats on re-parse
            if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos &&
                s.find("nan") == std::string::npos)
                s += ".0";
            return s;
        }
        case Kind::boolean: return boolean ? "true" : "false";
        case Kind::array: {
            std::string out = "[";
            for (size_t i = 0; i < items.size(); ++i) {
                if (i) out += ", ";
                out += items[i].to_toml();
            }
            return out + "]";
        }
    }
    throw InternalError("unreachable toml kind");
}

const TomlValue* TomlDoc::find(const std::string& key) const {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
}

TomlDoc parse_toml(const std::string& text) {
    TomlDoc doc;
    std::string prefix;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        Cursor c{raw, 0, line_no};
        c.skip_ws();
        if (c.done() || c.peek() == '#') continue;

        if (c.peek() == '[') {
            ++c.pos;
            c.skip_ws();
            prefix = parse_key_path(c);
            c.skip_ws();
            if (c.done() || c.peek() != ']') fail(line_no, "expected ']'");
            ++c.pos;
            expect_line_end(c);
            continue;
        }

        std::string key = parse_key_path(c);
        c.skip_ws();
        if (c.done() || c.peek() != '=') fail(line_no, "expected '=' after key");
        ++c.pos;
        c.skip_ws();
        TomlValue value = parse_value(c);
        expect_line_end(c);

        std::string full = prefix.empty() ? key : prefix + "." + key;
        if (doc.values.count(full)) fail(line_no, "duplicate key '" + full + "'");
        doc.values.emplace(std::move(full), std::move(value));
    }
    return doc;
}

TomlDoc parse_toml_file(const std::string& path) {
    std::ifstream f(path);
    if (!f.good()) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_toml(text);
}

TomlValue parse_toml_scalar(const std::string& text) {
    Cursor c{text, 0, 1};
    c.skip_ws();
    TomlValue v = parse_value(c);
    c.skip_ws();
    if (!c.done()) throw ConfigError("trailing text after value: '" + text + "'");
    return v;
}

}  // namespace amoc
