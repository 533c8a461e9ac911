#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace amoc {

// Minimal strict TOML subset: [table] / [table.sub] headers, dotted bare
// keys, strings with basic escapes, integers, floats, booleans and flat
// scalar arrays. Everything a config file needs and nothing more; malformed
// input is a hard ConfigError with a line number.
struct TomlValue {
    enum class Kind { string, integer, floating, boolean, array };
    Kind kind = Kind::string;
    std::string str;
    int64_t integer = 0;
    double floating = 0.0;
    bool boolean = false;
    std::vector<TomlValue> items;

    static TomlValue of_string(std::string s);
    static TomlValue of_int(int64_t v);
    static TomlValue of_double(double v);
    static TomlValue of_bool(bool v);

    // Typed accessors; mismatches throw ConfigError mentioning `key`.
    std::string as_string(const std::string& key) const;
    int64_t as_int(const std::string& key) const;
    double as_double(const std::string& key) const;  // accepts integer too
    bool as_bool(const std::string& key) const;
    std::vector<double> as_double_array(const std::string& key) const;

    // Value serialized back to TOML text (strings quoted, floats with
    // round-trip precision).
    std::string to_toml() const;
};

// Flat document: fully-dotted key -> value, e.g. "train.attack.steps".
struct TomlDoc {
    std::map<std::string, TomlValue> values;

    bool has(const std::string& key) const { return values.count(key) != 0; }
    const TomlValue* find(const std::string& key) const;
};

TomlDoc parse_toml(const std::string& text);
TomlDoc parse_toml_file(const std::string& path);

// One scalar or array literal (the right-hand side of a --set override).
TomlValue parse_toml_scalar(const std::string& text);

}  // namespace amoc
