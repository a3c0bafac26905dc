#include "corgi/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace corgi {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str());
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
        cfg.set(key, value);
    }
    return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return true;
    return false;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void KeyValueConfig::set(const std::string& key, double value) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(key, std::string(buf));
}

void KeyValueConfig::set(const std::string& key, std::int64_t value) {
    set(key, std::to_string(value));
}

void KeyValueConfig::set(const std::string& key, bool value) {
    set(key, std::string(value ? "true" : "false"));
}

void KeyValueConfig::set_list(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ",";
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
        s += buf;
    }
    set(key, s);
}

void KeyValueConfig::set_list_int(const std::string& key, const std::vector<int>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(values[i]);
    }
    set(key, s);
}

const std::string& KeyValueConfig::get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return v;
    throw ValidationError("config: missing key '" + key + "'");
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
    const std::string& s = get(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' is not a number: '" + s + "'");
    }
}

double KeyValueConfig::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
    const double v = get_double(key);
    const std::int64_t i = static_cast<std::int64_t>(v);
    if (static_cast<double>(i) != v)
        throw ValidationError("config: key '" + key + "' is not an integer");
    return i;
}

std::int64_t KeyValueConfig::get_int_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ValidationError("config: key '" + key + "' is not a boolean: '" + s + "'");
}

bool KeyValueConfig::get_bool_or(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::vector<double> KeyValueConfig::get_list(const std::string& key) const {
    const std::string& s = get(key);
    std::vector<double> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ValidationError("config: key '" + key + "' has non-numeric element '" + item +
                                  "'");
        }
    }
    return out;
}

std::vector<int> KeyValueConfig::get_list_int(const std::string& key) const {
    std::vector<int> out;
    for (double v : get_list(key)) {
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw ValidationError("config: key '" + key + "' has non-integer element");
        out.push_back(i);
    }
    return out;
}

std::string KeyValueConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

void KeyValueConfig::write_file(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open config '" + path + "' for writing");
    os << to_text();
    if (!os) throw Error("write failed for '" + path + "'");
}

}  // namespace corgi
