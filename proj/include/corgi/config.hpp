#pragma once

// Flat key = value configuration grammar shared by train configs and model
// manifests. One binding per line, '#' comments, scalars or comma lists;
// insertion order is preserved so written files are reproducible.

#include <cstdint>
#include <string>
#include <vector>

#include "corgi/common.hpp"

namespace corgi {

class KeyValueConfig {
  public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_text(const std::string& text);

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, bool value);
    void set_list(const std::string& key, const std::vector<double>& values);
    void set_list_int(const std::string& key, const std::vector<int>& values);

    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool_or(const std::string& key, bool fallback) const;
    std::vector<double> get_list(const std::string& key) const;
    std::vector<int> get_list_int(const std::string& key) const;

    std::string to_text() const;
    void write_file(const std::string& path) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace corgi
