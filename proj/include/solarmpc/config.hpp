#pragma once

// Flat `key = value` text files: one entry per line, `#` starts a comment,
// keys are [a-z0-9_.]+ and may appear once. Typed getters throw ConfigError
// naming the key and its line.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "solarmpc/errors.hpp"

namespace solarmpc {

class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& in, const std::string& source = "<input>");
    static KeyValueFile load(const std::filesystem::path& path);

    const std::string& source() const { return source_; }
    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    int line_of(const std::string& key) const;
    const std::string& raw(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated numbers.
    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
    Eigen::Vector2d get_vec2(const std::string& key, const Eigen::Vector2d& fallback) const;

    /// Keys present in the file that no getter has asked for.
    std::vector<std::string> unread_keys() const;
    /// Throws ConfigError listing unread keys; catches typos.
    void reject_unread() const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    [[noreturn]] void fail(const std::string& key, const std::string& why) const;

    std::string source_;
    std::map<std::string, Entry> entries_;
    mutable std::set<std::string> read_;
};

} // namespace solarmpc
