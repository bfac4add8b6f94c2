#include "solarmpc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace solarmpc {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k)
{
    if (k.empty())
        return false;
    for (char c : k)
        if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.'))
            return false;
    return true;
}

bool parse_number(const std::string& s, double& out)
{
    const std::string t = trim(s);
    if (t.empty())
        return false;
    // from_chars rejects a leading '+', strtod accepts hex and "inf"; keep to plain decimals.
    const char* b = t.data();
    const char* e = t.data() + t.size();
    const auto r = std::from_chars(b, e, out);
    return r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

} // namespace

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& source)
{
    KeyValueFile f;
    f.source_ = source;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(source + ": expected `key = value`", n);
        const std::string key = trim(line.substr(0, eq));
        if (!valid_key(key))
            throw ParseError(source + ": invalid key '" + key + "'", n);
        if (f.entries_.count(key))
            throw ParseError(source + ": duplicate key '" + key + "'", n);
        f.entries_[key] = {trim(line.substr(eq + 1)), n};
    }
    return f;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    return parse(in, path.string());
}

int KeyValueFile::line_of(const std::string& key) const
{
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
}

const std::string& KeyValueFile::raw(const std::string& key) const
{
    const auto it = entries_.find(key);
    if (it == entries_.end())
        throw ConfigError(source_ + ": missing key '" + key + "'");
    read_.insert(key);
    return it->second.value;
}

void KeyValueFile::fail(const std::string& key, const std::string& why) const
{
    throw ConfigError(source_ + ":" + std::to_string(line_of(key)) + ": " + key + ": " + why);
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const
{
    return has(key) ? raw(key) : fallback;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const
{
    if (!has(key))
        return fallback;
    double v = 0;
    if (!parse_number(raw(key), v))
        fail(key, "expected a finite number, got '" + raw(key) + "'");
    return v;
}

int KeyValueFile::get_int(const std::string& key, int fallback) const
{
    if (!has(key))
        return fallback;
    const std::string& s = raw(key);
    int v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        fail(key, "expected an integer, got '" + s + "'");
    return v;
}

std::uint64_t KeyValueFile::get_uint64(const std::string& key, std::uint64_t fallback) const
{
    if (!has(key))
        return fallback;
    const std::string& s = raw(key);
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        fail(key, "expected a non-negative integer, got '" + s + "'");
    return v;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const
{
    if (!has(key))
        return fallback;
    const std::string& s = raw(key);
    if (s == "true" || s == "1")
        return true;
    if (s == "false" || s == "0")
        return false;
    fail(key, "expected true/false, got '" + s + "'");
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key, std::vector<double> fallback) const
{
    if (!has(key))
        return fallback;
    std::vector<double> out;
    const std::string& s = raw(key);
    if (trim(s).empty())
        return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0;
        if (!parse_number(item, v))
            fail(key, "expected comma-separated numbers, got '" + s + "'");
        out.push_back(v);
    }
    return out;
}

Eigen::Vector2d KeyValueFile::get_vec2(const std::string& key, const Eigen::Vector2d& fallback) const
{
    if (!has(key))
        return fallback;
    const std::vector<double> v = get_doubles(key, {});
    if (v.size() != 2)
        fail(key, "expected two comma-separated numbers");
    return {v[0], v[1]};
}

std::vector<std::string> KeyValueFile::unread_keys() const
{
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_)
        if (!read_.count(k))
            out.push_back(k);
    return out;
}

void KeyValueFile::reject_unread() const
{
    const auto keys = unread_keys();
    if (keys.empty())
        return;
    std::string msg = source_ + ": unknown key";
    for (const auto& k : keys)
        msg += " '" + k + "' (line " + std::to_string(line_of(k)) + ")";
    throw ConfigError(msg);
}

} // namespace solarmpc
