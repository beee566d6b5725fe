#pragma once

// Flat "key = value" text used by config files and checkpoint metadata.
// Blank lines and lines starting with '#' are ignored.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace lightcone {

class KeyValues {
public:
    KeyValues() = default;

    /// Throws ConfigError naming `origin` and the line on malformed input or
    /// duplicate keys.
    static KeyValues parse(std::string_view text, std::string_view origin = "config");

    bool has(std::string_view key) const { return values_.find(std::string(key)) != values_.end(); }
    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

    std::optional<std::string> get(std::string_view key) const;
    std::string get_string(std::string_view key, std::string fallback) const;
    double get_double(std::string_view key, double fallback) const;
    std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
    std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
    bool get_bool(std::string_view key, bool fallback) const;

    /// Throws ConfigError for any key outside `known`.
    void require_known(const std::set<std::string>& known) const;

    const std::map<std::string, std::string, std::less<>>& entries() const { return values_; }
    /// One "key=value" line per entry, sorted by key.
    std::string to_string() const;

private:
    std::string origin_ = "config";
    std::map<std::string, std::string, std::less<>> values_;
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace lightcone
