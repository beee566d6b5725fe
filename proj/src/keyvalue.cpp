#include "lightcone/keyvalue.hpp"

#include "lightcone/error.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace lightcone {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view text, std::string_view key, std::string_view origin) {
    T v{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError(std::string(origin) + ": '" + std::string(key) + "' expects a number, got '" +
                          std::string(text) + "'");
    }
    return v;
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, std::string_view origin) {
    KeyValues kv;
    kv.origin_ = origin;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        const std::string where = std::string(origin) + ":" + std::to_string(line_no);
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (kv.has(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
        kv.values_[key] = std::string(trim(line.substr(eq + 1)));
    }
    return kv;
}

std::optional<std::string> KeyValues::get(std::string_view key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValues::get_string(std::string_view key, std::string fallback) const {
    return get(key).value_or(std::move(fallback));
}

double KeyValues::get_double(std::string_view key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    const double d = parse_number<double>(*v, key, origin_);
    if (!std::isfinite(d)) throw ConfigError(origin_ + ": '" + std::string(key) + "' must be finite");
    return d;
}

std::int64_t KeyValues::get_int(std::string_view key, std::int64_t fallback) const {
    const auto v = get(key);
    return v ? parse_number<std::int64_t>(*v, key, origin_) : fallback;
}

std::uint64_t KeyValues::get_u64(std::string_view key, std::uint64_t fallback) const {
    const auto v = get(key);
    return v ? parse_number<std::uint64_t>(*v, key, origin_) : fallback;
}

bool KeyValues::get_bool(std::string_view key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(origin_ + ": '" + std::string(key) + "' expects true or false, got '" + *v + "'");
}

void KeyValues::require_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_) {
        if (!known.contains(k)) throw ConfigError(origin_ + ": unknown key '" + k + "'");
    }
}

std::string KeyValues::to_string() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
    return out.str();
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace lightcone
