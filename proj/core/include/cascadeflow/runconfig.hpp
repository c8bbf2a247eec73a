#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace cascadeflow {

// Plain-text run configuration: one `section.key = value` per line, `#`
// comments, UTF-8. Keys are dotted paths; values stay strings until a typed
// getter parses them. The canonical form (keys sorted, single-space
// separators) backs the config hash, so formatting and ordering do not
// change a run's identity.
class ConfigMap {
public:
    static ConfigMap parse_text(const std::string& text);
    static ConfigMap parse_file(const std::string& path);

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);  // CLI overrides

    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_real(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    std::string require_str(const std::string& key) const;
    std::int64_t require_int(const std::string& key) const;
    double require_real(const std::string& key) const;

    std::string canonical_text() const;
    std::string hash() const;  // FNV-1a 64 of the canonical text, hex

    const std::map<std::string, std::string>& items() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
    std::int64_t parse_int(const std::string& key, const std::string& raw) const;
    double parse_real(const std::string& key, const std::string& raw) const;
};

}  // namespace cascadeflow
