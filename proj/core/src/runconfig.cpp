#include "cascadeflow/runconfig.hpp"

#include "cascadeflow/hashing.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cascadeflow {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

}  // namespace

ConfigMap ConfigMap::parse_text(const std::string& text) {
    ConfigMap m;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected 'key = value', got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (!valid_key(key))
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": malformed key '" + key + "'");
        m.kv_[key] = val;
    }
    return m;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    try {
        return parse_text(ss.str());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

bool ConfigMap::has(const std::string& key) const { return kv_.count(key) != 0; }

void ConfigMap::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw std::invalid_argument("malformed config key '" + key + "'");
    kv_[key] = value;
}

std::string ConfigMap::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

std::int64_t ConfigMap::parse_int(const std::string& key, const std::string& raw) const {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (ec != std::errc() || p != raw.data() + raw.size())
        throw std::invalid_argument("config key '" + key + "' expects an integer, got '" + raw + "'");
    return v;
}

double ConfigMap::parse_real(const std::string& key, const std::string& raw) const {
    try {
        std::size_t pos = 0;
        double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "' expects a number, got '" + raw + "'");
    }
}

std::int64_t ConfigMap::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : parse_int(key, it->second);
}

double ConfigMap::get_real(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : parse_real(key, it->second);
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config key '" + key + "' expects a boolean, got '" + it->second + "'");
}

std::string ConfigMap::require_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::invalid_argument("config missing required key '" + key + "'");
    return it->second;
}

std::int64_t ConfigMap::require_int(const std::string& key) const {
    return parse_int(key, require_str(key));
}

double ConfigMap::require_real(const std::string& key) const {
    return parse_real(key, require_str(key));
}

std::string ConfigMap::canonical_text() const {
    std::string out;  // std::map iterates in key order already
    for (const auto& [k, v] : kv_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

std::string ConfigMap::hash() const { return hex64(fnv1a64(canonical_text())); }

}  // namespace cascadeflow
