// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/config.hpp"

#include <fstream>
#include <sstream>

#include "speechlm/error.hpp"

namespace speechlm {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
}  // namespace

KvMap parse_kv_text(const std::string& text) {
    KvMap kv;
    std::istringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + " is not 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key at config line " + std::to_string(line_no));
        kv[key] = value;
    }
    return kv;
}

std::string serialize_kv(const KvMap& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
    return os.str();
}

KvMap read_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_kv_text(ss.str());
}

std::string KvReader::get_str(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

int64_t KvReader::get_int(const std::string& key, int64_t fallback) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects an integer, got '" + it->second + "'");
    }
}

double KvReader::get_double(const std::string& key, double fallback) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects a number, got '" + it->second + "'");
    }
}

bool KvReader::get_bool(const std::string& key, bool fallback) {
    consumed_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("key '" + key + "' expects true/false, got '" + it->second + "'");
}

void KvReader::reject_unknown() const {
    for (const auto& [k, v] : kv_) {
        if (consumed_.count(k) == 0) throw ConfigError("unknown config key '" + k + "'");
    }
}

}  // namespace speechlm
