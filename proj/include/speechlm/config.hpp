// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace speechlm {

// Flat "key = value" text config; '#' starts a comment, blank lines are
// ignored. Ordered map so serialization is stable.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
std::string serialize_kv(const KvMap& kv);
KvMap read_kv_file(const std::string& path);

// Typed accessor that records which keys were consumed so callers can
// reject unknown ones by name.
class KvReader {
public:
    explicit KvReader(const KvMap& kv) : kv_(kv) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    std::string get_str(const std::string& key, const std::string& fallback);
    int64_t get_int(const std::string& key, int64_t fallback);
    double get_double(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);

    // Throws ConfigError naming the first unconsumed key, if any.
    void reject_unknown() const;

private:
    const KvMap& kv_;
    std::set<std::string> consumed_;
};

}  // namespace speechlm
