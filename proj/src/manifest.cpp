// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/manifest.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "speechlm/error.hpp"
#include "speechlm/rng.hpp"
#include "speechlm/utf8.hpp"
#include "speechlm/wav.hpp"

namespace speechlm {

namespace fs = std::filesystem;
using nlohmann::json;

ManifestLoadResult read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();

    ManifestLoadResult result;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            result.errors.push_back({line_no, std::string("invalid JSON: ") + e.what()});
            continue;
        }
        ManifestRecord rec;
        try {
            rec.id = j.at("id").get<std::string>();
            rec.audio = j.at("audio").get<std::string>();
            rec.text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
            result.errors.push_back({line_no, std::string("missing required field: ") + e.what()});
            continue;
        }
        if (j.contains("translation")) rec.translation = j["translation"].get<std::string>();
        if (j.contains("lang")) rec.lang = j["lang"].get<std::string>();
        if (j.contains("testset")) rec.testset = j["testset"].get<std::string>();
        if (rec.lang != "zh" && rec.lang != "en") {
            result.errors.push_back({line_no, "lang must be zh or en, got '" + rec.lang + "'"});
            continue;
        }
        if (!seen_ids.insert(rec.id).second) {
            throw ValidationError("duplicate utterance id '" + rec.id + "' at line " +
                                  std::to_string(line_no) + " of " + path);
        }
        if (!fs::path(rec.audio).is_absolute()) {
            rec.audio = (base / rec.audio).string();
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write manifest: " + path);
    for (const auto& rec : records) {
        json j;
        j["id"] = rec.id;
        j["audio"] = rec.audio;
        j["text"] = rec.text;
        if (rec.translation) j["translation"] = *rec.translation;
        j["lang"] = rec.lang;
        j["testset"] = rec.testset;
        f << j.dump() << "\n";
    }
}

std::vector<ManifestRecord> synth_dataset(const SynthConfig& cfg) {
    if (cfg.n_utts < 1) throw InputError("synth_dataset needs n_utts >= 1");
    if (cfg.min_chars < 1 || cfg.max_chars < cfg.min_chars) {
        throw InputError("synth_dataset: invalid target length range");
    }
    fs::create_directories(cfg.out_dir);
    const std::vector<uint32_t> pool = utf8_decode(cfg.char_pool);
    if (pool.empty()) throw InputError("synth_dataset: empty character pool");

    Rng rng(cfg.seed);
    const int burst_samples = static_cast<int>(std::lround(cfg.burst_ms * cfg.sample_rate / 1000.0));
    std::vector<ManifestRecord> records;
    bool any_zh = false;
    for (int u = 0; u < cfg.n_utts; ++u) {
        const int len = cfg.min_chars + static_cast<int>(rng.below(cfg.max_chars - cfg.min_chars + 1));
        std::vector<uint32_t> chars(len);
        std::vector<int> indices(len);
        for (int i = 0; i < len; ++i) {
            indices[i] = static_cast<int>(rng.below(pool.size()));
            chars[i] = pool[indices[i]];
        }

        AudioWave wave;
        wave.sample_rate = cfg.sample_rate;
        wave.samples.reserve(static_cast<size_t>(len) * burst_samples);
        for (int i = 0; i < len; ++i) {
            const double freq = cfg.base_hz + indices[i] * cfg.step_hz;
            for (int s = 0; s < burst_samples; ++s) {
                const double t = static_cast<double>(s) / cfg.sample_rate;
                // Hann envelope keeps burst boundaries click-free.
                const double env = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * s /
                                                        (burst_samples - 1));
                wave.samples.push_back(0.3 * env * std::sin(2.0 * 3.14159265358979323846 * freq * t));
            }
        }

        ManifestRecord rec;
        rec.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(u);
        rec.text = utf8_encode(chars);
        std::ostringstream tr;
        for (int i = 0; i < len; ++i) {
            if (i) tr << " ";
            tr << "w" << indices[i];
        }
        rec.translation = tr.str();
        bool zh = false;
        for (uint32_t c : chars) zh = zh || c > 0x7F;
        rec.lang = zh ? "zh" : "en";
        any_zh = any_zh || zh;
        rec.testset = cfg.testset;
        const std::string wav_name = rec.id + ".wav";
        write_wav((fs::path(cfg.out_dir) / wav_name).string(), wave);
        rec.audio = wav_name;
        records.push_back(std::move(rec));
    }
    write_manifest((fs::path(cfg.out_dir) / "manifest.jsonl").string(), records);
    // Re-read so audio paths are resolved exactly as consumers will see them.
    return read_manifest((fs::path(cfg.out_dir) / "manifest.jsonl").string()).records;
}

}  // namespace speechlm
