// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "speechlm/error.hpp"

namespace speechlm {

namespace {

uint32_t read_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16le(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::string& s, uint32_t v) {
    s += static_cast<char>(v & 0xFF);
    s += static_cast<char>((v >> 8) & 0xFF);
    s += static_cast<char>((v >> 16) & 0xFF);
    s += static_cast<char>((v >> 24) & 0xFF);
}

void put_u16le(std::string& s, uint16_t v) {
    s += static_cast<char>(v & 0xFF);
    s += static_cast<char>((v >> 8) & 0xFF);
}

}  // namespace

AudioWave read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open WAV file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44) throw FormatError("WAV file too short: " + path);
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("not a RIFF/WAVE file: " + path);
    }
    if (std::memcmp(bytes.data() + 12, "fmt ", 4) != 0) {
        throw FormatError("expected canonical fmt chunk at offset 12: " + path);
    }
    const uint32_t fmt_size = read_u32le(bytes.data() + 16);
    if (fmt_size != 16) throw FormatError("non-canonical fmt chunk size in " + path);
    const uint16_t audio_format = read_u16le(bytes.data() + 20);
    if (audio_format != 1) throw FormatError("compressed WAV rejected (format tag != PCM): " + path);
    const uint16_t channels = read_u16le(bytes.data() + 22);
    if (channels != 1) throw FormatError("only mono WAV supported, got " +
                                         std::to_string(channels) + " channels: " + path);
    const uint32_t sample_rate = read_u32le(bytes.data() + 24);
    const uint16_t bits = read_u16le(bytes.data() + 34);
    if (bits != 16) throw FormatError("only 16-bit PCM supported, got " + std::to_string(bits) +
                                      " bits: " + path);
    if (std::memcmp(bytes.data() + 36, "data", 4) != 0) {
        throw FormatError("expected data chunk at offset 36: " + path);
    }
    const uint32_t data_size = read_u32le(bytes.data() + 40);
    if (44 + static_cast<size_t>(data_size) > bytes.size()) {
        throw FormatError("WAV data chunk overruns file: " + path);
    }

    AudioWave wave;
    wave.sample_rate = static_cast<int>(sample_rate);
    const size_t n = data_size / 2;
    wave.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const int16_t s = static_cast<int16_t>(read_u16le(bytes.data() + 44 + 2 * i));
        wave.samples[i] = static_cast<double>(s) / 32768.0;
    }
    return wave;
}

void write_wav(const std::string& path, const AudioWave& wave) {
    std::string out;
    const uint32_t data_size = static_cast<uint32_t>(wave.samples.size() * 2);
    out.reserve(44 + data_size);
    out += "RIFF";
    put_u32le(out, 36 + data_size);
    out += "WAVE";
    out += "fmt ";
    put_u32le(out, 16);
    put_u16le(out, 1);  // PCM
    put_u16le(out, 1);  // mono
    put_u32le(out, static_cast<uint32_t>(wave.sample_rate));
    put_u32le(out, static_cast<uint32_t>(wave.sample_rate) * 2);
    put_u16le(out, 2);
    put_u16le(out, 16);
    out += "data";
    put_u32le(out, data_size);
    for (double v : wave.samples) {
        const double c = std::clamp(v, -1.0, 1.0);
        const int16_t s = static_cast<int16_t>(std::lround(c * 32767.0));
        put_u16le(out, static_cast<uint16_t>(s));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write WAV file: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to WAV file: " + path);
}

}  // namespace speechlm
