// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include "speechlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "speechlm/error.hpp"
#include "speechlm/rng.hpp"

namespace speechlm {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'M'};
constexpr uint8_t kDtypeF64 = 0;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

void put_bytes(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    uint8_t u8() {
        need(1);
        return byte();
    }

    std::string bytes() {
        const uint32_t n = u32();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void expect_magic() {
        need(4);
        if (std::memcmp(buf_.data() + pos_, kMagic, 4) != 0) {
            throw FormatError("not a checkpoint container: " + path_);
        }
        pos_ += 4;
    }

    size_t pos() const { return pos_; }

private:
    void need(size_t n) {
        if (pos_ + n > buf_.size()) throw FormatError("truncated checkpoint file: " + path_);
    }
    uint8_t byte() { return static_cast<uint8_t>(buf_[pos_++]); }

    const std::string& buf_;
    std::string path_;
    size_t pos_ = 0;
};

}  // namespace

const Matrix* CheckpointData::find(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
        if (n == name) return &m;
    }
    return nullptr;
}

void save_checkpoint_file(const std::string& path, const CheckpointData& data) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, data.version);
    put_u64(out, fnv1a(data.config_text));
    put_bytes(out, data.config_text);
    put_u32(out, static_cast<uint32_t>(data.vocab.size()));
    for (uint32_t cp : data.vocab) put_u32(out, cp);
    put_u64(out, data.step);
    put_bytes(out, data.rng_state);
    put_u64(out, data.tensors.size());
    uint64_t offset = 0;
    for (const auto& [name, m] : data.tensors) {
        put_bytes(out, name);
        out += static_cast<char>(kDtypeF64);
        put_u32(out, static_cast<uint32_t>(m.rows()));
        put_u32(out, static_cast<uint32_t>(m.cols()));
        put_u64(out, offset);
        offset += m.size() * sizeof(double);
    }
    for (const auto& [name, m] : data.tensors) {
        for (size_t i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to checkpoint: " + path);
}

CheckpointData load_checkpoint_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(buf, path);
    r.expect_magic();

    CheckpointData data;
    data.version = r.u32();
    if (data.version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(data.version) +
                          " in " + path);
    }
    const uint64_t digest = r.u64();
    data.config_text = r.bytes();
    if (digest != fnv1a(data.config_text)) {
        throw FormatError("config digest mismatch (corrupt checkpoint): " + path);
    }
    const uint32_t vocab_n = r.u32();
    data.vocab.reserve(vocab_n);
    for (uint32_t i = 0; i < vocab_n; ++i) data.vocab.push_back(r.u32());
    data.step = r.u64();
    data.rng_state = r.bytes();

    const uint64_t n_tensors = r.u64();
    struct Entry {
        std::string name;
        uint32_t rows, cols;
        uint64_t offset;
    };
    std::vector<Entry> dir;
    dir.reserve(n_tensors);
    for (uint64_t i = 0; i < n_tensors; ++i) {
        Entry e;
        e.name = r.bytes();
        const uint8_t dtype = r.u8();
        if (dtype != kDtypeF64) {
            throw FormatError("unsupported tensor dtype " + std::to_string(dtype) + " for '" +
                              e.name + "' in " + path);
        }
        e.rows = r.u32();
        e.cols = r.u32();
        e.offset = r.u64();
        dir.push_back(std::move(e));
    }
    const size_t payload_start = r.pos();
    for (const auto& e : dir) {
        const size_t need = static_cast<size_t>(e.rows) * e.cols * sizeof(double);
        if (payload_start + e.offset + need > buf.size()) {
            throw FormatError("tensor '" + e.name + "' overruns checkpoint payload: " + path);
        }
        Matrix m(static_cast<int>(e.rows), static_cast<int>(e.cols));
        const char* src = buf.data() + payload_start + e.offset;
        for (size_t i = 0; i < m.size(); ++i) {
            uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) {
                bits |= static_cast<uint64_t>(static_cast<uint8_t>(src[i * 8 + b])) << (8 * b);
            }
            m.data()[i] = std::bit_cast<double>(bits);
        }
        data.tensors.emplace_back(e.name, std::move(m));
    }
    return data;
}

}  // namespace speechlm
