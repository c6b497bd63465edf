// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "speechlm/checkpoint.hpp"
#include "speechlm/encoder.hpp"
#include "speechlm/error.hpp"
#include "speechlm/nn.hpp"

using namespace speechlm;
namespace fs = std::filesystem;

namespace {

CheckpointData sample_data() {
    CheckpointData data;
    data.config_text = "d_enc = 16\nseed = 3\n";
    data.vocab = {65, 66, 0x4F60};
    data.step = 42;
    data.rng_state = "stateless:seed=3";
    data.tensors.emplace_back("w1", uniform_matrix(3, 4, 1.0, 9));
    data.tensors.emplace_back("w2", uniform_matrix(1, 7, 0.5, 10));
    return data;
}

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint container round trip is bit-exact") {
    const std::string path = temp_path("splm_roundtrip.bin");
    const CheckpointData a = sample_data();
    save_checkpoint_file(path, a);
    const CheckpointData b = load_checkpoint_file(path);
    CHECK(b.version == a.version);
    CHECK(b.config_text == a.config_text);
    CHECK(b.vocab == a.vocab);
    CHECK(b.step == 42);
    CHECK(b.rng_state == a.rng_state);
    REQUIRE(b.tensors.size() == 2);
    CHECK(b.tensors[0].first == "w1");
    CHECK(b.tensors[0].second.equals_bits(a.tensors[0].second));
    CHECK(b.tensors[1].second.equals_bits(a.tensors[1].second));
    std::remove(path.c_str());
}

TEST_CASE("truncated and corrupt checkpoints are format errors") {
    const std::string path = temp_path("splm_truncated.bin");
    save_checkpoint_file(path, sample_data());

    std::string bytes;
    {
        std::ifstream f(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    }
    {
        std::ofstream f(path, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint_file(path), FormatError);

    // wrong magic
    {
        std::ofstream f(path, std::ios::binary);
        std::string tampered = bytes;
        tampered[0] = 'X';
        f.write(tampered.data(), static_cast<std::streamsize>(tampered.size()));
    }
    CHECK_THROWS_AS(load_checkpoint_file(path), FormatError);

    // corrupt config byte breaks the digest
    {
        std::ofstream f(path, std::ios::binary);
        std::string tampered = bytes;
        tampered[24] ^= 0x5A;
        f.write(tampered.data(), static_cast<std::streamsize>(tampered.size()));
    }
    CHECK_THROWS_AS(load_checkpoint_file(path), FormatError);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint_file(path), IoError);
}

TEST_CASE("encoder weights: save, import, encode bit-identically") {
    EncoderConfig cfg;
    cfg.d_in = 140;
    cfg.d_enc = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.seed = 77;
    EncoderParams original = init_encoder(cfg);

    CheckpointData data;
    data.config_text = "exported encoder";
    for (Param* p : original.all()) data.tensors.emplace_back(p->name, p->value);
    const std::string path = temp_path("splm_encoder.bin");
    save_checkpoint_file(path, data);

    EncoderParams imported = import_encoder_weights(path, cfg);
    LfrSequence lfr;
    lfr.frames = uniform_matrix(9, 140, 1.0, 123);
    lfr.effective_shift_ms = 60.0;
    const EncoderOutput a = encode(lfr, original);
    const EncoderOutput b = encode(lfr, imported);
    CHECK(a.frames.equals_bits(b.frames));

    // wrong d_enc in the config is a format error
    EncoderConfig wrong = cfg;
    wrong.d_enc = 32;
    wrong.d_in = 140;
    CHECK_THROWS_AS(import_encoder_weights(path, wrong), FormatError);

    std::remove(path.c_str());
}
