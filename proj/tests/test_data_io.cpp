// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "speechlm/batching.hpp"
#include "speechlm/error.hpp"
#include "speechlm/manifest.hpp"
#include "speechlm/rng.hpp"
#include "speechlm/utf8.hpp"

using namespace speechlm;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.frontend.n_mels = 20;
    cfg.lfr_m = 7;
    cfg.lfr_n = 6;
    cfg.encoder.d_enc = 16;
    cfg.encoder.n_layers = 1;
    cfg.encoder.n_heads = 2;
    cfg.adapter.k = 2;
    cfg.adapter.d_hidden = 24;
    cfg.lm.d_llm = 16;
    cfg.lm.n_layers = 1;
    cfg.lm.n_heads = 2;
    cfg.lm.d_ff = 32;
    cfg.lm.max_seq = 192;
    cfg.lora.r = 2;
    cfg.seed = 3;
    return cfg;
}

SpeechLmModel tiny_model(const std::vector<ManifestRecord>& records) {
    std::vector<std::string> texts;
    for (const auto& r : records) {
        texts.push_back(r.text);
        if (r.translation) texts.push_back(*r.translation);
    }
    return SpeechLmModel::init(tiny_model_config(), Tokenizer::build(texts));
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

uint64_t digest_batches(const std::vector<Batch>& batches) {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](uint64_t v) {
        h ^= v;
        h *= 1099511628211ULL;
    };
    for (const auto& b : batches) {
        mix(b.items.size());
        mix(static_cast<uint64_t>(b.total_len));
        for (const auto& item : b.items) {
            mix(fnv1a(item.id));
            for (size_t i = 0; i < item.audio.size(); ++i) {
                mix(static_cast<uint64_t>(item.audio.data()[i] * 1e6));
            }
            for (int id : item.token_ids) mix(static_cast<uint64_t>(id));
            for (uint8_t m : item.pred_mask) mix(m);
        }
    }
    return h;
}

}  // namespace

TEST_CASE("manifest reading: valid lines, partial tolerance, duplicate ids") {
    TempDir dir("speechlm_manifest_test");
    const std::string path = (dir.path / "m.jsonl").string();
    {
        std::ofstream f(path);
        f << R"({"id":"a","audio":"a.wav","text":"hello","lang":"en"})" << "\n";
        f << R"({"id":"b","audio":"b.wav","text":"你好","lang":"zh","translation":"hi"})" << "\n";
        f << R"({"id":"c","audio":"c.wav","lang":"en"})" << "\n";          // missing text
        f << "not json at all\n";
        f << R"({"id":"d","audio":"d.wav","text":"x","lang":"fr"})" << "\n";  // bad lang
    }
    const ManifestLoadResult res = read_manifest(path);
    CHECK(res.records.size() == 2);
    CHECK(res.errors.size() == 3);
    CHECK(res.errors[0].line == 3);
    CHECK(res.errors[1].line == 4);
    CHECK(res.errors[2].line == 5);
    // relative audio paths are resolved against the manifest directory
    CHECK(fs::path(res.records[0].audio).is_absolute());

    {
        std::ofstream f(path);
        f << R"({"id":"dup","audio":"a.wav","text":"x","lang":"en"})" << "\n";
        f << R"({"id":"dup","audio":"b.wav","text":"y","lang":"en"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("dup"), ValidationError);
    CHECK_THROWS_AS(read_manifest("missing_manifest.jsonl"), IoError);
}

TEST_CASE("synth dataset is deterministic and length-exact") {
    TempDir dir("speechlm_synth_test");
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.n_utts = 10;
    cfg.out_dir = (dir.path / "d1").string();
    const std::vector<ManifestRecord> a = synth_dataset(cfg);
    CHECK(a.size() == 10);

    SynthConfig cfg2 = cfg;
    cfg2.out_dir = (dir.path / "d2").string();
    const std::vector<ManifestRecord> b = synth_dataset(cfg2);
    REQUIRE(b.size() == a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].text == b[i].text);
        CHECK(a[i].translation == b[i].translation);
        // WAV payloads byte-identical
        std::ifstream fa(a[i].audio, std::ios::binary), fb(b[i].audio, std::ios::binary);
        std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        CHECK(da == db);
    }

    // audio length = chars * burst_ms
    for (const auto& rec : a) {
        const AudioWave w = read_wav(rec.audio);
        const size_t chars = utf8_decode(rec.text).size();
        CHECK(w.samples.size() == chars * 3200);  // 200 ms at 16 kHz
    }

    SynthConfig bad = cfg;
    bad.n_utts = 0;
    CHECK_THROWS_AS(synth_dataset(bad), InputError);
}

TEST_CASE("length chain: synth -> frontend -> lfr -> adapter matches closed forms") {
    TempDir dir("speechlm_chain_test");
    SynthConfig cfg;
    cfg.seed = 11;
    cfg.n_utts = 4;
    cfg.out_dir = dir.path.string();
    const auto records = synth_dataset(cfg);
    SpeechLmModel model = tiny_model(records);

    for (const auto& rec : records) {
        const AudioWave wave = read_wav(rec.audio);
        const int n = static_cast<int>(wave.samples.size());
        const FeatureSequence feats = compute_fbank(wave, model.cfg.frontend);
        const int t = (n - 400) / 160 + 1;
        CHECK(feats.frames.rows() == t);
        const LfrSequence lfr = apply_lfr(feats, 7, 6);
        const int t_lfr = (t + 5) / 6;
        CHECK(lfr.frames.rows() == t_lfr);
        const AudioPromptEmbedding emb = model.embed_audio(wave);
        CHECK(emb.vectors.rows() == t_lfr / 2);
        CHECK(emb.granularity_ms == 120.0);
    }
}

TEST_CASE("make_batches counts, determinism, and skipping") {
    TempDir dir("speechlm_batch_test");
    SynthConfig cfg;
    cfg.seed = 21;
    cfg.n_utts = 17;
    cfg.out_dir = dir.path.string();
    std::vector<ManifestRecord> records = synth_dataset(cfg);
    SpeechLmModel model = tiny_model(records);
    const Task task = Task::make(TaskKind::asr);

    const std::vector<Batch> batches = make_batches(records, model, task, 8, 5, 0);
    REQUIRE(batches.size() == 3);  // ceil(17/8)
    CHECK(batches[0].items.size() == 8);
    CHECK(batches[1].items.size() == 8);
    CHECK(batches[2].items.size() == 1);
    for (const auto& b : batches) {
        for (const auto& item : b.items) {
            CHECK(static_cast<int>(item.pred_mask.size()) == b.total_len);
            CHECK(item.speech_len > 0);
        }
        CHECK(b.masked_tokens() > 0);
    }

    // same seed, same epoch -> identical order; different epoch -> shuffled
    const std::vector<Batch> again = make_batches(records, model, task, 8, 5, 0);
    CHECK(digest_batches(batches) == digest_batches(again));
    const std::vector<Batch> other = make_batches(records, model, task, 8, 5, 1);
    CHECK(digest_batches(batches) != digest_batches(other));

    // a record with a missing audio file is skipped with a count
    records.push_back({"ghost", (dir.path / "missing.wav").string(), "abc", std::nullopt, "en",
                       "train"});
    BatchStats stats;
    const std::vector<Batch> skipped = make_batches(records, model, task, 8, 5, 0, &stats);
    CHECK(stats.skipped == 1);
    int total_items = 0;
    for (const auto& b : skipped) total_items += static_cast<int>(b.items.size());
    CHECK(total_items == 17);

    CHECK_THROWS_AS(make_batches({}, model, task, 8, 5, 0), InputError);
}

TEST_CASE("padding positions carry zero mask") {
    TempDir dir("speechlm_pad_test");
    SynthConfig cfg;
    cfg.seed = 31;
    cfg.n_utts = 6;
    cfg.min_chars = 3;
    cfg.max_chars = 6;  // varied lengths force padding
    cfg.out_dir = dir.path.string();
    const auto records = synth_dataset(cfg);
    SpeechLmModel model = tiny_model(records);
    const auto batches = make_batches(records, model, Task::make(TaskKind::asr), 6, 1, 0);
    REQUIRE(batches.size() == 1);
    const Batch& b = batches[0];
    bool saw_padding = false;
    for (const auto& item : b.items) {
        const int own = item.speech_len + static_cast<int>(item.token_ids.size());
        for (int p = own - 1; p < b.total_len; ++p) {
            CHECK(item.pred_mask[p] == 0);  // nothing predicted at or past the end
        }
        saw_padding |= own < b.total_len;
    }
    CHECK(saw_padding);
}

TEST_CASE("pipelined loader: determinism under randomized delays, any depth") {
    // stub factory producing 12 tiny batches with index-dependent content
    auto make_factory = [](uint64_t delay_seed) {
        return [delay_seed](int64_t index) -> std::optional<Batch> {
            if (index >= 12) return std::nullopt;
            Rng rng(mix_seed(delay_seed, "delay" + std::to_string(index)));
            std::this_thread::sleep_for(std::chrono::microseconds(rng.below(800)));
            Batch b;
            b.total_len = static_cast<int>(index + 1);
            BatchItem item;
            item.id = "item" + std::to_string(index);
            b.items.push_back(item);
            return b;
        };
    };

    auto consume = [](PipelinedLoader& loader) {
        std::vector<int> seen;
        while (auto b = loader.next()) seen.push_back(b->total_len);
        return seen;
    };

    std::vector<int> reference;
    {
        PipelinedLoader loader(make_factory(0), 1, 1);
        reference = consume(loader);
    }
    REQUIRE(reference.size() == 12);

    for (int trial = 0; trial < 10; ++trial) {
        for (int depth : {1, 2, 8}) {
            for (int workers : {1, 3}) {
                PipelinedLoader loader(make_factory(1000 + trial), depth, workers);
                CHECK(consume(loader) == reference);
            }
        }
    }
}

TEST_CASE("pipelined loader overlaps preparation with a slow consumer") {
    auto factory = [](int64_t index) -> std::optional<Batch> {
        if (index >= 8) return std::nullopt;
        Batch b;
        b.total_len = static_cast<int>(index);
        return b;
    };
    PipelinedLoader loader(factory, 4, 2);
    (void)loader.next();
    // give workers time to fill the buffer while we "train"
    int64_t max_ahead = 0;
    for (int i = 0; i < 50; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        max_ahead = std::max(max_ahead, loader.prepared_ahead());
    }
    CHECK(max_ahead > 0);
}

TEST_CASE("pipelined loader propagates worker failure at the failing index") {
    auto factory = [](int64_t index) -> std::optional<Batch> {
        if (index == 3) throw IoError("synthetic failure");
        if (index >= 6) return std::nullopt;
        Batch b;
        b.total_len = static_cast<int>(index);
        return b;
    };
    PipelinedLoader loader(factory, 2, 2);
    for (int i = 0; i < 3; ++i) CHECK(loader.next().has_value());
    CHECK_THROWS_AS(loader.next(), IoError);
    // stream continues past the failure
    CHECK(loader.next().has_value());
}

TEST_CASE("pipelined loader rejects depth < 1") {
    auto factory = [](int64_t) -> std::optional<Batch> { return std::nullopt; };
    CHECK_THROWS_AS(PipelinedLoader(factory, 0, 1), ConfigError);
}
