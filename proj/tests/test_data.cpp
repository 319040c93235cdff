// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "distilltron/data.hpp"

using namespace distilltron;

namespace {

ToySpec small_spec() {
    ToySpec spec;
    spec.vocab = Vocab::toy(6);
    spec.n_mels = 32;
    spec.dur_min = 4;
    spec.dur_max = 7;
    spec.noise_level = 0.0;
    return spec;
}

}  // namespace

TEST_CASE("vocab and tokenize") {
    Vocab v = Vocab::toy(3);
    CHECK(v.symbols == "_abc~");
    CHECK(v.pad_id() == 0);
    CHECK(v.end_id() == 4);
    CHECK(v.content_count() == 3);

    TokenSequence seq = tokenize("abc", v);
    CHECK(seq.ids == std::vector<std::size_t>{1, 2, 3});

    CHECK_THROWS_AS(tokenize("", v), InputError);
    try {
        tokenize("zab", v);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("'z'") != std::string::npos);
        CHECK(std::string(e.what()).find("position 0") != std::string::npos);
    }
}

TEST_CASE("toy spec invariants") {
    ToySpec spec = small_spec();
    spec.validate();

    // distinct symbols own distinct dominant bands
    std::set<std::size_t> bands;
    for (std::size_t id = 1; id < spec.vocab.size(); ++id) {
        bands.insert(spec.band_center(id));
    }
    CHECK(bands.size() == spec.vocab.size() - 1);

    // a frame's dominant band identifies the symbol at noise level 0
    for (std::size_t id = 1; id < spec.vocab.size(); ++id) {
        auto row = spec.symbol_template(id);
        const std::size_t argmax = static_cast<std::size_t>(
            std::max_element(row.begin(), row.end()) - row.begin());
        CHECK(argmax == spec.band_center(id));
    }

    ToySpec bad = spec;
    bad.dur_min = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("synth_utterance construction") {
    ToySpec spec = small_spec();
    TokenSequence seq = tokenize("ab~", spec.vocab);
    auto [mel, align] = synth_utterance(seq, spec, 99);

    // alignment partitions the frame range exactly
    REQUIRE(align.size() == 3);
    CHECK(align.front().first == 0);
    for (std::size_t k = 1; k < align.size(); ++k) {
        CHECK(align[k].first == align[k - 1].second);
    }
    CHECK(align.back().second == mel.num_frames());

    // total frames = sum of durations
    std::size_t total = 0;
    for (auto [s, e] : align) {
        CHECK(e - s >= spec.dur_min);
        CHECK(e - s <= spec.dur_max);
        total += e - s;
    }
    CHECK(total == mel.num_frames());

    // per-token dominant band matches the symbol at noise 0
    for (std::size_t k = 0; k < align.size(); ++k) {
        for (std::size_t t = align[k].first; t < align[k].second; ++t) {
            const auto& row = mel.frames[t];
            const std::size_t argmax = static_cast<std::size_t>(
                std::max_element(row.begin(), row.end()) - row.begin());
            CHECK(argmax == spec.band_center(seq.ids[k]));
        }
    }

    // same seed, same spectrogram
    auto [mel2, align2] = synth_utterance(seq, spec, 99);
    CHECK(mel2.frames == mel.frames);
    CHECK(align2 == align);
}

TEST_CASE("build_corpus splits and determinism") {
    ToySpec spec = small_spec();
    CorpusConfig cfg;
    cfg.n_train = 24;
    cfg.n_test_in = 6;
    cfg.n_test_out = 6;
    cfg.train_len_min = 3;
    cfg.train_len_max = 6;
    cfg.ood_len_min = 9;
    cfg.ood_len_max = 12;
    Corpus corpus = build_corpus(cfg, spec, 7);

    CHECK(corpus.split_indices("train").size() == 24);
    CHECK(corpus.split_indices("test-in-domain").size() == 6);
    CHECK(corpus.split_indices("test-out-of-domain").size() == 6);

    std::size_t train_max = 0;
    for (std::size_t i : corpus.split_indices("train")) {
        train_max = std::max(train_max, corpus.items[i].tokens.length());
    }
    for (std::size_t i : corpus.split_indices("test-out-of-domain")) {
        CHECK(corpus.items[i].tokens.length() > train_max);
    }

    Corpus again = build_corpus(cfg, spec, 7);
    CHECK(manifest_to_string(again) == manifest_to_string(corpus));
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        CHECK(again.items[i].mel.frames == corpus.items[i].mel.frames);
    }

    CorpusConfig bad = cfg;
    bad.ood_len_min = 5;
    CHECK_THROWS_AS(build_corpus(bad, spec, 7), ConfigError);
}

TEST_CASE("corpus save / load round trip") {
    ToySpec spec = small_spec();
    CorpusConfig cfg;
    cfg.n_train = 4;
    cfg.n_test_in = 2;
    cfg.n_test_out = 2;
    cfg.train_len_min = 3;
    cfg.train_len_max = 4;
    cfg.ood_len_min = 6;
    cfg.ood_len_max = 7;
    Corpus corpus = build_corpus(cfg, spec, 5);

    const std::string dir =
        (std::filesystem::temp_directory_path() / "distilltron_corpus_test").string();
    std::filesystem::remove_all(dir);
    save_corpus(corpus, dir);
    Corpus loaded = load_corpus(dir);
    REQUIRE(loaded.items.size() == corpus.items.size());
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        CHECK(loaded.items[i].id == corpus.items[i].id);
        CHECK(loaded.items[i].split == corpus.items[i].split);
        CHECK(loaded.items[i].text == corpus.items[i].text);
        CHECK(loaded.items[i].alignment == corpus.items[i].alignment);
        CHECK(loaded.items[i].mel.frames == corpus.items[i].mel.frames);
    }
    CHECK(loaded.vocab.symbols == corpus.vocab.symbols);
    std::filesystem::remove_all(dir);
}

TEST_CASE("batch stream padding, masks and reshuffling") {
    ToySpec spec = small_spec();
    CorpusConfig cfg;
    cfg.n_train = 10;
    cfg.n_test_in = 2;
    cfg.n_test_out = 2;
    cfg.train_len_min = 3;
    cfg.train_len_max = 6;
    cfg.ood_len_min = 8;
    cfg.ood_len_max = 9;
    Corpus corpus = build_corpus(cfg, spec, 11);

    BatchStream stream(corpus, "train", 4, 77);
    CHECK(stream.batches_per_epoch() == 3);

    Batch b = stream.batch_at(0);
    CHECK(b.item_indices.size() == 4);
    for (std::size_t i = 0; i < b.item_indices.size(); ++i) {
        const Utterance& u = corpus.items[b.item_indices[i]];
        // every mask-true position corresponds to a real token / frame
        for (std::size_t t = 0; t < b.max_tokens; ++t) {
            CHECK(b.token_mask[i][t] == (t < u.tokens.length()));
            if (b.token_mask[i][t]) CHECK(b.tokens[i][t] == u.tokens.ids[t]);
        }
        for (std::size_t t = 0; t < b.max_frames; ++t) {
            CHECK(b.frame_mask[i][t] == (t < u.mel.num_frames()));
            if (b.frame_mask[i][t]) CHECK(b.mel[i][t] == u.mel.frames[t]);
        }
    }

    // batch_size 1: one utterance per batch, no padding
    BatchStream single(corpus, "train", 1, 77);
    Batch sb = single.batch_at(2);
    CHECK(sb.item_indices.size() == 1);
    CHECK(sb.max_tokens == corpus.items[sb.item_indices[0]].tokens.length());
    CHECK(sb.max_frames == corpus.items[sb.item_indices[0]].mel.num_frames());

    // epochs reshuffle but reproducibly
    auto epoch_ids = [&](std::size_t epoch) {
        std::vector<std::size_t> ids;
        for (std::size_t k = 0; k < stream.batches_per_epoch(); ++k) {
            Batch bb = stream.batch_at(epoch * stream.batches_per_epoch() + k);
            ids.insert(ids.end(), bb.item_indices.begin(), bb.item_indices.end());
        }
        return ids;
    };
    auto e0 = epoch_ids(0);
    auto e1 = epoch_ids(1);
    CHECK(e0 != e1);  // reshuffled
    auto e0sorted = e0;
    auto e1sorted = e1;
    std::sort(e0sorted.begin(), e0sorted.end());
    std::sort(e1sorted.begin(), e1sorted.end());
    CHECK(e0sorted == e1sorted);  // same items each epoch
    BatchStream stream2(corpus, "train", 4, 77);
    CHECK(stream2.batch_at(0).item_indices == stream.batch_at(0).item_indices);

    CHECK_THROWS_AS(BatchStream(corpus, "nope", 4, 1), InputError);
    CHECK_THROWS_AS(BatchStream(corpus, "train", 0, 1), ConfigError);
}
