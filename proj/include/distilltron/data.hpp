// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic corpus and text frontend. Each symbol owns a distinct dominant
// mel band, so the true frame-level alignment is known exactly and skip /
// repeat errors are mechanically countable. Every utterance ends with a
// terminal end-marker symbol that has its own band and duration.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "distilltron/dsp.hpp"

namespace distilltron {

struct Vocab {
    std::string symbols;  // symbols[id]; id 0 is padding, last id is the end marker

    static Vocab toy(std::size_t content_symbols);

    std::size_t size() const { return symbols.size(); }
    std::size_t pad_id() const { return 0; }
    std::size_t end_id() const { return symbols.size() - 1; }
    std::size_t content_count() const { return symbols.size() - 2; }
    char symbol_of(std::size_t id) const;
    std::size_t id_of(char symbol) const;  // throws InputError for unknown symbols
    bool contains(char symbol) const;
};

struct TokenSequence {
    std::vector<std::size_t> ids;
    std::size_t vocab_size = 0;

    std::size_t length() const { return ids.size(); }
    void validate() const;
};

TokenSequence tokenize(const std::string& text, const Vocab& vocab);

struct ToySpec {
    Vocab vocab;
    std::size_t n_mels = 80;
    std::size_t dur_min = 6;   // frames per symbol occurrence
    std::size_t dur_max = 12;
    double noise_level = 0.02;
    double peak_log = 0.0;
    double floor_log = -11.512925464970229;  // log(1e-5)
    double bandwidth = 1.5;                  // gaussian width of a symbol's band, in bins
    std::size_t hop = 256;                   // carried into generated spectrograms
    std::size_t sample_rate = 22050;

    void validate() const;
    // Dominant mel band of a symbol; distinct per symbol by construction.
    std::size_t band_center(std::size_t id) const;
    std::vector<double> symbol_template(std::size_t id) const;
};

// [start, end) frame interval per token; intervals partition [0, T').
using Alignment = std::vector<std::pair<std::size_t, std::size_t>>;

std::pair<MelSpectrogram, Alignment> synth_utterance(const TokenSequence& tokens,
                                                     const ToySpec& spec, std::uint64_t seed);

struct Utterance {
    std::string id;
    std::string split;  // train | test-in-domain | test-out-of-domain
    std::string text;   // includes the trailing end marker
    TokenSequence tokens;
    MelSpectrogram mel;
    Alignment alignment;
};

struct Corpus {
    Vocab vocab;
    ToySpec spec;
    std::vector<Utterance> items;

    std::vector<std::size_t> split_indices(const std::string& split) const;
    const Utterance& by_id(const std::string& id) const;
};

struct CorpusConfig {
    std::size_t n_train = 200;
    std::size_t n_test_in = 40;
    std::size_t n_test_out = 40;
    std::size_t train_len_min = 5;  // content symbols, excluding the end marker
    std::size_t train_len_max = 12;
    std::size_t ood_len_min = 20;
    std::size_t ood_len_max = 40;
};

Corpus build_corpus(const CorpusConfig& cfg, const ToySpec& spec, std::uint64_t seed);

// Manifest: one line per utterance
//   <id> <split> <token-string> <mel-path> <token_index:start:end>...
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);
std::string manifest_to_string(const Corpus& corpus);

struct Batch {
    std::vector<std::size_t> item_indices;  // into Corpus::items
    std::size_t max_tokens = 0;
    std::size_t max_frames = 0;
    // padded views; masks mark real (non-padding) positions
    std::vector<std::vector<std::size_t>> tokens;      // B x max_tokens, padded with pad_id
    std::vector<std::vector<bool>> token_mask;         // B x max_tokens
    std::vector<std::vector<std::vector<double>>> mel; // B x max_frames x n_mels
    std::vector<std::vector<bool>> frame_mask;         // B x max_frames
};

// Deterministic epoch-shuffled batch schedule. Pure function of
// (corpus, split, batch_size, seed): batch(step) reshuffles at each epoch
// boundary, so resuming a run at any step reproduces the original schedule.
class BatchStream {
public:
    BatchStream(const Corpus& corpus, std::string split, std::size_t batch_size, std::uint64_t seed);

    Batch batch_at(std::size_t step) const;
    std::size_t batches_per_epoch() const;

private:
    std::vector<std::size_t> epoch_order(std::size_t epoch) const;

    const Corpus* corpus_;
    std::string split_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::vector<std::size_t> indices_;
};

}  // namespace distilltron
