// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#include "distilltron/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "distilltron/rng.hpp"

namespace distilltron {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Vocab / tokenize
// ---------------------------------------------------------------------------

Vocab Vocab::toy(std::size_t content_symbols) {
    if (content_symbols < 2 || content_symbols > 26) {
        throw ConfigError(format_msg("toy vocab supports 2..26 content symbols, got ", content_symbols));
    }
    Vocab v;
    v.symbols = "_";
    for (std::size_t i = 0; i < content_symbols; ++i) {
        v.symbols.push_back(static_cast<char>('a' + i));
    }
    v.symbols.push_back('~');
    return v;
}

char Vocab::symbol_of(std::size_t id) const {
    if (id >= symbols.size()) throw InputError(format_msg("symbol id ", id, " out of range"));
    return symbols[id];
}

std::size_t Vocab::id_of(char symbol) const {
    const auto pos = symbols.find(symbol);
    if (pos == std::string::npos) {
        throw InputError(format_msg("unknown symbol '", std::string(1, symbol), "'"));
    }
    return pos;
}

bool Vocab::contains(char symbol) const {
    return symbols.find(symbol) != std::string::npos;
}

void TokenSequence::validate() const {
    if (ids.empty()) throw InputError("empty token sequence");
    for (std::size_t id : ids) {
        if (id >= vocab_size) {
            throw InputError(format_msg("token id ", id, " out of range for vocab of ", vocab_size));
        }
    }
}

TokenSequence tokenize(const std::string& text, const Vocab& vocab) {
    if (text.empty()) throw InputError("empty input text");
    TokenSequence seq;
    seq.vocab_size = vocab.size();
    seq.ids.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!vocab.contains(text[i])) {
            throw InputError(format_msg("unknown character '", std::string(1, text[i]),
                                        "' at position ", i));
        }
        seq.ids.push_back(vocab.id_of(text[i]));
    }
    return seq;
}

// ---------------------------------------------------------------------------
// ToySpec / synth_utterance
// ---------------------------------------------------------------------------

void ToySpec::validate() const {
    if (vocab.size() < 3) throw ConfigError("toy spec needs a vocab with content symbols");
    if (dur_min < 3) throw ConfigError(format_msg("symbol durations must be >= 3 frames, got ", dur_min));
    if (dur_max < dur_min) throw ConfigError("dur_max < dur_min");
    if (noise_level < 0.0) throw ConfigError("negative noise level");
    if (n_mels < vocab.size()) {
        throw ConfigError(format_msg(n_mels, " mel bands cannot give ", vocab.size() - 1,
                                     " symbols distinct dominant bands"));
    }
    // bands must be distinct (injective symbol -> band map)
    std::vector<std::size_t> seen;
    for (std::size_t id = 1; id < vocab.size(); ++id) {
        const std::size_t b = band_center(id);
        if (std::find(seen.begin(), seen.end(), b) != seen.end()) {
            throw ConfigError("symbol bands overlap; reduce the vocab or raise n_mels");
        }
        seen.push_back(b);
    }
}

std::size_t ToySpec::band_center(std::size_t id) const {
    // ids 1..V-1 (content symbols then the end marker) spread over the mel
    // axis with a small margin; padding (id 0) has no band.
    if (id == 0 || id >= vocab.size()) {
        throw InputError(format_msg("no spectral band for symbol id ", id));
    }
    const std::size_t usable = vocab.size() - 1;
    const double lo = 0.1 * static_cast<double>(n_mels);
    const double hi = 0.9 * static_cast<double>(n_mels - 1);
    const double pos = usable == 1
                           ? lo
                           : lo + (hi - lo) * static_cast<double>(id - 1) / static_cast<double>(usable - 1);
    return static_cast<std::size_t>(std::lround(pos));
}

std::vector<double> ToySpec::symbol_template(std::size_t id) const {
    const std::size_t center = band_center(id);
    std::vector<double> row(n_mels, floor_log);
    for (std::size_t b = 0; b < n_mels; ++b) {
        const double d = (static_cast<double>(b) - static_cast<double>(center)) / bandwidth;
        row[b] += (peak_log - floor_log) * std::exp(-0.5 * d * d);
    }
    return row;
}

std::pair<MelSpectrogram, Alignment> synth_utterance(const TokenSequence& tokens,
                                                     const ToySpec& spec, std::uint64_t seed) {
    tokens.validate();
    if (tokens.vocab_size != spec.vocab.size()) {
        throw InputError("token sequence vocab does not match the toy spec vocab");
    }
    Rng rng(seed);
    MelSpectrogram mel;
    mel.n_mels = spec.n_mels;
    mel.hop = spec.hop;
    mel.sample_rate = spec.sample_rate;
    Alignment align;
    align.reserve(tokens.ids.size());
    for (std::size_t id : tokens.ids) {
        if (id == spec.vocab.pad_id()) {
            throw InputError("cannot synthesize the padding symbol");
        }
        const std::size_t dur = spec.dur_min + rng.uniform_index(spec.dur_max - spec.dur_min + 1);
        const std::vector<double> tpl = spec.symbol_template(id);
        const std::size_t start = mel.frames.size();
        for (std::size_t f = 0; f < dur; ++f) {
            std::vector<double> row = tpl;
            if (spec.noise_level > 0.0) {
                for (double& v : row) v += spec.noise_level * rng.normal();
            }
            mel.frames.push_back(std::move(row));
        }
        align.emplace_back(start, mel.frames.size());
    }
    return {std::move(mel), std::move(align)};
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

std::vector<std::size_t> Corpus::split_indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].split == split) out.push_back(i);
    }
    return out;
}

const Utterance& Corpus::by_id(const std::string& id) const {
    for (const auto& u : items) {
        if (u.id == id) return u;
    }
    throw InputError(format_msg("no utterance with id ", id));
}

namespace {

std::string make_text(const Vocab& vocab, std::size_t content_len, Rng& rng) {
    std::string text;
    text.reserve(content_len + 1);
    for (std::size_t i = 0; i < content_len; ++i) {
        text.push_back(vocab.symbol_of(1 + rng.uniform_index(vocab.content_count())));
    }
    text.push_back(vocab.symbol_of(vocab.end_id()));
    return text;
}

Utterance make_utterance(const std::string& id, const std::string& split, const std::string& text,
                         const ToySpec& spec, std::uint64_t seed) {
    Utterance u;
    u.id = id;
    u.split = split;
    u.text = text;
    u.tokens = tokenize(text, spec.vocab);
    auto [mel, align] = synth_utterance(u.tokens, spec, seed);
    u.mel = std::move(mel);
    u.alignment = std::move(align);
    return u;
}

}  // namespace

Corpus build_corpus(const CorpusConfig& cfg, const ToySpec& spec, std::uint64_t seed) {
    spec.validate();
    if (cfg.train_len_min < 1 || cfg.train_len_min > cfg.train_len_max) {
        throw ConfigError("invalid train length range");
    }
    if (cfg.ood_len_min > cfg.ood_len_max) throw ConfigError("invalid out-of-domain length range");
    if (cfg.ood_len_min <= cfg.train_len_max) {
        throw ConfigError(format_msg("out-of-domain lengths must exceed the training maximum: ",
                                     cfg.ood_len_min, " <= ", cfg.train_len_max));
    }
    if (cfg.n_train == 0) throw ConfigError("empty training split");

    Corpus corpus;
    corpus.vocab = spec.vocab;
    corpus.spec = spec;
    Rng root(seed);
    std::size_t counter = 0;
    auto add = [&](const std::string& prefix, const std::string& split, std::size_t count,
                   std::size_t len_min, std::size_t len_max) {
        Rng lens = root.stream(split + ".lengths");
        for (std::size_t i = 0; i < count; ++i) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "%s%04zu", prefix.c_str(), i);
            const std::size_t len = len_min + lens.uniform_index(len_max - len_min + 1);
            Rng text_rng = root.stream("text", counter);
            const std::string text = make_text(spec.vocab, len, text_rng);
            corpus.items.push_back(
                make_utterance(idbuf, split, text, spec, root.stream("audio", counter).seed()));
            ++counter;
        }
    };
    add("trn", "train", cfg.n_train, cfg.train_len_min, cfg.train_len_max);
    add("tin", "test-in-domain", cfg.n_test_in, cfg.train_len_min, cfg.train_len_max);
    add("ood", "test-out-of-domain", cfg.n_test_out, cfg.ood_len_min, cfg.ood_len_max);

    // out-of-domain sequences must be strictly longer than any training one
    std::size_t train_max = 0;
    for (const auto& u : corpus.items) {
        if (u.split == "train") train_max = std::max(train_max, u.tokens.length());
    }
    for (const auto& u : corpus.items) {
        if (u.split == "test-out-of-domain" && u.tokens.length() <= train_max) {
            throw ContractError("out-of-domain utterance not longer than the training maximum");
        }
    }
    return corpus;
}

std::string manifest_to_string(const Corpus& corpus) {
    std::ostringstream out;
    for (const auto& u : corpus.items) {
        out << u.id << " " << u.split << " " << u.text << " mel/" << u.id << ".melspec";
        for (std::size_t k = 0; k < u.alignment.size(); ++k) {
            out << " " << k << ":" << u.alignment[k].first << ":" << u.alignment[k].second;
        }
        out << "\n";
    }
    return out.str();
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "mel");
    for (const auto& u : corpus.items) {
        write_melspec((fs::path(dir) / "mel" / (u.id + ".melspec")).string(), u.mel);
    }
    std::ofstream manifest(fs::path(dir) / "manifest.txt", std::ios::binary);
    if (!manifest) throw InputError(format_msg("cannot write manifest under ", dir));
    manifest << "CORPUS v1 vocab=" << corpus.vocab.symbols << " n_mels=" << corpus.spec.n_mels
             << " dur=" << corpus.spec.dur_min << ":" << corpus.spec.dur_max
             << " noise=" << corpus.spec.noise_level << "\n";
    manifest << manifest_to_string(corpus);
}

Corpus load_corpus(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt", std::ios::binary);
    if (!manifest) throw InputError(format_msg("no manifest.txt under ", dir));
    std::string header;
    if (!std::getline(manifest, header)) throw ParseError("empty manifest");
    std::istringstream hs(header);
    std::string magic, field;
    hs >> magic;
    if (magic != "CORPUS") throw ParseError("manifest missing CORPUS header");
    Corpus corpus;
    ToySpec spec;
    while (hs >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "vocab") {
            spec.vocab.symbols = value;
        } else if (key == "n_mels") {
            spec.n_mels = std::stoul(value);
        } else if (key == "dur") {
            const auto colon = value.find(':');
            spec.dur_min = std::stoul(value.substr(0, colon));
            spec.dur_max = std::stoul(value.substr(colon + 1));
        } else if (key == "noise") {
            spec.noise_level = std::stod(value);
        }
    }
    corpus.vocab = spec.vocab;
    corpus.spec = spec;

    std::string line;
    std::size_t line_no = 1;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Utterance u;
        std::string relpath;
        if (!(ls >> u.id >> u.split >> u.text >> relpath)) {
            throw ParseError(format_msg("manifest line ", line_no, " malformed"));
        }
        u.tokens = tokenize(u.text, corpus.vocab);
        std::string triple;
        while (ls >> triple) {
            const auto c1 = triple.find(':');
            const auto c2 = triple.find(':', c1 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos) {
                throw ParseError(format_msg("manifest line ", line_no, ": bad alignment ", triple));
            }
            u.alignment.emplace_back(std::stoul(triple.substr(c1 + 1, c2 - c1 - 1)),
                                     std::stoul(triple.substr(c2 + 1)));
        }
        if (u.alignment.size() != u.tokens.length()) {
            throw ParseError(format_msg("manifest line ", line_no, ": alignment count mismatch"));
        }
        u.mel = read_melspec((fs::path(dir) / relpath).string());
        corpus.items.push_back(std::move(u));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// BatchStream
// ---------------------------------------------------------------------------

BatchStream::BatchStream(const Corpus& corpus, std::string split, std::size_t batch_size,
                         std::uint64_t seed)
    : corpus_(&corpus), split_(std::move(split)), batch_size_(batch_size), seed_(seed) {
    if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
    indices_ = corpus.split_indices(split_);
    if (indices_.empty()) throw InputError(format_msg("split '", split_, "' is empty"));
}

std::size_t BatchStream::batches_per_epoch() const {
    return (indices_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> BatchStream::epoch_order(std::size_t epoch) const {
    std::vector<std::size_t> order = indices_;
    Rng rng = Rng(seed_).stream("shuffle", epoch);
    rng.shuffle(order);
    return order;
}

Batch BatchStream::batch_at(std::size_t step) const {
    const std::size_t per_epoch = batches_per_epoch();
    const std::size_t epoch = step / per_epoch;
    const std::size_t slot = step % per_epoch;
    const std::vector<std::size_t> order = epoch_order(epoch);
    const std::size_t begin = slot * batch_size_;
    const std::size_t end = std::min(begin + batch_size_, order.size());

    Batch batch;
    batch.item_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t idx : batch.item_indices) {
        const Utterance& u = corpus_->items[idx];
        batch.max_tokens = std::max(batch.max_tokens, u.tokens.length());
        batch.max_frames = std::max(batch.max_frames, u.mel.num_frames());
    }
    const std::size_t pad_id = corpus_->vocab.pad_id();
    for (std::size_t idx : batch.item_indices) {
        const Utterance& u = corpus_->items[idx];
        std::vector<std::size_t> toks(batch.max_tokens, pad_id);
        std::vector<bool> tmask(batch.max_tokens, false);
        for (std::size_t i = 0; i < u.tokens.length(); ++i) {
            toks[i] = u.tokens.ids[i];
            tmask[i] = true;
        }
        batch.tokens.push_back(std::move(toks));
        batch.token_mask.push_back(std::move(tmask));

        std::vector<std::vector<double>> mel(batch.max_frames);
        std::vector<bool> fmask(batch.max_frames, false);
        for (std::size_t t = 0; t < batch.max_frames; ++t) {
            if (t < u.mel.num_frames()) {
                mel[t] = u.mel.frames[t];
                fmask[t] = true;
            } else {
                mel[t] = u.mel.frames.back();  // benign padding; masked out of losses
            }
        }
        batch.mel.push_back(std::move(mel));
        batch.frame_mask.push_back(std::move(fmask));
    }
    return batch;
}

}  // namespace distilltron
