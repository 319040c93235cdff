// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#include "distilltron/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace distilltron {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
        pos_ += 4;
        return v;
    }

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(
            static_cast<unsigned char>(bytes_[pos_]) |
            (static_cast<unsigned char>(bytes_[pos_ + 1]) << 8));
        pos_ += 2;
        return v;
    }

    std::string tag() {
        need(4);
        std::string t = bytes_.substr(pos_, 4);
        pos_ += 4;
        return t;
    }

    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    const char* data_at(std::size_t n) {
        need(n);
        return bytes_.data() + pos_;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(format_msg("malformed WAV ", path_, ": ", what, " at byte ", pos_));
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw ParseError(format_msg("malformed WAV ", path_, ": truncated (need ", n,
                                        " bytes) at byte ", pos_));
        }
    }

    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t wav_write(const std::string& path, const AudioSignal& signal) {
    if (signal.sample_rate == 0) throw ConfigError("wav_write requires a positive sample rate");
    std::size_t clipped = 0;
    std::string pcm;
    pcm.reserve(signal.samples.size() * 2);
    for (double s : signal.samples) {
        if (!std::isfinite(s)) throw InputError("wav_write: non-finite sample");
        double c = s;
        if (c > 1.0) {
            c = 1.0;
            ++clipped;
        } else if (c < -1.0) {
            c = -1.0;
            ++clipped;
        }
        const auto q = static_cast<std::int16_t>(std::lrint(c * 32767.0));
        put_u16(pcm, static_cast<std::uint16_t>(q));
    }

    std::string out;
    out += "RIFF";
    put_u32(out, static_cast<std::uint32_t>(36 + pcm.size()));
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(signal.sample_rate * 2));  // byte rate
    put_u16(out, 2);   // block align
    put_u16(out, 16);  // bits per sample
    out += "data";
    put_u32(out, static_cast<std::uint32_t>(pcm.size()));
    out += pcm;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError(format_msg("cannot open ", path, " for writing"));
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError(format_msg("short write to ", path));
    return clipped;
}

AudioSignal wav_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError(format_msg("cannot open ", path));
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(bytes, path);

    if (r.tag() != "RIFF") r.fail("missing RIFF tag");
    r.u32();  // riff size; not trusted
    if (r.tag() != "WAVE") r.fail("missing WAVE tag");

    bool have_fmt = false;
    std::uint16_t channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    AudioSignal out;
    bool have_data = false;
    while (r.remaining() >= 8) {
        const std::string chunk = r.tag();
        const std::uint32_t size = r.u32();
        if (chunk == "fmt ") {
            if (size < 16) r.fail("fmt chunk too small");
            const std::uint16_t format = r.u16();
            channels = r.u16();
            sample_rate = r.u32();
            r.u32();  // byte rate
            r.u16();  // block align
            bits = r.u16();
            if (size > 16) r.skip(size - 16);
            if (format != 1) r.fail(format_msg("unsupported format code ", format, " (want PCM)"));
            if (channels != 1) r.fail(format_msg("unsupported channel count ", channels, " (want mono)"));
            if (bits != 16) r.fail(format_msg("unsupported bit depth ", bits, " (want 16)"));
            have_fmt = true;
        } else if (chunk == "data") {
            if (!have_fmt) r.fail("data chunk before fmt chunk");
            if (size % 2 != 0) r.fail("odd data chunk size for 16-bit samples");
            const char* p = r.data_at(size);
            out.samples.resize(size / 2);
            for (std::size_t i = 0; i < out.samples.size(); ++i) {
                const auto lo = static_cast<unsigned char>(p[2 * i]);
                const auto hi = static_cast<unsigned char>(p[2 * i + 1]);
                const auto q = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
                out.samples[i] = static_cast<double>(q) / 32767.0;
            }
            r.skip(size);
            have_data = true;
        } else {
            // unknown chunk: skip payload (padded to even size)
            r.skip(size + (size % 2));
        }
    }
    if (!have_fmt) r.fail("missing fmt chunk");
    if (!have_data) r.fail("missing data chunk");
    out.sample_rate = sample_rate;
    return out;
}

}  // namespace distilltron
