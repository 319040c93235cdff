// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#include "distilltron/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "distilltron/rng.hpp"

namespace distilltron {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_power_of_two(std::size_t n) {
    return n != 0 && (n & (n - 1)) == 0;
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n)));
    }
    return w;
}

// Reflect-pad lookup: indices bounce off the signal ends without repeating
// the edge sample.
double reflect_at(const std::vector<double>& x, std::ptrdiff_t i) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return x[static_cast<std::size_t>(i)];
}

double hz_to_mel(double f) {
    return 2595.0 * std::log10(1.0 + f / 700.0);
}

double mel_to_hz(double m) {
    return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

void format_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

void MelSpectrogram::validate() const {
    if (frames.empty()) throw InputError("mel spectrogram has no frames");
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (frames[t].size() != n_mels) {
            throw DimensionError(format_msg("mel frame ", t, " has ", frames[t].size(),
                                            " channels, expected ", n_mels));
        }
        if (!all_finite(frames[t])) {
            throw InputError(format_msg("mel frame ", t, " contains non-finite values"));
        }
    }
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) {
        throw ConfigError(format_msg("fft size must be a power of two, got ", n));
    }
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

ComplexSpectrogram stft(const AudioSignal& signal, std::size_t fft_size, std::size_t hop) {
    if (!is_power_of_two(fft_size)) {
        throw ConfigError(format_msg("stft fft_size must be a power of two, got ", fft_size));
    }
    if (hop == 0 || hop > fft_size) {
        throw ConfigError(format_msg("stft hop must satisfy 0 < hop <= fft_size, got ", hop));
    }
    const std::size_t n = signal.samples.size();
    if (n < fft_size) {
        throw InputError(format_msg("signal of ", n, " samples is shorter than one frame (", fft_size, ")"));
    }
    const std::size_t pad = fft_size / 2;
    const std::size_t padded = n + 2 * pad;
    const std::size_t num_frames = (padded - fft_size) / hop + 1;
    const std::vector<double> window = hann_window(fft_size);
    const std::size_t bins = fft_size / 2 + 1;

    ComplexSpectrogram out;
    out.fft_size = fft_size;
    out.hop = hop;
    out.sample_rate = signal.sample_rate;
    out.frames.resize(num_frames);

    std::vector<std::complex<double>> buf(fft_size);
    for (std::size_t f = 0; f < num_frames; ++f) {
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f * hop) - static_cast<std::ptrdiff_t>(pad);
        for (std::size_t i = 0; i < fft_size; ++i) {
            buf[i] = window[i] * reflect_at(signal.samples, start + static_cast<std::ptrdiff_t>(i));
        }
        fft(buf, false);
        out.frames[f].assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(bins));
    }
    return out;
}

AudioSignal istft(const ComplexSpectrogram& spec, std::size_t out_len) {
    const std::size_t fft_size = spec.fft_size;
    const std::size_t hop = spec.hop;
    const std::size_t pad = fft_size / 2;
    const std::size_t num_frames = spec.frames.size();
    if (num_frames == 0) throw InputError("istft on an empty spectrogram");
    const std::vector<double> window = hann_window(fft_size);
    const std::size_t total = (num_frames - 1) * hop + fft_size;

    std::vector<double> acc(total, 0.0);
    std::vector<double> wsum(total, 0.0);
    std::vector<std::complex<double>> buf(fft_size);
    for (std::size_t f = 0; f < num_frames; ++f) {
        const auto& half = spec.frames[f];
        if (half.size() != fft_size / 2 + 1) {
            throw DimensionError(format_msg("istft frame ", f, " has ", half.size(), " bins, expected ",
                                            fft_size / 2 + 1));
        }
        for (std::size_t i = 0; i <= fft_size / 2; ++i) buf[i] = half[i];
        for (std::size_t i = fft_size / 2 + 1; i < fft_size; ++i) buf[i] = std::conj(half[fft_size - i]);
        fft(buf, true);
        const std::size_t base = f * hop;
        for (std::size_t i = 0; i < fft_size; ++i) {
            acc[base + i] += window[i] * buf[i].real();
            wsum[base + i] += window[i] * window[i];
        }
    }
    AudioSignal out;
    out.sample_rate = spec.sample_rate;
    out.samples.resize(out_len, 0.0);
    for (std::size_t i = 0; i < out_len; ++i) {
        const std::size_t j = i + pad;
        if (j < total && wsum[j] > 1e-11) out.samples[i] = acc[j] / wsum[j];
    }
    return out;
}

std::vector<std::vector<double>> mel_filterbank(std::size_t n_mels, std::size_t fft_size,
                                                std::size_t sample_rate, double f_min, double f_max) {
    if (!(f_min >= 0.0 && f_min < f_max && f_max <= static_cast<double>(sample_rate) / 2.0)) {
        throw ConfigError(format_msg("mel range must satisfy 0 <= f_min < f_max <= sr/2, got [",
                                     f_min, ", ", f_max, "] at sr ", sample_rate));
    }
    const std::size_t bins = fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(f_min);
    const double mel_hi = hz_to_mel(f_max);
    std::vector<double> centers(n_mels + 2);
    for (std::size_t i = 0; i < n_mels + 2; ++i) {
        centers[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                            static_cast<double>(n_mels + 1));
    }
    std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double left = centers[m];
        const double center = centers[m + 1];
        const double right = centers[m + 2];
        bool any = false;
        for (std::size_t b = 0; b < bins; ++b) {
            const double f = static_cast<double>(b) * bin_hz;
            double w = 0.0;
            if (f > left && f < center) {
                w = (f - left) / (center - left);
            } else if (f == center) {
                w = 1.0;
            } else if (f > center && f < right) {
                w = (right - f) / (right - center);
            }
            if (w > 0.0) {
                fb[m][b] = w;
                any = true;
            }
        }
        if (!any) {
            throw ConfigError(format_msg("mel filter ", m, " is empty: ", n_mels,
                                         " filters exceed the FFT resolution of ", fft_size,
                                         " at sr ", sample_rate));
        }
    }
    return fb;
}

MelSpectrogram wav_to_mel(const AudioSignal& signal, const AudioConfig& cfg) {
    const ComplexSpectrogram spec = stft(signal, cfg.fft_size, cfg.hop);
    const auto fb = mel_filterbank(cfg.n_mels, cfg.fft_size, cfg.sample_rate, cfg.f_min, cfg.f_max);
    const std::size_t bins = cfg.fft_size / 2 + 1;
    MelSpectrogram mel;
    mel.n_mels = cfg.n_mels;
    mel.hop = cfg.hop;
    mel.sample_rate = cfg.sample_rate;
    mel.frames.resize(spec.frames.size());
    std::vector<double> mag(bins);
    for (std::size_t t = 0; t < spec.frames.size(); ++t) {
        for (std::size_t b = 0; b < bins; ++b) mag[b] = std::abs(spec.frames[t][b]);
        auto& row = mel.frames[t];
        row.assign(cfg.n_mels, 0.0);
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            for (std::size_t b = 0; b < bins; ++b) acc += fb[m][b] * mag[b];
            row[m] = std::log(std::max(acc, cfg.log_floor));
        }
    }
    return mel;
}

LinearSpectrogram mel_to_linear(const MelSpectrogram& mel,
                                const std::vector<std::vector<double>>& filterbank,
                                const AudioConfig& cfg) {
    mel.validate();
    if (filterbank.size() != mel.n_mels) {
        throw DimensionError(format_msg("filterbank has ", filterbank.size(), " filters, mel has ",
                                        mel.n_mels, " channels"));
    }
    const std::size_t bins = cfg.fft_size / 2 + 1;
    for (const auto& row : filterbank) {
        if (row.size() != bins) {
            throw DimensionError(format_msg("filterbank row has ", row.size(), " bins, expected ", bins));
        }
    }
    LinearSpectrogram out;
    out.fft_size = cfg.fft_size;
    out.hop = mel.hop;
    out.sample_rate = mel.sample_rate;
    out.frames.assign(mel.num_frames(), std::vector<double>(bins, 0.0));
    for (std::size_t t = 0; t < mel.num_frames(); ++t) {
        for (std::size_t m = 0; m < mel.n_mels; ++m) {
            const double e = std::exp(mel.frames[t][m]);
            for (std::size_t b = 0; b < bins; ++b) {
                out.frames[t][b] += filterbank[m][b] * e;
            }
        }
        for (double& v : out.frames[t]) v = std::max(v, 0.0);
    }
    return out;
}

GriffinLimResult griffin_lim(const LinearSpectrogram& magnitude, std::size_t iterations,
                             std::uint64_t seed) {
    if (iterations < 1) throw ConfigError("griffin_lim requires iterations >= 1");
    if (magnitude.frames.empty()) throw InputError("griffin_lim on an empty spectrogram");
    for (const auto& row : magnitude.frames) {
        if (!all_finite(row)) throw InputError("griffin_lim magnitudes must be finite");
    }
    const std::size_t bins = magnitude.num_bins();
    const std::size_t num_frames = magnitude.num_frames();
    // At least one analysis frame so the iteration can re-run stft.
    const std::size_t out_len = std::max((num_frames - 1) * magnitude.hop, magnitude.fft_size);

    double target_norm = 0.0;
    for (const auto& row : magnitude.frames) {
        for (double v : row) target_norm += v * v;
    }
    target_norm = std::sqrt(target_norm);

    Rng rng(seed);
    ComplexSpectrogram spec;
    spec.fft_size = magnitude.fft_size;
    spec.hop = magnitude.hop;
    spec.sample_rate = magnitude.sample_rate;
    spec.frames.assign(num_frames, std::vector<std::complex<double>>(bins));
    for (std::size_t t = 0; t < num_frames; ++t) {
        for (std::size_t b = 0; b < bins; ++b) {
            const double phase = rng.uniform(-kPi, kPi);
            spec.frames[t][b] = std::polar(magnitude.frames[t][b], phase);
        }
    }

    GriffinLimResult result;
    result.convergence.reserve(iterations);
    AudioSignal x;
    for (std::size_t it = 0; it < iterations; ++it) {
        x = istft(spec, out_len);
        ComplexSpectrogram est = stft(x, magnitude.fft_size, magnitude.hop);
        // est frame count can exceed the target by edge effects; compare the
        // overlapping prefix and keep the target's frame count.
        double err = 0.0;
        for (std::size_t t = 0; t < num_frames; ++t) {
            const auto& row = t < est.frames.size() ? est.frames[t] : est.frames.back();
            for (std::size_t b = 0; b < bins; ++b) {
                const double d = std::abs(row[b]) - magnitude.frames[t][b];
                err += d * d;
            }
        }
        result.convergence.push_back(target_norm > 0.0 ? std::sqrt(err) / target_norm : 0.0);
        for (std::size_t t = 0; t < num_frames; ++t) {
            const auto& row = t < est.frames.size() ? est.frames[t] : est.frames.back();
            for (std::size_t b = 0; b < bins; ++b) {
                const double phase = std::arg(row[b]);
                spec.frames[t][b] = std::polar(magnitude.frames[t][b], phase);
            }
        }
    }
    result.audio = istft(spec, out_len);
    result.audio.sample_rate = magnitude.sample_rate;
    return result;
}

std::string melspec_to_string(const MelSpectrogram& mel) {
    mel.validate();
    std::string out;
    out += "MELSPEC v1 ";
    out += std::to_string(mel.num_frames());
    out += " ";
    out += std::to_string(mel.n_mels);
    out += " ";
    out += std::to_string(mel.hop);
    out += " ";
    out += std::to_string(mel.sample_rate);
    out += "\n";
    for (const auto& row : mel.frames) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += " ";
            format_double(out, row[i]);
        }
        out += "\n";
    }
    return out;
}

MelSpectrogram melspec_from_string(const std::string& text) {
    std::istringstream in(text);
    std::string magic, version;
    std::size_t t_count = 0;
    MelSpectrogram mel;
    if (!(in >> magic >> version >> t_count >> mel.n_mels >> mel.hop >> mel.sample_rate) ||
        magic != "MELSPEC" || version != "v1") {
        throw ParseError("malformed MELSPEC header");
    }
    mel.frames.assign(t_count, std::vector<double>(mel.n_mels));
    for (std::size_t t = 0; t < t_count; ++t) {
        for (std::size_t m = 0; m < mel.n_mels; ++m) {
            if (!(in >> mel.frames[t][m])) {
                throw ParseError(format_msg("MELSPEC truncated at frame ", t, " channel ", m));
            }
        }
    }
    return mel;
}

void write_melspec(const std::string& path, const MelSpectrogram& mel) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError(format_msg("cannot open ", path, " for writing"));
    out << melspec_to_string(mel);
}

MelSpectrogram read_melspec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(format_msg("cannot open ", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return melspec_from_string(buf.str());
}

}  // namespace distilltron
