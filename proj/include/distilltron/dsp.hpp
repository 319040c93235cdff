// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0
//
// Signal path: STFT/ISTFT (Hann, centered with reflect padding), mel
// filterbank analysis, Griffin-Lim phase reconstruction, and the MELSPEC v1
// dump format. All operations are pure: same inputs (and seed) give identical
// outputs.

#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "distilltron/common.hpp"

namespace distilltron {

struct AudioSignal {
    std::vector<double> samples;  // in [-1, 1]
    std::size_t sample_rate = 22050;
};

struct MelSpectrogram {
    // frames[t] is a row of n_mels log-magnitude mel energies.
    std::vector<std::vector<double>> frames;
    std::size_t n_mels = 80;
    std::size_t hop = 256;
    std::size_t sample_rate = 22050;

    std::size_t num_frames() const { return frames.size(); }
    void validate() const;  // row lengths, finiteness
};

struct LinearSpectrogram {
    std::vector<std::vector<double>> frames;  // T' x (fft_size/2 + 1) magnitudes, >= 0
    std::size_t fft_size = 1024;
    std::size_t hop = 256;
    std::size_t sample_rate = 22050;

    std::size_t num_frames() const { return frames.size(); }
    std::size_t num_bins() const { return fft_size / 2 + 1; }
};

struct ComplexSpectrogram {
    std::vector<std::vector<std::complex<double>>> frames;
    std::size_t fft_size = 1024;
    std::size_t hop = 256;
    std::size_t sample_rate = 22050;
};

struct AudioConfig {
    std::size_t sample_rate = 22050;
    std::size_t fft_size = 1024;   // power of two
    std::size_t hop = 256;
    std::size_t n_mels = 80;
    double f_min = 0.0;
    double f_max = 8000.0;
    std::size_t griffin_lim_iters = 60;
    double log_floor = 1e-5;
};

// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Hann-windowed centered STFT. The signal is reflect-padded by fft_size/2 on
// both sides; the frame count is floor((padded_len - fft_size) / hop) + 1.
ComplexSpectrogram stft(const AudioSignal& signal, std::size_t fft_size, std::size_t hop);

// Overlap-add inverse with window-square normalization; returns out_len
// samples aligned with the original (un-padded) signal.
AudioSignal istft(const ComplexSpectrogram& spec, std::size_t out_len);

// Triangular filters on the mel scale m = 2595*log10(1 + f/700); rows are
// filters, columns FFT bins.
std::vector<std::vector<double>> mel_filterbank(std::size_t n_mels, std::size_t fft_size,
                                                std::size_t sample_rate, double f_min, double f_max);

MelSpectrogram wav_to_mel(const AudioSignal& signal, const AudioConfig& cfg);

LinearSpectrogram mel_to_linear(const MelSpectrogram& mel,
                                const std::vector<std::vector<double>>& filterbank,
                                const AudioConfig& cfg);

struct GriffinLimResult {
    AudioSignal audio;
    // ||S_est| - |S_target||_F / ||S_target||_F recorded per iteration.
    std::vector<double> convergence;
};

GriffinLimResult griffin_lim(const LinearSpectrogram& magnitude, std::size_t iterations,
                             std::uint64_t seed);

// MELSPEC v1 dump: header `MELSPEC v1 <T'> <n_mels> <hop> <sample_rate>`
// followed by T' whitespace-separated rows of n_mels decimal floats.
void write_melspec(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram read_melspec(const std::string& path);
std::string melspec_to_string(const MelSpectrogram& mel);
MelSpectrogram melspec_from_string(const std::string& text);

}  // namespace distilltron
