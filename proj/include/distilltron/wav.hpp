// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0
//
// 16-bit PCM mono little-endian RIFF/WAVE reading and writing.

#pragma once

#include <string>

#include "distilltron/dsp.hpp"

namespace distilltron {

// Samples outside [-1, 1] are clipped; returns how many were.
std::size_t wav_write(const std::string& path, const AudioSignal& signal);

// Throws ParseError (with the byte offset) on malformed input.
AudioSignal wav_read(const std::string& path);

}  // namespace distilltron
