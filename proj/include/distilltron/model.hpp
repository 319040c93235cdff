// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sequence-to-sequence mel synthesis model: character embedding, a 3-layer
// conv + BiLSTM encoder, location-sensitive attention, a 2-LSTM autoregressive
// decoder emitting r mel frames and a stop logit per step, and a 5-layer conv
// post-net. Three run modes: teacher-forced, free-running, and scheduled
// sampling. The per-step hidden state exposed for distillation is the second
// decoder LSTM's output (configurable to the first for ablation).

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "distilltron/data.hpp"
#include "distilltron/rng.hpp"
#include "distilltron/tensor.hpp"

namespace distilltron {

struct ModelConfig {
    std::size_t vocab_size = 16;
    std::size_t embedding_dim = 32;
    std::size_t encoder_channels = 32;
    std::size_t encoder_kernel = 5;
    std::size_t encoder_lstm_dim = 16;  // per direction; memory dim = 2x
    std::size_t attention_dim = 32;
    std::size_t attention_filters = 8;
    std::size_t attention_kernel = 7;
    std::size_t prenet_dim = 32;
    std::size_t decoder_dim = 32;
    std::size_t n_mels = 80;
    std::size_t reduction = 2;  // mel frames per decoder step
    std::size_t postnet_channels = 32;
    std::size_t postnet_kernel = 5;
    double prenet_dropout = 0.5;
    double conv_dropout = 0.5;
    double stop_threshold = 0.5;
    std::size_t max_decoder_steps = 400;
    std::string distill_tap = "lstm2";  // lstm2 | lstm1
    double bn_momentum = 0.9;           // running-stat smoothing
    double bn_eps = 1e-5;

    std::size_t memory_dim() const { return 2 * encoder_lstm_dim; }
    std::size_t frame_group() const { return n_mels * reduction; }
    void validate() const;
};

struct ModelParams {
    struct Entry {
        std::string name;
        Tensor value;
        bool trainable = true;
    };

    ModelConfig cfg;
    std::vector<Entry> entries;

    void add(const std::string& name, Tensor value, bool trainable = true);
    bool has(const std::string& name) const;
    const Tensor& at(const std::string& name) const;
    Tensor& at_mut(const std::string& name);
    std::size_t total_parameters(bool trainable_only = true) const;
    std::uint64_t checksum() const;
    bool all_finite() const;
};

// Xavier-uniform init scaled by fan-in/out, LSTM forget-gate biases +1,
// batch-norm running stats (mean 0, var 1) stored as non-trainable buffers.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Binds parameters to an optional tape for one forward (and backward) pass.
// training=true enables dropout and live batch-norm statistics (which also
// update the running buffers); training=false uses running stats and no
// dropout. Dropout draws come from a dedicated Rng so decode-mode choices can
// never perturb the masks.
class ModelRun {
public:
    // update_bn_stats lets exactly one member of a parallel batch own the
    // running-stat updates; ignored outside training mode.
    ModelRun(ModelParams& params, Tape* tape, bool training, Rng dropout_rng,
             bool update_bn_stats = true);

    Tensor p(const std::string& name);
    const ModelConfig& cfg() const { return params_->cfg; }
    bool training() const { return training_; }
    Tape* tape() const { return tape_; }
    Tensor dropout(const Tensor& x, double rate);
    // Batch-norm over the length axis of a [C, L] activation.
    Tensor batch_norm(const Tensor& x, const std::string& prefix);

private:
    ModelParams* params_;
    Tape* tape_;
    bool training_;
    bool update_bn_stats_;
    Rng rng_;
    std::vector<std::pair<std::string, Tensor>> watched_;
};

struct EncoderOutputs {
    Tensor memory;  // [T, memory_dim]
};

EncoderOutputs encode(const TokenSequence& x, ModelRun& run);

struct AttentionState {
    Tensor prev_weights;  // [T], simplex
    Tensor cum_weights;   // [T], running sum of every weight vector so far
    Tensor context;       // [memory_dim]
};

AttentionState initial_attention(std::size_t T, ModelRun& run);

struct AttendResult {
    Tensor context;  // [memory_dim]
    Tensor weights;  // [T]
};

AttendResult attend(const Tensor& query, const EncoderOutputs& memory, const AttentionState& att,
                    ModelRun& run);

struct LstmState {
    Tensor h;
    Tensor c;
};

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const Tensor& w_ih, const Tensor& w_hh,
                    const Tensor& bias);

struct DecoderState {
    LstmState lstm1;
    LstmState lstm2;
    AttentionState att;
};

DecoderState initial_decoder_state(std::size_t T, ModelRun& run);

struct DecoderStepResult {
    DecoderState state;
    Tensor coarse;      // [reduction, n_mels]
    Tensor stop_logit;  // [1]
    Tensor hidden;      // distillation tap (LSTM2 h by default)
};

DecoderStepResult decoder_step(const DecoderState& state, const Tensor& prev_frame,
                               const EncoderOutputs& memory, ModelRun& run);

struct DecoderTrace {
    Tensor hidden;       // [T'_padded, decoder_dim]; one row per frame
    Tensor mel_coarse;   // [T'_padded, n_mels]
    Tensor mel_post;     // [T'_padded, n_mels]
    Tensor stop_logits;  // [steps]
    std::vector<std::vector<double>> attention;  // steps x T, plain values
    std::vector<bool> frame_mask;  // real frames (false on r-padding rows)
    std::size_t steps = 0;
    std::size_t frames = 0;  // padded frame count == hidden row count
};

// Test hook: invoked after each decoder step with the step index and the raw
// coarse prediction; whatever it returns is recorded as "the model's
// prediction" and, in self-feeding modes, fed to the next step.
using StepHook = std::function<Tensor(std::size_t step, const Tensor& coarse)>;

DecoderTrace forward_teacher_forced(const TokenSequence& x, const MelSpectrogram& y, ModelRun& run,
                                    const StepHook& hook = nullptr);

struct ForcedLength {
    std::size_t steps;
};
struct StopCriterion {
    std::size_t max_steps;
};
using RunLength = std::variant<ForcedLength, StopCriterion>;

DecoderTrace forward_free_running(const TokenSequence& x, ModelRun& run, const RunLength& length,
                                  const StepHook& hook = nullptr);

DecoderTrace forward_scheduled(const TokenSequence& x, const MelSpectrogram& y, ModelRun& run,
                               double p_teacher, Rng coin_rng, const StepHook& hook = nullptr);

// Frame-group padding: pads T' up to a multiple of the reduction factor by
// repeating the last frame. Returned mask is false on padding rows.
std::pair<std::vector<std::vector<double>>, std::vector<bool>> pad_frames_to_reduction(
    const MelSpectrogram& y, std::size_t reduction);

}  // namespace distilltron
