// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training: feature / distillation / stop losses, Adam with decoupled L2,
// the exponential learning-rate schedule, and the two-step teacher-student
// scheme plus scheduled-sampling and free-running baselines.
//
// All randomness is drawn from streams derived per (seed, purpose, step,
// member), so runs are reproducible, resumable mid-schedule, and decode-mode
// coin flips can never perturb dropout masks.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "distilltron/data.hpp"
#include "distilltron/model.hpp"

namespace distilltron {

struct TrainConfig {
    double lambda = 1.0;  // distillation trade-off
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double lr_start = 1e-3;
    double lr_end = 1e-5;
    std::size_t decay_start_step = 1000;
    std::size_t total_steps = 3000;
    double l2_weight = 1e-6;
    std::size_t batch_size = 8;
    double stop_weight = 1.0;
    double stop_pos_weight = 5.0;
    double ss_p_start = 1.0;  // scheduled-sampling anneal
    double ss_p_end = 0.5;
    std::size_t checkpoint_every = 500;
    std::uint64_t seed = 1234;      // shuffle / dropout / sampling coins
    std::uint64_t init_seed = 42;   // parameter init
    std::size_t workers = 0;        // 0 = hardware concurrency
    bool student_cold_start = false;
    bool freeze_student_encoder = false;

    void validate() const;
};

// Eq-style loss bookkeeping: total = feature + lambda*distill
//                                   + stop_weight*stop + l2_weight*l2.
struct LossBreakdown {
    double feature = 0.0;
    double distill = 0.0;
    double stop = 0.0;
    double l2 = 0.0;
    double lambda = 0.0;
    double stop_weight = 0.0;
    double l2_weight = 0.0;
    double total = 0.0;

    static LossBreakdown assemble(double feature, double distill, double stop, double l2,
                                  const TrainConfig& cfg);
    double recompute_total() const;
};

// Sum of squared L2 distances of both decoder outputs to the target over
// unmasked frames, normalized by the unmasked frame count.
Tensor feature_loss(const Tensor& coarse, const Tensor& post, const Tensor& target,
                    const std::vector<bool>& mask, bool* fully_masked = nullptr);

// Mean over steps of the squared Euclidean distance between corresponding
// hidden states. Gradients flow only into tracked arguments; pass the teacher
// side untracked to keep it frozen.
Tensor distillation_loss(const Tensor& teacher_hidden, const Tensor& student_hidden,
                         const std::vector<bool>* mask = nullptr);

// Weighted binary cross-entropy on stop logits, mean over unmasked steps.
Tensor stop_token_loss(const Tensor& logits, const std::vector<double>& targets,
                       const std::vector<bool>& mask, double pos_weight,
                       bool* fully_masked = nullptr);

// lr_start until decay_start_step, then geometric interpolation to lr_end at
// total_steps, clamped at lr_end afterwards.
double lr_schedule(std::size_t step, const TrainConfig& cfg);

// 0.5 * sum(theta^2) over trainable parameters; pairs with the l2_weight*theta
// gradient term added inside adam_step.
double l2_penalty(const ModelParams& params);

struct OptState {
    std::size_t step = 0;  // completed updates
    struct Slot {
        std::string name;
        Tensor m;
        Tensor v;
    };
    std::vector<Slot> slots;

    Slot& slot_for(const std::string& name, const std::vector<std::size_t>& shape);
};

// Standard Adam with bias correction; the decoupled L2 term l2_weight*theta is
// added to each gradient. Throws on non-finite gradients, naming the
// parameter, without touching any parameter.
void adam_step(ModelParams& params,
               const std::vector<std::pair<std::string, std::vector<double>>>& grads,
               OptState& opt, double lr, const TrainConfig& cfg);

enum class TrainRole { Teacher, Student, BaselineSS, BaselineFR };
std::string role_name(TrainRole role);

struct TrainLogEntry {
    std::size_t step = 0;
    double lr = 0.0;
    LossBreakdown loss;
    double p_teacher = 0.0;
};

// `step=<n> lr=<v> loss_f=<v> loss_d=<v> loss_stop=<v> loss_total=<v>` plus
// trailing loss_l2= and p_teacher= columns (17 significant digits, so parsed
// values round-trip exactly).
std::string format_log_line(const TrainLogEntry& e);
TrainLogEntry parse_log_line(const std::string& line, const TrainConfig& cfg);

struct TrainHooks {
    std::function<void(std::size_t step, const ModelParams&, const OptState&)> on_checkpoint;
    std::function<void(const TrainLogEntry&)> on_log;
    std::function<void(const std::string&)> on_warning;
};

struct TrainResult {
    ModelParams params;
    OptState opt;
    std::vector<TrainLogEntry> log;
    bool diverged = false;
    std::size_t steps_completed = 0;
};

struct ResumeState {
    ModelParams params;
    OptState opt;
    std::size_t step = 0;
};

TrainResult train_teacher(const Corpus& corpus, const ModelConfig& mcfg, const TrainConfig& tcfg,
                          const TrainHooks& hooks = {},
                          const std::optional<ResumeState>& resume = std::nullopt);

// Teacher runs teacher-forced in eval mode with gradients disabled; the
// student runs forced-length free running. Teacher parameters are checksummed
// every epoch. The student warm-starts from the teacher unless
// student_cold_start is set.
TrainResult train_student(const Corpus& corpus, const ModelParams& teacher, const TrainConfig& tcfg,
                          const TrainHooks& hooks = {},
                          const std::optional<ResumeState>& resume = std::nullopt);

// mode must be BaselineSS or BaselineFR; init_from (optional) seeds the
// parameters from an existing model instead of a fresh init.
TrainResult train_baseline(TrainRole mode, const Corpus& corpus, const ModelConfig& mcfg,
                           const TrainConfig& tcfg, const TrainHooks& hooks = {},
                           const ModelParams* init_from = nullptr,
                           const std::optional<ResumeState>& resume = std::nullopt);

}  // namespace distilltron
