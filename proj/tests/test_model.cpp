// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "distilltron/model.hpp"

using namespace distilltron;

namespace {

ModelConfig mini_config() {
    ModelConfig cfg;
    cfg.vocab_size = 6;
    cfg.embedding_dim = 8;
    cfg.encoder_channels = 8;
    cfg.encoder_kernel = 3;
    cfg.encoder_lstm_dim = 4;
    cfg.attention_dim = 8;
    cfg.attention_filters = 4;
    cfg.attention_kernel = 3;
    cfg.prenet_dim = 8;
    cfg.decoder_dim = 8;
    cfg.n_mels = 4;
    cfg.reduction = 2;
    cfg.postnet_channels = 8;
    cfg.postnet_kernel = 3;
    cfg.prenet_dropout = 0.0;
    cfg.conv_dropout = 0.0;
    return cfg;
}

TokenSequence tokens(std::initializer_list<std::size_t> ids, std::size_t vocab) {
    TokenSequence t;
    t.ids = ids;
    t.vocab_size = vocab;
    return t;
}

MelSpectrogram random_mel(std::size_t frames, std::size_t n_mels, std::uint64_t seed) {
    Rng rng(seed);
    MelSpectrogram mel;
    mel.n_mels = n_mels;
    mel.frames.assign(frames, std::vector<double>(n_mels));
    for (auto& row : mel.frames) {
        for (auto& v : row) v = rng.uniform(-4.0, 1.0);
    }
    return mel;
}

}  // namespace

TEST_CASE("init_params determinism and value range") {
    ModelConfig cfg = mini_config();
    ModelParams a = init_params(cfg, 42);
    ModelParams b = init_params(cfg, 42);
    CHECK(a.checksum() == b.checksum());
    ModelParams c = init_params(cfg, 43);
    CHECK(a.checksum() != c.checksum());

    // finite and within +-1 for config sizes up to hidden 64
    for (std::size_t hidden : {8ul, 32ul, 64ul}) {
        ModelConfig big = cfg;
        big.vocab_size = 20;
        big.embedding_dim = hidden;
        big.encoder_channels = hidden;
        big.encoder_lstm_dim = hidden / 2;
        big.attention_dim = hidden;
        big.attention_filters = 8;
        big.prenet_dim = hidden;
        big.decoder_dim = hidden;
        big.n_mels = 80;
        big.postnet_channels = hidden;
        ModelParams p = init_params(big, 7);
        CHECK(p.all_finite());
        for (const auto& e : p.entries) {
            for (double v : e.value.data()) {
                CHECK(v <= 1.0);
                CHECK(v >= -1.0);
            }
        }
    }
}

TEST_CASE("encode shapes, determinism and sensitivity") {
    ModelConfig cfg = mini_config();
    ModelParams params = init_params(cfg, 1);
    for (std::size_t T : {1ul, 5ul, 17ul}) {
        TokenSequence x;
        x.vocab_size = cfg.vocab_size;
        for (std::size_t i = 0; i < T; ++i) x.ids.push_back(1 + (i % 4));
        ModelRun run(params, nullptr, false, Rng(0));
        EncoderOutputs out = encode(x, run);
        CHECK(out.memory.dim(0) == T);
        CHECK(out.memory.dim(1) == cfg.memory_dim());
    }

    // eval mode is deterministic
    TokenSequence x = tokens({1, 2, 3, 4}, cfg.vocab_size);
    ModelRun r1(params, nullptr, false, Rng(0));
    ModelRun r2(params, nullptr, false, Rng(99));
    CHECK(encode(x, r1).memory.data() == encode(x, r2).memory.data());

    // permuting tokens changes the memory
    TokenSequence xp = tokens({4, 3, 2, 1}, cfg.vocab_size);
    ModelRun r3(params, nullptr, false, Rng(0));
    CHECK(encode(x, r1).memory.data() != encode(xp, r3).memory.data());

    TokenSequence empty;
    empty.vocab_size = cfg.vocab_size;
    ModelRun r4(params, nullptr, false, Rng(0));
    CHECK_THROWS_AS(encode(empty, r4), InputError);
}

TEST_CASE("attention weights are a simplex and degenerate cases are exact") {
    ModelConfig cfg = mini_config();
    ModelParams params = init_params(cfg, 2);
    TokenSequence x = tokens({1, 2, 3, 4, 5}, cfg.vocab_size);
    ModelRun run(params, nullptr, false, Rng(0));
    EncoderOutputs memory = encode(x, run);
    AttentionState att = initial_attention(x.length(), run);
    Rng qr(5);
    std::vector<double> qv(cfg.decoder_dim);
    for (auto& v : qv) v = qr.uniform(-1, 1);
    AttendResult res = attend(Tensor({cfg.decoder_dim}, qv), memory, att, run);
    double total = 0.0;
    for (double w : res.weights.data()) {
        CHECK(w >= 0.0);
        total += w;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);

    // single-token memory: weight exactly one, context equals the row
    TokenSequence x1 = tokens({2}, cfg.vocab_size);
    ModelRun run1(params, nullptr, false, Rng(0));
    EncoderOutputs mem1 = encode(x1, run1);
    AttentionState att1 = initial_attention(1, run1);
    AttendResult res1 = attend(Tensor({cfg.decoder_dim}, qv), mem1, att1, run1);
    CHECK(res1.weights.data() == std::vector<double>{1.0});
    CHECK(res1.context.data() == mem1.memory.data());

    // zeroed query/location projections + uniform memory rows -> uniform weights
    ModelParams zeroed = init_params(cfg, 2);
    for (const char* name : {"att.query.w", "att.location.conv.w", "att.location.w"}) {
        auto& raw = zeroed.at_mut(name).raw();
        std::fill(raw.begin(), raw.end(), 0.0);
    }
    ModelRun runz(zeroed, nullptr, false, Rng(0));
    std::vector<double> mem_row(cfg.memory_dim());
    for (std::size_t i = 0; i < mem_row.size(); ++i) mem_row[i] = 0.1 * static_cast<double>(i);
    std::vector<double> mem_data;
    for (int t = 0; t < 4; ++t) mem_data.insert(mem_data.end(), mem_row.begin(), mem_row.end());
    EncoderOutputs uniform_mem{Tensor({4, cfg.memory_dim()}, mem_data)};
    AttentionState attz = initial_attention(4, runz);
    AttendResult resz = attend(Tensor({cfg.decoder_dim}, qv), uniform_mem, attz, runz);
    for (double w : resz.weights.data()) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("decoder_step output shapes and state evolution") {
    for (std::size_t r : {1ul, 2ul}) {
        ModelConfig cfg = mini_config();
        cfg.reduction = r;
        ModelParams params = init_params(cfg, 3);
        TokenSequence x = tokens({1, 2, 3}, cfg.vocab_size);
        ModelRun run(params, nullptr, false, Rng(0));
        EncoderOutputs memory = encode(x, run);
        DecoderState state = initial_decoder_state(x.length(), run);
        Tensor prev = Tensor::full({cfg.frame_group()}, 0.3);
        DecoderStepResult res = decoder_step(state, prev, memory, run);
        CHECK(res.coarse.shape() == std::vector<std::size_t>{r, cfg.n_mels});
        CHECK(res.stop_logit.size() == 1);
        CHECK(res.hidden.size() == cfg.decoder_dim);
        CHECK(res.state.lstm1.c.data() != state.lstm1.c.data());
        CHECK(res.state.lstm2.c.data() != state.lstm2.c.data());

        Tensor bad = Tensor::zeros({cfg.frame_group() + 1});
        CHECK_THROWS_AS(decoder_step(state, bad, memory, run), DimensionError);
    }
}

TEST_CASE("decoder_step gradients match finite differences at hidden size 8") {
    ModelConfig cfg = mini_config();
    ModelParams params = init_params(cfg, 4);
    TokenSequence x = tokens({1, 2, 3}, cfg.vocab_size);
    Tensor prev = Tensor::full({cfg.frame_group()}, 0.25);

    auto forward = [&](Tape* tape) {
        ModelRun run(params, tape, true, Rng(0));
        EncoderOutputs memory = encode(x, run);
        DecoderState state = initial_decoder_state(x.length(), run);
        DecoderStepResult res = decoder_step(state, prev, memory, run);
        Tensor flat = reshape(res.coarse, {cfg.frame_group()});
        return add(sum(mul(flat, flat)), sum(mul(res.stop_logit, res.stop_logit)));
    };
    auto eval = [&]() {
        Tape tape;
        return forward(&tape).item();
    };
    auto analytic = [&]() {
        Tape tape;
        ModelRun run(params, &tape, true, Rng(0));
        EncoderOutputs memory = encode(x, run);
        DecoderState state = initial_decoder_state(x.length(), run);
        DecoderStepResult res = decoder_step(state, prev, memory, run);
        Tensor flat = reshape(res.coarse, {cfg.frame_group()});
        Tensor loss = add(sum(mul(flat, flat)), sum(mul(res.stop_logit, res.stop_logit)));
        GradientMap g = tape.backward(loss);
        std::vector<std::pair<std::string, std::vector<double>>> out;
        for (auto& e : params.entries) {
            if (e.trainable) out.emplace_back(e.name, g.grad(run.p(e.name)).data());
        }
        return out;
    };
    std::vector<NamedTensorRef> refs;
    for (auto& e : params.entries) {
        if (e.trainable) refs.push_back({e.name, &e.value});
    }
    auto report = grad_check(eval, analytic, refs, 1e-5);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("teacher forcing: trace shapes and prediction independence") {
    ModelConfig cfg = mini_config();
    ModelParams params = init_params(cfg, 5);
    TokenSequence x = tokens({1, 2, 3, 4}, cfg.vocab_size);
    MelSpectrogram y = random_mel(8, cfg.n_mels, 6);

    ModelRun run(params, nullptr, false, Rng(0));
    DecoderTrace trace = forward_teacher_forced(x, y, run);
    CHECK(trace.frames == 8);
    CHECK(trace.steps == 4);
    CHECK(trace.hidden.dim(0) == 8);
    CHECK(trace.mel_coarse.dim(0) == 8);
    CHECK(trace.mel_post.dim(0) == 8);
    CHECK(trace.stop_logits.size() == 4);
    CHECK(trace.attention.size() == 4);
    for (const auto& row : trace.attention) {
        double total = 0.0;
        for (double w : row) {
            CHECK(w >= 0.0);
            total += w;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }

    // perturbing the recorded prediction at step 3 leaves step 5's frames unchanged
    ModelRun run2(params, nullptr, false, Rng(0));
    auto hook = [&](std::size_t step, const Tensor& coarse) {
        if (step == 3) return add(coarse, Tensor::scalar(100.0));
        return coarse;
    };
    // steps here are frame groups; "frame at step 3" = group 1, "step 5" = group 2
    MelSpectrogram y12 = random_mel(12, cfg.n_mels, 6);
    ModelRun run_clean(params, nullptr, false, Rng(0));
    DecoderTrace clean = forward_teacher_forced(x, y12, run_clean);
    ModelRun run_hooked(params, nullptr, false, Rng(0));
    auto hook_g1 = [&](std::size_t step, const Tensor& coarse) {
        if (step == 1) return add(coarse, Tensor::scalar(100.0));
        return coarse;
    };
    DecoderTrace hooked = forward_teacher_forced(x, y12, run_hooked, hook_g1);
    (void)hook;
    // frames 4..11 (groups 2..5) must be bit-identical
    for (std::size_t f = 4; f < 12; ++f) {
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            CHECK(hooked.mel_coarse.at2(f, m) == clean.mel_coarse.at2(f, m));
        }
    }

    MelSpectrogram bad = random_mel(8, cfg.n_mels + 1, 6);
    ModelRun run3(params, nullptr, false, Rng(0));
    CHECK_THROWS_AS(forward_teacher_forced(x, bad, run3), InputError);

    // T' not divisible by r: padded by repetition, mask marks the padding
    MelSpectrogram y7 = random_mel(7, cfg.n_mels, 8);
    ModelRun run4(params, nullptr, false, Rng(0));
    DecoderTrace padded = forward_teacher_forced(x, y7, run4);
    CHECK(padded.frames == 8);
    CHECK(padded.frame_mask.size() == 8);
    CHECK(padded.frame_mask[6]);
    CHECK_FALSE(padded.frame_mask[7]);
}

TEST_CASE("free running: forced length and stop mode") {
    ModelConfig cfg = mini_config();
    ModelParams params = init_params(cfg, 7);
    TokenSequence x = tokens({1, 2, 3, 4}, cfg.vocab_size);

    ModelRun run(params, nullptr, false, Rng(0));
    DecoderTrace forced = forward_free_running(x, run, ForcedLength{4});
    CHECK(forced.frames == 8);
    CHECK(forced.hidden.dim(0) == 8);

    ModelRun run2(params, nullptr, false, Rng(0));
    DecoderTrace stop = forward_free_running(x, run2, StopCriterion{25});
    CHECK(stop.steps <= 25);
    CHECK(stop.steps >= 1);
    CHECK(stop.mel_post.all_finite());
    CHECK(stop.hidden.all_finite());
}

TEST_CASE("scheduled sampling limiting cases are bit-exact") {
    ModelConfig cfg = mini_config();
    cfg.prenet_dropout = 0.5;  // exercise dropout alignment across modes
    cfg.conv_dropout = 0.5;
    ModelParams params = init_params(cfg, 9);
    TokenSequence x = tokens({1, 2, 3, 4}, cfg.vocab_size);
    MelSpectrogram y = random_mel(8, cfg.n_mels, 10);

    auto run_mode = [&](int mode) {
        ModelParams local = params;  // BN buffers drift in training mode; isolate
        ModelRun run(local, nullptr, true, Rng(1234));
        if (mode == 0) return forward_teacher_forced(x, y, run);
        if (mode == 1) return forward_scheduled(x, y, run, 1.0, Rng(555));
        if (mode == 2) return forward_free_running(x, run, ForcedLength{4});
        return forward_scheduled(x, y, run, 0.0, Rng(555));
    };

    DecoderTrace tf = run_mode(0);
    DecoderTrace ss1 = run_mode(1);
    CHECK(tf.mel_coarse.data() == ss1.mel_coarse.data());
    CHECK(tf.mel_post.data() == ss1.mel_post.data());
    CHECK(tf.hidden.data() == ss1.hidden.data());
    CHECK(tf.stop_logits.data() == ss1.stop_logits.data());

    DecoderTrace fr = run_mode(2);
    DecoderTrace ss0 = run_mode(3);
    CHECK(fr.mel_coarse.data() == ss0.mel_coarse.data());
    CHECK(fr.mel_post.data() == ss0.mel_post.data());
    CHECK(fr.hidden.data() == ss0.hidden.data());

    // same seeds reproduce the same scheduled trace at intermediate p
    auto ss_mid = [&]() {
        ModelParams local = params;
        ModelRun run(local, nullptr, true, Rng(1234));
        return forward_scheduled(x, y, run, 0.5, Rng(777));
    };
    DecoderTrace m1 = ss_mid();
    DecoderTrace m2 = ss_mid();
    CHECK(m1.mel_post.data() == m2.mel_post.data());

    ModelRun runbad(params, nullptr, true, Rng(1));
    CHECK_THROWS_AS(forward_scheduled(x, y, runbad, 1.5, Rng(1)), ConfigError);
}

TEST_CASE("miniature end-to-end gradient check across all parameter groups") {
    ModelConfig cfg = mini_config();  // vocab 6, hidden 8, n_mels 4, r 2
    ModelParams params = init_params(cfg, 11);
    // check at a generic point: jitter moves zero-initialized biases off the
    // exact relu kinks that break central differences
    Rng jitter(1001);
    for (auto& e : params.entries) {
        if (!e.trainable) continue;
        for (auto& v : e.value.raw()) v += 0.02 * jitter.uniform(-1.0, 1.0);
    }
    TokenSequence x = tokens({1, 2, 3, 4}, cfg.vocab_size);
    MelSpectrogram y = random_mel(8, cfg.n_mels, 12);
    std::vector<double> stop_targets{0, 0, 0, 1};

    auto loss_tensor = [&](Tape* tape) {
        ModelRun run(params, tape, true, Rng(0));
        DecoderTrace trace = forward_teacher_forced(x, y, run);
        Tensor target(std::vector<std::size_t>{8, cfg.n_mels}, [&] {
            std::vector<double> flat;
            for (const auto& row : y.frames) flat.insert(flat.end(), row.begin(), row.end());
            return flat;
        }());
        Tensor dc = sub(trace.mel_coarse, target);
        Tensor dp = sub(trace.mel_post, target);
        Tensor st = Tensor::from_vector(stop_targets);
        Tensor stop_bce = sum(sub(softplus(trace.stop_logits), mul(trace.stop_logits, st)));
        return add(add(mean(mul(dc, dc)), mean(mul(dp, dp))), stop_bce);
    };
    auto eval = [&]() {
        Tape tape;
        return loss_tensor(&tape).item();
    };
    auto analytic = [&]() {
        Tape tape;
        ModelRun run(params, &tape, true, Rng(0));
        DecoderTrace trace = forward_teacher_forced(x, y, run);
        Tensor target(std::vector<std::size_t>{8, cfg.n_mels}, [&] {
            std::vector<double> flat;
            for (const auto& row : y.frames) flat.insert(flat.end(), row.begin(), row.end());
            return flat;
        }());
        Tensor dc = sub(trace.mel_coarse, target);
        Tensor dp = sub(trace.mel_post, target);
        Tensor st = Tensor::from_vector(stop_targets);
        Tensor stop_bce = sum(sub(softplus(trace.stop_logits), mul(trace.stop_logits, st)));
        Tensor loss = add(add(mean(mul(dc, dc)), mean(mul(dp, dp))), stop_bce);
        GradientMap g = tape.backward(loss);
        std::vector<std::pair<std::string, std::vector<double>>> out;
        for (auto& e : params.entries) {
            if (e.trainable) out.emplace_back(e.name, g.grad(run.p(e.name)).data());
        }
        return out;
    };
    std::vector<NamedTensorRef> refs;
    for (auto& e : params.entries) {
        if (e.trainable) refs.push_back({e.name, &e.value});
    }
    // eps balances rounding noise (dominates below ~1e-5 on near-zero
    // coordinates) against truncation through the conv/BN stack (above ~1e-4)
    auto report = grad_check(eval, analytic, refs, 3e-5);
    for (const auto& [name, err] : report.per_param) {
        CHECK_MESSAGE(err < 1e-4, "parameter group ", name);
    }
    CHECK(report.max_rel_err < 1e-4);
}
