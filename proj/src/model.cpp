// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#include "distilltron/model.hpp"

#include <algorithm>
#include <cmath>

namespace distilltron {

// ---------------------------------------------------------------------------
// Config / params
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
    if (vocab_size < 3) throw ConfigError("vocab_size must be >= 3 (pad + content + end)");
    if (embedding_dim == 0 || encoder_channels == 0 || encoder_lstm_dim == 0 || attention_dim == 0 ||
        attention_filters == 0 || prenet_dim == 0 || decoder_dim == 0 || n_mels == 0 ||
        postnet_channels == 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (reduction < 1) throw ConfigError("reduction factor must be >= 1");
    if (encoder_kernel % 2 == 0 || attention_kernel % 2 == 0 || postnet_kernel % 2 == 0) {
        throw ConfigError("conv kernel widths must be odd");
    }
    if (distill_tap != "lstm2" && distill_tap != "lstm1") {
        throw ConfigError(format_msg("unknown distill tap '", distill_tap, "'"));
    }
    if (max_decoder_steps < 1) throw ConfigError("max_decoder_steps must be >= 1");
}

void ModelParams::add(const std::string& name, Tensor value, bool trainable) {
    if (has(name)) throw ContractError(format_msg("duplicate parameter ", name));
    entries.push_back(Entry{name, std::move(value), trainable});
}

bool ModelParams::has(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return true;
    }
    return false;
}

const Tensor& ModelParams::at(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e.value;
    }
    throw ContractError(format_msg("unknown parameter ", name));
}

Tensor& ModelParams::at_mut(const std::string& name) {
    for (auto& e : entries) {
        if (e.name == name) return e.value;
    }
    throw ContractError(format_msg("unknown parameter ", name));
}

std::size_t ModelParams::total_parameters(bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (!trainable_only || e.trainable) n += e.value.size();
    }
    return n;
}

std::uint64_t ModelParams::checksum() const {
    Fnv1a h;
    for (const auto& e : entries) {
        h.update_string(e.name);
        h.update_u64(e.value.size());
        std::string bytes;
        bytes.reserve(e.value.size() * 8);
        for (double v : e.value.data()) put_f64_le(bytes, v);
        h.update(bytes.data(), bytes.size());
    }
    return h.digest();
}

bool ModelParams::all_finite() const {
    for (const auto& e : entries) {
        if (!e.value.all_finite()) return false;
    }
    return true;
}

namespace {

Tensor xavier(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out, Rng rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> data(n);
    for (auto& v : data) v = rng.uniform(-limit, limit);
    return Tensor(std::move(shape), std::move(data));
}

// LSTM bias with the forget-gate block (second quarter) at +1.
Tensor lstm_bias(std::size_t hidden) {
    std::vector<double> b(4 * hidden, 0.0);
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    return Tensor({4 * hidden}, std::move(b));
}

void add_lstm(ModelParams& p, const std::string& prefix, std::size_t input, std::size_t hidden,
              const Rng& root) {
    p.add(prefix + ".w_ih", xavier({4 * hidden, input}, input, 4 * hidden, root.stream(prefix + ".w_ih")));
    p.add(prefix + ".w_hh", xavier({4 * hidden, hidden}, hidden, 4 * hidden, root.stream(prefix + ".w_hh")));
    p.add(prefix + ".b", lstm_bias(hidden));
}

// Conv layers carry no bias: every conv here is followed by batch norm, which
// cancels any per-channel constant, so a bias would be a dead parameter.
void add_conv(ModelParams& p, const std::string& prefix, std::size_t cout, std::size_t cin,
              std::size_t width, const Rng& root) {
    p.add(prefix + ".w", xavier({cout, cin, width}, cin * width, cout * width, root.stream(prefix + ".w")));
    p.add(prefix + ".bn.gamma", Tensor::full({cout, 1}, 1.0));
    p.add(prefix + ".bn.beta", Tensor::zeros({cout, 1}));
    p.add(prefix + ".bn.running_mean", Tensor::zeros({cout, 1}), /*trainable=*/false);
    p.add(prefix + ".bn.running_var", Tensor::full({cout, 1}, 1.0), /*trainable=*/false);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    const Rng root(seed);

    p.add("embedding", xavier({cfg.vocab_size, cfg.embedding_dim}, cfg.vocab_size, cfg.embedding_dim,
                              root.stream("embedding")));
    add_conv(p, "enc.conv1", cfg.encoder_channels, cfg.embedding_dim, cfg.encoder_kernel, root);
    add_conv(p, "enc.conv2", cfg.encoder_channels, cfg.encoder_channels, cfg.encoder_kernel, root);
    add_conv(p, "enc.conv3", cfg.encoder_channels, cfg.encoder_channels, cfg.encoder_kernel, root);
    add_lstm(p, "enc.lstm.fw", cfg.encoder_channels, cfg.encoder_lstm_dim, root);
    add_lstm(p, "enc.lstm.bw", cfg.encoder_channels, cfg.encoder_lstm_dim, root);

    p.add("att.query.w", xavier({cfg.attention_dim, cfg.decoder_dim}, cfg.decoder_dim,
                                cfg.attention_dim, root.stream("att.query.w")));
    p.add("att.memory.w", xavier({cfg.attention_dim, cfg.memory_dim()}, cfg.memory_dim(),
                                 cfg.attention_dim, root.stream("att.memory.w")));
    p.add("att.location.conv.w",
          xavier({cfg.attention_filters, 2, cfg.attention_kernel}, 2 * cfg.attention_kernel,
                 cfg.attention_filters * cfg.attention_kernel, root.stream("att.location.conv.w")));
    p.add("att.location.w", xavier({cfg.attention_dim, cfg.attention_filters}, cfg.attention_filters,
                                   cfg.attention_dim, root.stream("att.location.w")));
    p.add("att.v", xavier({cfg.attention_dim}, cfg.attention_dim, 1, root.stream("att.v")));

    p.add("prenet.fc1.w", xavier({cfg.prenet_dim, cfg.frame_group()}, cfg.frame_group(),
                                 cfg.prenet_dim, root.stream("prenet.fc1.w")));
    p.add("prenet.fc1.b", Tensor::zeros({cfg.prenet_dim}));
    p.add("prenet.fc2.w", xavier({cfg.prenet_dim, cfg.prenet_dim}, cfg.prenet_dim, cfg.prenet_dim,
                                 root.stream("prenet.fc2.w")));
    p.add("prenet.fc2.b", Tensor::zeros({cfg.prenet_dim}));

    add_lstm(p, "dec.lstm1", cfg.prenet_dim + cfg.memory_dim(), cfg.decoder_dim, root);
    add_lstm(p, "dec.lstm2", cfg.decoder_dim + cfg.memory_dim(), cfg.decoder_dim, root);

    p.add("dec.frame.w", xavier({cfg.frame_group(), cfg.decoder_dim}, cfg.decoder_dim,
                                cfg.frame_group(), root.stream("dec.frame.w")));
    p.add("dec.frame.b", Tensor::zeros({cfg.frame_group()}));
    p.add("dec.stop.w", xavier({1, cfg.decoder_dim}, cfg.decoder_dim, 1, root.stream("dec.stop.w")));
    p.add("dec.stop.b", Tensor::zeros({1}));

    add_conv(p, "post.conv1", cfg.postnet_channels, cfg.n_mels, cfg.postnet_kernel, root);
    add_conv(p, "post.conv2", cfg.postnet_channels, cfg.postnet_channels, cfg.postnet_kernel, root);
    add_conv(p, "post.conv3", cfg.postnet_channels, cfg.postnet_channels, cfg.postnet_kernel, root);
    add_conv(p, "post.conv4", cfg.postnet_channels, cfg.postnet_channels, cfg.postnet_kernel, root);
    add_conv(p, "post.conv5", cfg.n_mels, cfg.postnet_channels, cfg.postnet_kernel, root);
    return p;
}

// ---------------------------------------------------------------------------
// ModelRun
// ---------------------------------------------------------------------------

ModelRun::ModelRun(ModelParams& params, Tape* tape, bool training, Rng dropout_rng)
    : params_(&params), tape_(tape), training_(training), rng_(dropout_rng) {}

Tensor ModelRun::p(const std::string& name) {
    if (tape_ == nullptr) return params_->at(name);
    for (const auto& w : watched_) {
        if (w.first == name) return w.second;
    }
    Tensor watched = tape_->watch(params_->at(name));
    watched_.emplace_back(name, watched);
    return watched;
}

Tensor ModelRun::dropout(const Tensor& x, double rate) {
    if (!training_ || rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    const double keep = 1.0 - rate;
    std::vector<double> mask(x.size());
    for (auto& v : mask) v = rng_.uniform() < keep ? 1.0 / keep : 0.0;
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor ModelRun::batch_norm(const Tensor& x, const std::string& prefix) {
    const double eps = cfg().bn_eps;
    Tensor gamma = p(prefix + ".gamma");
    Tensor beta = p(prefix + ".beta");
    if (training_) {
        Tensor mu = reduce(ReduceOp::Mean, x, 1);                       // [C,1]
        Tensor centered = sub(x, mu);
        Tensor var = reduce(ReduceOp::Mean, mul(centered, centered), 1);  // [C,1]
        Tensor inv = div(Tensor::scalar(1.0), sqrt_t(add(var, Tensor::scalar(eps))));
        Tensor out = add(mul(gamma, mul(centered, inv)), beta);
        // update running buffers (plain values, outside the tape)
        const double m = cfg().bn_momentum;
        auto& rm = params_->at_mut(prefix + ".running_mean").raw();
        auto& rv = params_->at_mut(prefix + ".running_var").raw();
        const auto& muv = mu.data();
        const auto& varv = var.data();
        for (std::size_t i = 0; i < rm.size(); ++i) {
            rm[i] = m * rm[i] + (1.0 - m) * muv[i];
            rv[i] = m * rv[i] + (1.0 - m) * varv[i];
        }
        return out;
    }
    Tensor rm = params_->at(prefix + ".running_mean");
    Tensor rv = params_->at(prefix + ".running_var");
    Tensor inv = div(Tensor::scalar(1.0), sqrt_t(add(rv, Tensor::scalar(eps))));
    return add(mul(gamma, mul(sub(x, rm), inv)), beta);
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

EncoderOutputs encode(const TokenSequence& x, ModelRun& run) {
    x.validate();
    const ModelConfig& cfg = run.cfg();
    if (x.vocab_size != cfg.vocab_size) {
        throw InputError(format_msg("token sequence vocab ", x.vocab_size,
                                    " does not match model vocab ", cfg.vocab_size));
    }
    const std::size_t T = x.length();

    Tensor embedded = take_rows(run.p("embedding"), x.ids);  // [T, E]
    Tensor h = transpose(embedded);                          // [E, T]
    for (int layer = 1; layer <= 3; ++layer) {
        const std::string prefix = "enc.conv" + std::to_string(layer);
        h = conv1d(h, run.p(prefix + ".w"));
        h = run.batch_norm(h, prefix + ".bn");
        h = relu(h);
        h = run.dropout(h, cfg.conv_dropout);
    }
    Tensor features = transpose(h);  // [T, C]

    const std::size_t H = cfg.encoder_lstm_dim;
    Tensor fw_w_ih = run.p("enc.lstm.fw.w_ih");
    Tensor fw_w_hh = run.p("enc.lstm.fw.w_hh");
    Tensor fw_b = run.p("enc.lstm.fw.b");
    Tensor bw_w_ih = run.p("enc.lstm.bw.w_ih");
    Tensor bw_w_hh = run.p("enc.lstm.bw.w_hh");
    Tensor bw_b = run.p("enc.lstm.bw.b");

    std::vector<Tensor> fw(T), bw(T);
    LstmState state{Tensor::zeros({H}), Tensor::zeros({H})};
    for (std::size_t t = 0; t < T; ++t) {
        Tensor xt = reshape(slice(features, 0, t, 1), {cfg.encoder_channels});
        state = lstm_cell(xt, state, fw_w_ih, fw_w_hh, fw_b);
        fw[t] = state.h;
    }
    state = LstmState{Tensor::zeros({H}), Tensor::zeros({H})};
    for (std::size_t t = T; t > 0; --t) {
        Tensor xt = reshape(slice(features, 0, t - 1, 1), {cfg.encoder_channels});
        state = lstm_cell(xt, state, bw_w_ih, bw_w_hh, bw_b);
        bw[t - 1] = state.h;
    }
    std::vector<Tensor> rows(T);
    for (std::size_t t = 0; t < T; ++t) rows[t] = concat({fw[t], bw[t]}, 0);
    return EncoderOutputs{stack_rows(rows)};
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

AttentionState initial_attention(std::size_t T, ModelRun& run) {
    if (T == 0) throw InputError("attention over an empty memory");
    std::vector<double> onehot(T, 0.0);
    onehot[0] = 1.0;
    AttentionState att;
    att.prev_weights = Tensor({T}, onehot);
    att.cum_weights = Tensor({T}, std::move(onehot));
    att.context = Tensor::zeros({run.cfg().memory_dim()});
    return att;
}

AttendResult attend(const Tensor& query, const EncoderOutputs& memory, const AttentionState& att,
                    ModelRun& run) {
    const std::size_t T = memory.memory.dim(0);
    Tensor loc_in = stack_rows({att.prev_weights, att.cum_weights});       // [2, T]
    Tensor loc_feat = conv1d(loc_in, run.p("att.location.conv.w"));        // [F, T]
    Tensor loc_proj = matmul(transpose(loc_feat), transpose(run.p("att.location.w")));  // [T, A]
    Tensor mem_proj = matmul(memory.memory, transpose(run.p("att.memory.w")));          // [T, A]
    Tensor query_proj = matvec(run.p("att.query.w"), query);               // [A]
    Tensor energies_in = tanh_t(add(add(mem_proj, loc_proj), query_proj));
    Tensor energies = reshape(matmul(energies_in, reshape(run.p("att.v"), {run.cfg().attention_dim, 1})),
                              {T});
    Tensor weights = softmax(energies);
    Tensor context = matvec(transpose(memory.memory), weights);            // [memory_dim]
    return AttendResult{context, weights};
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const Tensor& w_ih, const Tensor& w_hh,
                    const Tensor& bias) {
    const std::size_t hidden = prev.h.dim(0);
    Tensor pre = add(add(matvec(w_ih, x), matvec(w_hh, prev.h)), bias);  // [4H]
    Tensor i = sigmoid(slice(pre, 0, 0, hidden));
    Tensor f = sigmoid(slice(pre, 0, hidden, hidden));
    Tensor g = tanh_t(slice(pre, 0, 2 * hidden, hidden));
    Tensor o = sigmoid(slice(pre, 0, 3 * hidden, hidden));
    Tensor c = add(mul(f, prev.c), mul(i, g));
    Tensor h = mul(o, tanh_t(c));
    return LstmState{h, c};
}

DecoderState initial_decoder_state(std::size_t T, ModelRun& run) {
    const std::size_t D = run.cfg().decoder_dim;
    DecoderState state;
    state.lstm1 = LstmState{Tensor::zeros({D}), Tensor::zeros({D})};
    state.lstm2 = LstmState{Tensor::zeros({D}), Tensor::zeros({D})};
    state.att = initial_attention(T, run);
    return state;
}

DecoderStepResult decoder_step(const DecoderState& state, const Tensor& prev_frame,
                               const EncoderOutputs& memory, ModelRun& run) {
    const ModelConfig& cfg = run.cfg();
    if (prev_frame.size() != cfg.frame_group()) {
        throw DimensionError(format_msg("decoder input frame group has ", prev_frame.size(),
                                        " values, expected ", cfg.frame_group()));
    }
    // pre-net
    Tensor p1 = run.dropout(relu(add(matvec(run.p("prenet.fc1.w"), prev_frame), run.p("prenet.fc1.b"))),
                            cfg.prenet_dropout);
    Tensor p2 = run.dropout(relu(add(matvec(run.p("prenet.fc2.w"), p1), run.p("prenet.fc2.b"))),
                            cfg.prenet_dropout);

    DecoderStepResult out;
    Tensor x1 = concat({p2, state.att.context}, 0);
    out.state.lstm1 = lstm_cell(x1, state.lstm1, run.p("dec.lstm1.w_ih"), run.p("dec.lstm1.w_hh"),
                                run.p("dec.lstm1.b"));
    AttendResult att = attend(out.state.lstm1.h, memory, state.att, run);
    out.state.att.prev_weights = att.weights;
    out.state.att.cum_weights = add(state.att.cum_weights, att.weights);
    out.state.att.context = att.context;

    Tensor x2 = concat({out.state.lstm1.h, att.context}, 0);
    out.state.lstm2 = lstm_cell(x2, state.lstm2, run.p("dec.lstm2.w_ih"), run.p("dec.lstm2.w_hh"),
                                run.p("dec.lstm2.b"));

    Tensor flat = add(matvec(run.p("dec.frame.w"), out.state.lstm2.h), run.p("dec.frame.b"));
    out.coarse = reshape(flat, {cfg.reduction, cfg.n_mels});
    out.stop_logit = add(matvec(run.p("dec.stop.w"), out.state.lstm2.h), run.p("dec.stop.b"));
    out.hidden = cfg.distill_tap == "lstm1" ? out.state.lstm1.h : out.state.lstm2.h;
    return out;
}

// ---------------------------------------------------------------------------
// Full forward passes
// ---------------------------------------------------------------------------

std::pair<std::vector<std::vector<double>>, std::vector<bool>> pad_frames_to_reduction(
    const MelSpectrogram& y, std::size_t reduction) {
    y.validate();
    std::vector<std::vector<double>> frames = y.frames;
    std::vector<bool> mask(frames.size(), true);
    while (frames.size() % reduction != 0) {
        frames.push_back(frames.back());
        mask.push_back(false);
    }
    return {std::move(frames), std::move(mask)};
}

namespace {

Tensor postnet(const Tensor& coarse, ModelRun& run) {
    const ModelConfig& cfg = run.cfg();
    Tensor h = transpose(coarse);  // [n_mels, T']
    for (int layer = 1; layer <= 5; ++layer) {
        const std::string prefix = "post.conv" + std::to_string(layer);
        h = conv1d(h, run.p(prefix + ".w"));
        h = run.batch_norm(h, prefix + ".bn");
        if (layer < 5) h = tanh_t(h);
        h = run.dropout(h, cfg.conv_dropout);
    }
    return add(coarse, transpose(h));
}

// Per-step decoder input chosen by the decode mode.
using InputProvider = std::function<Tensor(std::size_t step, const Tensor& prev_pred)>;

DecoderTrace run_decoder(const TokenSequence& x, ModelRun& run, std::size_t forced_steps,
                         std::size_t max_steps, const InputProvider& next_input,
                         const StepHook& hook) {
    const ModelConfig& cfg = run.cfg();
    EncoderOutputs memory = encode(x, run);
    DecoderState state = initial_decoder_state(x.length(), run);

    DecoderTrace trace;
    std::vector<Tensor> hidden_rows;
    std::vector<Tensor> coarse_blocks;
    std::vector<Tensor> stop_logits;
    Tensor prev_pred = Tensor::zeros({cfg.frame_group()});  // learned-nothing go frame
    const std::size_t limit = forced_steps > 0 ? forced_steps : max_steps;
    for (std::size_t step = 0; step < limit; ++step) {
        Tensor input = next_input(step, prev_pred);
        DecoderStepResult res = decoder_step(state, input, memory, run);
        state = res.state;
        Tensor coarse = hook ? hook(step, res.coarse) : res.coarse;
        prev_pred = reshape(coarse, {cfg.frame_group()});
        coarse_blocks.push_back(coarse);
        for (std::size_t r = 0; r < cfg.reduction; ++r) hidden_rows.push_back(res.hidden);
        stop_logits.push_back(res.stop_logit);
        trace.attention.push_back(state.att.prev_weights.data());
        if (forced_steps == 0) {
            const double p = 1.0 / (1.0 + std::exp(-res.stop_logit.item()));
            if (p > cfg.stop_threshold) break;
        }
    }
    trace.steps = coarse_blocks.size();
    trace.frames = trace.steps * cfg.reduction;
    trace.hidden = stack_rows(hidden_rows);
    trace.mel_coarse = concat(coarse_blocks, 0);
    trace.mel_post = postnet(trace.mel_coarse, run);
    trace.stop_logits = concat(stop_logits, 0);
    trace.frame_mask.assign(trace.frames, true);
    return trace;
}

std::vector<Tensor> frame_groups(const std::vector<std::vector<double>>& padded, std::size_t reduction,
                                 std::size_t n_mels) {
    const std::size_t steps = padded.size() / reduction;
    std::vector<Tensor> groups(steps);
    for (std::size_t g = 0; g < steps; ++g) {
        std::vector<double> flat;
        flat.reserve(reduction * n_mels);
        for (std::size_t r = 0; r < reduction; ++r) {
            const auto& row = padded[g * reduction + r];
            flat.insert(flat.end(), row.begin(), row.end());
        }
        groups[g] = Tensor({reduction * n_mels}, std::move(flat));
    }
    return groups;
}

}  // namespace

DecoderTrace forward_teacher_forced(const TokenSequence& x, const MelSpectrogram& y, ModelRun& run,
                                    const StepHook& hook) {
    const ModelConfig& cfg = run.cfg();
    if (y.n_mels != cfg.n_mels) {
        throw InputError(format_msg("target mel has ", y.n_mels, " channels, model expects ",
                                    cfg.n_mels));
    }
    auto [padded, mask] = pad_frames_to_reduction(y, cfg.reduction);
    const std::vector<Tensor> groups = frame_groups(padded, cfg.reduction, cfg.n_mels);
    // go frame for step 0, ground-truth group ending at step-1 otherwise
    auto provider = [&groups](std::size_t step, const Tensor& prev_pred) {
        if (step == 0) return Tensor::zeros(prev_pred.shape());
        return groups[step - 1];
    };
    DecoderTrace trace = run_decoder(x, run, groups.size(), 0, provider, hook);
    trace.frame_mask = mask;
    return trace;
}

DecoderTrace forward_free_running(const TokenSequence& x, ModelRun& run, const RunLength& length,
                                  const StepHook& hook) {
    auto provider = [](std::size_t step, const Tensor& prev_pred) {
        if (step == 0) return Tensor::zeros(prev_pred.shape());
        return prev_pred;
    };
    if (std::holds_alternative<ForcedLength>(length)) {
        const std::size_t steps = std::get<ForcedLength>(length).steps;
        if (steps < 1) throw ContractError("forced-length decode needs steps >= 1");
        return run_decoder(x, run, steps, 0, provider, hook);
    }
    const std::size_t max_steps = std::get<StopCriterion>(length).max_steps;
    if (max_steps < 1) throw ContractError("stop-criterion decode needs max_steps >= 1");
    return run_decoder(x, run, 0, max_steps, provider, hook);
}

DecoderTrace forward_scheduled(const TokenSequence& x, const MelSpectrogram& y, ModelRun& run,
                               double p_teacher, Rng coin_rng, const StepHook& hook) {
    const ModelConfig& cfg = run.cfg();
    if (p_teacher < 0.0 || p_teacher > 1.0) {
        throw ConfigError(format_msg("p_teacher must be in [0,1], got ", p_teacher));
    }
    if (y.n_mels != cfg.n_mels) {
        throw InputError(format_msg("target mel has ", y.n_mels, " channels, model expects ",
                                    cfg.n_mels));
    }
    auto [padded, mask] = pad_frames_to_reduction(y, cfg.reduction);
    const std::vector<Tensor> groups = frame_groups(padded, cfg.reduction, cfg.n_mels);
    auto provider = [&groups, &coin_rng, p_teacher](std::size_t step, const Tensor& prev_pred) {
        if (step == 0) return Tensor::zeros(prev_pred.shape());
        const bool teacher = coin_rng.uniform() < p_teacher;
        return teacher ? groups[step - 1] : prev_pred;
    };
    DecoderTrace trace = run_decoder(x, run, groups.size(), 0, provider, hook);
    trace.frame_mask = mask;
    return trace;
}

}  // namespace distilltron
