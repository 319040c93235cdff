// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0

#include "distilltron/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace distilltron {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

// Resolves which tape (if any) an op should record on.
Tape* result_tape(const Tensor& a, const Tensor& b) {
    Tape* ta = a.tracked() ? a.tape() : nullptr;
    Tape* tb = b.tracked() ? b.tape() : nullptr;
    if (ta && tb && ta != tb) {
        throw ContractError("operands belong to two different tapes");
    }
    return ta ? ta : tb;
}

Tape* result_tape(const Tensor& a) {
    return a.tracked() ? a.tape() : nullptr;
}

// Trailing-dimension broadcast plan: shapes aligned on the right, each
// dimension equal or 1/missing on one side. Strides of broadcast dims are 0.
struct BcastPlan {
    std::vector<std::size_t> out_shape;
    std::vector<std::size_t> a_stride;
    std::vector<std::size_t> b_stride;
    std::size_t out_size = 0;
};

BcastPlan broadcast_plan(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    BcastPlan plan;
    plan.out_shape.assign(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        std::size_t out;
        if (da == db || db == 1) {
            out = da;
        } else if (da == 1) {
            out = db;
        } else {
            throw DimensionError(format_msg("incompatible shapes for broadcast: ",
                                            shape_to_string(a), " vs ", shape_to_string(b)));
        }
        plan.out_shape[rank - 1 - i] = out;
    }
    auto strides_for = [&](const std::vector<std::size_t>& s) {
        std::vector<std::size_t> natural(s.size());
        std::size_t acc = 1;
        for (std::size_t i = s.size(); i > 0; --i) {
            natural[i - 1] = acc;
            acc *= s[i - 1];
        }
        std::vector<std::size_t> out(rank, 0);
        for (std::size_t i = 0; i < rank; ++i) {
            if (i < s.size()) {
                const std::size_t d = s[s.size() - 1 - i];
                out[rank - 1 - i] = (d == 1) ? 0 : natural[s.size() - 1 - i];
            }
        }
        return out;
    };
    plan.a_stride = strides_for(a);
    plan.b_stride = strides_for(b);
    plan.out_size = product(plan.out_shape);
    return plan;
}

// Walks every flat output index of `plan`, calling fn(out_idx, a_idx, b_idx).
template <typename Fn>
void bcast_walk(const BcastPlan& plan, Fn&& fn) {
    const std::size_t rank = plan.out_shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ai = 0, bi = 0;
    for (std::size_t o = 0; o < plan.out_size; ++o) {
        fn(o, ai, bi);
        for (std::size_t k = rank; k > 0; --k) {
            const std::size_t d = k - 1;
            ++idx[d];
            ai += plan.a_stride[d];
            bi += plan.b_stride[d];
            if (idx[d] < plan.out_shape[d]) break;
            ai -= plan.a_stride[d] * plan.out_shape[d];
            bi -= plan.b_stride[d] * plan.out_shape[d];
            idx[d] = 0;
        }
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Factors a shape into [outer, axis_dim, inner] around `axis`.
void split_axis(const std::vector<std::size_t>& shape, std::size_t axis,
                std::size_t* outer, std::size_t* axis_dim, std::size_t* inner) {
    *outer = 1;
    *inner = 1;
    for (std::size_t i = 0; i < axis; ++i) *outer *= shape[i];
    *axis_dim = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) *inner *= shape[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data) : shape_(std::move(shape)) {
    if (product(shape_) != data.size()) {
        throw DimensionError(format_msg("data length ", data.size(), " does not match shape ",
                                        shape_to_string(shape_)));
    }
    data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::vector<double> d(product(shape), 0.0);
    return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::vector<double> d(product(shape), value);
    return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double value) {
    return Tensor({1}, {value});
}

Tensor Tensor::from_vector(std::vector<double> values) {
    std::vector<std::size_t> shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::from_matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::size() const {
    return product(shape_);
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError(format_msg("axis ", axis, " out of range for shape ", shape_to_string(shape_)));
    }
    return shape_[axis];
}

const std::vector<double>& Tensor::data() const {
    if (!data_) throw ContractError("reading an undefined tensor");
    return *data_;
}

std::vector<double>& Tensor::raw() {
    if (!data_) throw ContractError("mutating an undefined tensor");
    if (tracked()) throw ContractError("in-place mutation of a tracked tensor");
    // Sole owner after copy-on-write; safe to hand out mutable storage.
    if (data_.use_count() > 1) {
        data_ = std::make_shared<const std::vector<double>>(*data_);
    }
    return const_cast<std::vector<double>&>(*data_);
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError(format_msg("item() on non-scalar tensor of shape ", shape_to_string(shape_)));
    }
    return data()[0];
}

double Tensor::at2(std::size_t r, std::size_t c) const {
    if (rank() != 2) throw DimensionError("at2() requires a 2-D tensor");
    return data()[r * shape_[1] + c];
}

bool Tensor::all_finite() const {
    return distilltron::all_finite(data());
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
}

Tensor Tensor::clone() const {
    return Tensor(shape_, data());
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tensor Tape::make_tracked(Tensor value) {
    value.tape_ = this;
    value.node_ = static_cast<int>(shapes_.size());
    shapes_.push_back(value.shape_);
    return value;
}

Tensor Tape::watch(const Tensor& t) {
    if (t.tracked()) {
        if (t.tape() == this) return t;
        throw ContractError("watching a tensor already tracked on another tape");
    }
    return make_tracked(t);
}

void Tape::record(int out_node, BackwardFn fn) {
    ops_.push_back(OpRec{out_node, std::move(fn)});
}

void Tape::accumulate(Grads& grads, int node, std::size_t size, const double* contrib) {
    if (node < 0) return;
    auto& slot = grads[static_cast<std::size_t>(node)];
    if (slot.empty()) slot.assign(size, 0.0);
    for (std::size_t i = 0; i < size; ++i) slot[i] += contrib[i];
}

GradientMap Tape::backward(const Tensor& loss) {
    if (!loss.tracked() || loss.tape() != this) {
        throw ContractError("backward() requires a loss recorded on this tape");
    }
    if (loss.size() != 1) {
        throw ContractError(format_msg("backward() requires a scalar loss, got shape ",
                                       shape_to_string(loss.shape())));
    }
    GradientMap out;
    out.tape_ = this;
    out.shapes_ = shapes_;
    out.grads_.assign(shapes_.size(), {});
    out.grads_[static_cast<std::size_t>(loss.node())] = {1.0};
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        const auto& slot = out.grads_[static_cast<std::size_t>(it->out)];
        if (slot.empty()) continue;  // node does not influence the loss
        it->fn(slot, out.grads_);
    }
    return out;
}

bool GradientMap::has(const Tensor& t) const {
    return t.tracked() && t.tape() == tape_ &&
           !grads_[static_cast<std::size_t>(t.node())].empty();
}

Tensor GradientMap::grad(const Tensor& t) const {
    if (!t.tracked() || t.tape() != tape_) {
        throw ContractError("gradient requested for a tensor not tracked on this tape");
    }
    const auto node = static_cast<std::size_t>(t.node());
    // nodes recorded after this backward pass have no gradient
    if (node >= grads_.size()) return Tensor::zeros(t.shape());
    const auto& slot = grads_[node];
    if (slot.empty()) return Tensor::zeros(shapes_[node]);
    return Tensor(shapes_[node], slot);
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Tensor unary(UnaryOp op, const Tensor& x) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    switch (op) {
        case UnaryOp::Tanh:
            for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::tanh(xd[i]);
            break;
        case UnaryOp::Sigmoid:
            for (std::size_t i = 0; i < xd.size(); ++i) out[i] = stable_sigmoid(xd[i]);
            break;
        case UnaryOp::Relu:
            for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
            break;
        case UnaryOp::Exp:
            for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::exp(xd[i]);
            break;
        case UnaryOp::Log:
            for (std::size_t i = 0; i < xd.size(); ++i) {
                if (!(xd[i] > 0.0)) {
                    throw DomainError(format_msg("log of non-positive value ", xd[i], " at index ", i));
                }
                out[i] = std::log(xd[i]);
            }
            break;
        case UnaryOp::Sqrt:
            for (std::size_t i = 0; i < xd.size(); ++i) {
                if (xd[i] < 0.0) {
                    throw DomainError(format_msg("sqrt of negative value ", xd[i], " at index ", i));
                }
                out[i] = std::sqrt(xd[i]);
            }
            break;
        case UnaryOp::Softplus:
            for (std::size_t i = 0; i < xd.size(); ++i) out[i] = stable_softplus(xd[i]);
            break;
    }
    Tensor result(x.shape(), std::move(out));
    Tape* tape = result_tape(x);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int xid = x.node();
    Tensor xv = x;
    Tensor yv = result;
    tape->record(result.node(), [op, xid, xv, yv](const std::vector<double>& dout, Tape::Grads& grads) {
        const auto& xd = xv.data();
        const auto& yd = yv.data();
        std::vector<double> dx(xd.size());
        switch (op) {
            case UnaryOp::Tanh:
                for (std::size_t i = 0; i < xd.size(); ++i) dx[i] = dout[i] * (1.0 - yd[i] * yd[i]);
                break;
            case UnaryOp::Sigmoid:
                for (std::size_t i = 0; i < xd.size(); ++i) dx[i] = dout[i] * yd[i] * (1.0 - yd[i]);
                break;
            case UnaryOp::Relu:
                for (std::size_t i = 0; i < xd.size(); ++i) dx[i] = xd[i] > 0.0 ? dout[i] : 0.0;
                break;
            case UnaryOp::Exp:
                for (std::size_t i = 0; i < xd.size(); ++i) dx[i] = dout[i] * yd[i];
                break;
            case UnaryOp::Log:
                for (std::size_t i = 0; i < xd.size(); ++i) dx[i] = dout[i] / xd[i];
                break;
            case UnaryOp::Sqrt:
                for (std::size_t i = 0; i < xd.size(); ++i) dx[i] = dout[i] * 0.5 / yd[i];
                break;
            case UnaryOp::Softplus:
                for (std::size_t i = 0; i < xd.size(); ++i) dx[i] = dout[i] * stable_sigmoid(xd[i]);
                break;
        }
        Tape::accumulate(grads, xid, dx.size(), dx.data());
    });
    return result;
}

Tensor tanh_t(const Tensor& x) { return unary(UnaryOp::Tanh, x); }
Tensor sigmoid(const Tensor& x) { return unary(UnaryOp::Sigmoid, x); }
Tensor relu(const Tensor& x) { return unary(UnaryOp::Relu, x); }
Tensor exp_t(const Tensor& x) { return unary(UnaryOp::Exp, x); }
Tensor log_t(const Tensor& x) { return unary(UnaryOp::Log, x); }
Tensor sqrt_t(const Tensor& x) { return unary(UnaryOp::Sqrt, x); }
Tensor softplus(const Tensor& x) { return unary(UnaryOp::Softplus, x); }

Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b) {
    const BcastPlan plan = broadcast_plan(a.shape(), b.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(plan.out_size);
    bcast_walk(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
        switch (op) {
            case BinaryOp::Add: out[o] = ad[ai] + bd[bi]; break;
            case BinaryOp::Sub: out[o] = ad[ai] - bd[bi]; break;
            case BinaryOp::Mul: out[o] = ad[ai] * bd[bi]; break;
            case BinaryOp::Div: out[o] = ad[ai] / bd[bi]; break;
        }
    });
    Tensor result(plan.out_shape, std::move(out));
    Tape* tape = result_tape(a, b);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int aid = a.node();
    const int bid = b.node();
    Tensor av = a;
    Tensor bv = b;
    tape->record(result.node(), [op, plan, aid, bid, av, bv](const std::vector<double>& dout,
                                                            Tape::Grads& grads) {
        const auto& ad = av.data();
        const auto& bd = bv.data();
        std::vector<double> da(aid >= 0 ? ad.size() : 0, 0.0);
        std::vector<double> db(bid >= 0 ? bd.size() : 0, 0.0);
        bcast_walk(plan, [&](std::size_t o, std::size_t ai, std::size_t bi) {
            const double g = dout[o];
            switch (op) {
                case BinaryOp::Add:
                    if (aid >= 0) da[ai] += g;
                    if (bid >= 0) db[bi] += g;
                    break;
                case BinaryOp::Sub:
                    if (aid >= 0) da[ai] += g;
                    if (bid >= 0) db[bi] -= g;
                    break;
                case BinaryOp::Mul:
                    if (aid >= 0) da[ai] += g * bd[bi];
                    if (bid >= 0) db[bi] += g * ad[ai];
                    break;
                case BinaryOp::Div:
                    if (aid >= 0) da[ai] += g / bd[bi];
                    if (bid >= 0) db[bi] -= g * ad[ai] / (bd[bi] * bd[bi]);
                    break;
            }
        });
        if (aid >= 0) Tape::accumulate(grads, aid, da.size(), da.data());
        if (bid >= 0) Tape::accumulate(grads, bid, db.size(), db.data());
    });
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Div, a, b); }

Tensor operator*(double s, const Tensor& a) {
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = s * ad[i];
    Tensor result(a.shape(), std::move(out));
    Tape* tape = result_tape(a);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int aid = a.node();
    tape->record(result.node(), [s, aid](const std::vector<double>& dout, Tape::Grads& grads) {
        std::vector<double> da(dout.size());
        for (std::size_t i = 0; i < dout.size(); ++i) da[i] = s * dout[i];
        Tape::accumulate(grads, aid, da.size(), da.data());
    });
    return result;
}

// ---------------------------------------------------------------------------
// Dense ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError(format_msg("matmul shape mismatch: ", shape_to_string(a.shape()),
                                        " x ", shape_to_string(b.shape())));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    {
        ConstMap A(a.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        ConstMap B(b.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        MutMap C(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        C.noalias() = A * B;
    }
    Tensor result({m, n}, std::move(out));
    Tape* tape = result_tape(a, b);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int aid = a.node();
    const int bid = b.node();
    Tensor av = a;
    Tensor bv = b;
    tape->record(result.node(), [m, k, n, aid, bid, av, bv](const std::vector<double>& dout,
                                                            Tape::Grads& grads) {
        ConstMap A(av.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        ConstMap B(bv.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        ConstMap dC(dout.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        if (aid >= 0) {
            std::vector<double> da(m * k);
            MutMap dA(da.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
            dA.noalias() = dC * B.transpose();
            Tape::accumulate(grads, aid, da.size(), da.data());
        }
        if (bid >= 0) {
            std::vector<double> db(k * n);
            MutMap dB(db.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
            dB.noalias() = A.transpose() * dC;
            Tape::accumulate(grads, bid, db.size(), db.data());
        }
    });
    return result;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
    if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0)) {
        throw DimensionError(format_msg("matvec shape mismatch: ", shape_to_string(w.shape()),
                                        " x ", shape_to_string(x.shape())));
    }
    const std::size_t m = w.dim(0), n = w.dim(1);
    std::vector<double> out(m);
    {
        ConstMap W(w.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        Eigen::Map<const Eigen::VectorXd> X(x.data().data(), static_cast<Eigen::Index>(n));
        Eigen::Map<Eigen::VectorXd> Y(out.data(), static_cast<Eigen::Index>(m));
        Y.noalias() = W * X;
    }
    Tensor result({m}, std::move(out));
    Tape* tape = result_tape(w, x);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int wid = w.node();
    const int xid = x.node();
    Tensor wv = w;
    Tensor xv = x;
    tape->record(result.node(), [m, n, wid, xid, wv, xv](const std::vector<double>& dout,
                                                         Tape::Grads& grads) {
        ConstMap W(wv.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        Eigen::Map<const Eigen::VectorXd> X(xv.data().data(), static_cast<Eigen::Index>(n));
        Eigen::Map<const Eigen::VectorXd> dY(dout.data(), static_cast<Eigen::Index>(m));
        if (wid >= 0) {
            std::vector<double> dw(m * n);
            MutMap dW(dw.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
            dW.noalias() = dY * X.transpose();
            Tape::accumulate(grads, wid, dw.size(), dw.data());
        }
        if (xid >= 0) {
            std::vector<double> dx(n);
            Eigen::Map<Eigen::VectorXd> dX(dx.data(), static_cast<Eigen::Index>(n));
            dX.noalias() = W.transpose() * dY;
            Tape::accumulate(grads, xid, dx.size(), dx.data());
        }
    });
    return result;
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("transpose requires a 2-D tensor");
    const std::size_t r = x.dim(0), c = x.dim(1);
    const auto& xd = x.data();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
    }
    Tensor result({c, r}, std::move(out));
    Tape* tape = result_tape(x);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int xid = x.node();
    tape->record(result.node(), [r, c, xid](const std::vector<double>& dout, Tape::Grads& grads) {
        std::vector<double> dx(r * c);
        for (std::size_t j = 0; j < c; ++j) {
            for (std::size_t i = 0; i < r; ++i) dx[i * c + j] = dout[j * r + i];
        }
        Tape::accumulate(grads, xid, dx.size(), dx.data());
    });
    return result;
}

Tensor conv1d(const Tensor& input, const Tensor& kernels) {
    if (input.rank() != 2 || kernels.rank() != 3) {
        throw DimensionError(format_msg("conv1d expects input [C_in,L] and kernels [C_out,C_in,W], got ",
                                        shape_to_string(input.shape()), " and ",
                                        shape_to_string(kernels.shape())));
    }
    const std::size_t cin = input.dim(0), len = input.dim(1);
    const std::size_t cout = kernels.dim(0), kcin = kernels.dim(1), width = kernels.dim(2);
    if (kcin != cin) {
        throw DimensionError(format_msg("conv1d channel mismatch: input has ", cin,
                                        " channels, kernels expect ", kcin));
    }
    if (width % 2 == 0) {
        throw ConfigError(format_msg("conv1d kernel width must be odd for same padding, got ", width));
    }
    const std::size_t pad = width / 2;
    const auto& xd = input.data();
    const auto& kd = kernels.data();
    std::vector<double> out(cout * len, 0.0);
    for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t i = 0; i < cin; ++i) {
            const double* krow = &kd[(o * cin + i) * width];
            const double* xrow = &xd[i * len];
            double* orow = &out[o * len];
            for (std::size_t w = 0; w < width; ++w) {
                const double kv = krow[w];
                if (kv == 0.0) continue;
                // out[l] += kv * x[l + w - pad]
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(w) - static_cast<std::ptrdiff_t>(pad);
                const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
                const std::size_t hi = off > 0 ? len - static_cast<std::size_t>(off) : len;
                for (std::size_t l = lo; l < hi; ++l) {
                    orow[l] += kv * xrow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(l) + off)];
                }
            }
        }
    }
    Tensor result({cout, len}, std::move(out));
    Tape* tape = result_tape(input, kernels);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int xid = input.node();
    const int kid = kernels.node();
    Tensor xv = input;
    Tensor kv = kernels;
    tape->record(result.node(), [cin, cout, len, width, pad, xid, kid, xv, kv](
                                    const std::vector<double>& dout, Tape::Grads& grads) {
        const auto& xd = xv.data();
        const auto& kd = kv.data();
        if (xid >= 0) {
            std::vector<double> dx(cin * len, 0.0);
            for (std::size_t o = 0; o < cout; ++o) {
                for (std::size_t i = 0; i < cin; ++i) {
                    const double* krow = &kd[(o * cin + i) * width];
                    const double* grow = &dout[o * len];
                    double* drow = &dx[i * len];
                    for (std::size_t w = 0; w < width; ++w) {
                        const double kvv = krow[w];
                        if (kvv == 0.0) continue;
                        const std::ptrdiff_t off =
                            static_cast<std::ptrdiff_t>(w) - static_cast<std::ptrdiff_t>(pad);
                        const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
                        const std::size_t hi = off > 0 ? len - static_cast<std::size_t>(off) : len;
                        for (std::size_t l = lo; l < hi; ++l) {
                            drow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(l) + off)] +=
                                kvv * grow[l];
                        }
                    }
                }
            }
            Tape::accumulate(grads, xid, dx.size(), dx.data());
        }
        if (kid >= 0) {
            std::vector<double> dk(cout * cin * width, 0.0);
            for (std::size_t o = 0; o < cout; ++o) {
                for (std::size_t i = 0; i < cin; ++i) {
                    const double* grow = &dout[o * len];
                    const double* xrow = &xd[i * len];
                    double* krow = &dk[(o * cin + i) * width];
                    for (std::size_t w = 0; w < width; ++w) {
                        const std::ptrdiff_t off =
                            static_cast<std::ptrdiff_t>(w) - static_cast<std::ptrdiff_t>(pad);
                        const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
                        const std::size_t hi = off > 0 ? len - static_cast<std::size_t>(off) : len;
                        double acc = 0.0;
                        for (std::size_t l = lo; l < hi; ++l) {
                            acc += grow[l] *
                                   xrow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(l) + off)];
                        }
                        krow[w] += acc;
                    }
                }
            }
            Tape::accumulate(grads, kid, dk.size(), dk.data());
        }
    });
    return result;
}

// ---------------------------------------------------------------------------
// softmax / reductions
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& x) {
    if (x.rank() == 0 || x.size() == 0) throw DimensionError("softmax on empty tensor");
    if (!x.all_finite()) throw InputError("softmax requires finite input");
    const std::size_t last = x.shape().back();
    const std::size_t rows = x.size() / last;
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = &xd[r * last];
        double* orow = &out[r * last];
        double mx = xr[0];
        for (std::size_t i = 1; i < last; ++i) mx = std::max(mx, xr[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < last; ++i) {
            orow[i] = std::exp(xr[i] - mx);
            sum += orow[i];
        }
        for (std::size_t i = 0; i < last; ++i) orow[i] /= sum;
    }
    Tensor result(x.shape(), std::move(out));
    Tape* tape = result_tape(x);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int xid = x.node();
    Tensor yv = result;
    tape->record(result.node(), [last, rows, xid, yv](const std::vector<double>& dout,
                                                      Tape::Grads& grads) {
        const auto& yd = yv.data();
        std::vector<double> dx(yd.size());
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = &yd[r * last];
            const double* gr = &dout[r * last];
            double dot = 0.0;
            for (std::size_t i = 0; i < last; ++i) dot += gr[i] * yr[i];
            double* dr = &dx[r * last];
            for (std::size_t i = 0; i < last; ++i) dr[i] = yr[i] * (gr[i] - dot);
        }
        Tape::accumulate(grads, xid, dx.size(), dx.data());
    });
    return result;
}

Tensor reduce(ReduceOp op, const Tensor& x) {
    const auto& xd = x.data();
    double acc = 0.0;
    for (double v : xd) acc += v;
    const double denom = op == ReduceOp::Mean ? static_cast<double>(xd.size()) : 1.0;
    Tensor result = Tensor::scalar(acc / denom);
    Tape* tape = result_tape(x);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int xid = x.node();
    const std::size_t n = xd.size();
    tape->record(result.node(), [xid, n, denom](const std::vector<double>& dout, Tape::Grads& grads) {
        std::vector<double> dx(n, dout[0] / denom);
        Tape::accumulate(grads, xid, n, dx.data());
    });
    return result;
}

Tensor reduce(ReduceOp op, const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw DimensionError(format_msg("reduce axis ", axis, " out of range for shape ",
                                        shape_to_string(x.shape())));
    }
    std::size_t outer, ad, inner;
    split_axis(x.shape(), axis, &outer, &ad, &inner);
    const auto& xd = x.data();
    std::vector<std::size_t> out_shape = x.shape();
    out_shape[axis] = 1;
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t a = 0; a < ad; ++a) {
            const double* src = &xd[(o * ad + a) * inner];
            double* dst = &out[o * inner];
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    const double denom = op == ReduceOp::Mean ? static_cast<double>(ad) : 1.0;
    if (op == ReduceOp::Mean) {
        for (double& v : out) v /= denom;
    }
    Tensor result(out_shape, std::move(out));
    Tape* tape = result_tape(x);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int xid = x.node();
    tape->record(result.node(), [xid, outer, ad, inner, denom](const std::vector<double>& dout,
                                                               Tape::Grads& grads) {
        std::vector<double> dx(outer * ad * inner);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t a = 0; a < ad; ++a) {
                const double* src = &dout[o * inner];
                double* dst = &dx[(o * ad + a) * inner];
                for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] / denom;
            }
        }
        Tape::accumulate(grads, xid, dx.size(), dx.data());
    });
    return result;
}

Tensor sum(const Tensor& x) { return reduce(ReduceOp::Sum, x); }
Tensor mean(const Tensor& x) { return reduce(ReduceOp::Mean, x); }

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    if (product(shape) != x.size()) {
        throw DimensionError(format_msg("reshape ", shape_to_string(x.shape()), " -> ",
                                        shape_to_string(shape), " changes element count"));
    }
    Tensor result(shape, x.data());
    Tape* tape = result_tape(x);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int xid = x.node();
    tape->record(result.node(), [xid](const std::vector<double>& dout, Tape::Grads& grads) {
        Tape::accumulate(grads, xid, dout.size(), dout.data());
    });
    return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const auto& first = parts.front().shape();
    if (axis >= first.size()) {
        throw DimensionError(format_msg("concat axis ", axis, " out of range"));
    }
    std::size_t axis_total = 0;
    Tape* tape = nullptr;
    for (const auto& p : parts) {
        if (p.rank() != first.size()) throw DimensionError("concat rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d) {
            if (d != axis && p.shape()[d] != first[d]) {
                throw DimensionError(format_msg("concat shape mismatch at axis ", d, ": ",
                                                shape_to_string(p.shape()), " vs ",
                                                shape_to_string(first)));
            }
        }
        axis_total += p.shape()[axis];
        if (p.tracked()) {
            if (tape && tape != p.tape()) throw ContractError("concat operands on different tapes");
            tape = p.tape();
        }
    }
    std::vector<std::size_t> out_shape = first;
    out_shape[axis] = axis_total;
    std::size_t outer, ad_out, inner;
    split_axis(out_shape, axis, &outer, &ad_out, &inner);
    std::vector<double> out(outer * ad_out * inner);
    std::size_t axis_off = 0;
    for (const auto& p : parts) {
        const std::size_t pa = p.shape()[axis];
        const auto& pd = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::memcpy(&out[(o * ad_out + axis_off) * inner], &pd[o * pa * inner],
                        pa * inner * sizeof(double));
        }
        axis_off += pa;
    }
    Tensor result(out_shape, std::move(out));
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    std::vector<int> ids;
    std::vector<std::size_t> sizes;
    ids.reserve(parts.size());
    for (const auto& p : parts) {
        ids.push_back(p.node());
        sizes.push_back(p.shape()[axis]);
    }
    tape->record(result.node(), [ids, sizes, outer, ad_out, inner](const std::vector<double>& dout,
                                                                   Tape::Grads& grads) {
        std::size_t axis_off = 0;
        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
            const std::size_t pa = sizes[pi];
            if (ids[pi] >= 0) {
                std::vector<double> dp(outer * pa * inner);
                for (std::size_t o = 0; o < outer; ++o) {
                    std::memcpy(&dp[o * pa * inner], &dout[(o * ad_out + axis_off) * inner],
                                pa * inner * sizeof(double));
                }
                Tape::accumulate(grads, ids[pi], dp.size(), dp.data());
            }
            axis_off += pa;
        }
    });
    return result;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= x.rank()) throw DimensionError(format_msg("slice axis ", axis, " out of range"));
    if (start + len > x.shape()[axis]) {
        throw DimensionError(format_msg("slice [", start, ",", start + len, ") exceeds axis size ",
                                        x.shape()[axis]));
    }
    std::size_t outer, ad, inner;
    split_axis(x.shape(), axis, &outer, &ad, &inner);
    std::vector<std::size_t> out_shape = x.shape();
    out_shape[axis] = len;
    const auto& xd = x.data();
    std::vector<double> out(outer * len * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        std::memcpy(&out[o * len * inner], &xd[(o * ad + start) * inner], len * inner * sizeof(double));
    }
    Tensor result(out_shape, std::move(out));
    Tape* tape = result_tape(x);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int xid = x.node();
    const std::size_t total = x.size();
    tape->record(result.node(), [xid, outer, ad, inner, start, len, total](
                                    const std::vector<double>& dout, Tape::Grads& grads) {
        std::vector<double> dx(total, 0.0);
        for (std::size_t o = 0; o < outer; ++o) {
            std::memcpy(&dx[(o * ad + start) * inner], &dout[o * len * inner],
                        len * inner * sizeof(double));
        }
        Tape::accumulate(grads, xid, dx.size(), dx.data());
    });
    return result;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ContractError("stack_rows of zero tensors");
    std::vector<Tensor> reshaped;
    reshaped.reserve(rows.size());
    for (const auto& r : rows) {
        if (r.rank() != 1) throw DimensionError("stack_rows expects 1-D tensors");
        reshaped.push_back(reshape(r, {1, r.size()}));
    }
    return concat(reshaped, 0);
}

Tensor take_rows(const Tensor& matrix, const std::vector<std::size_t>& indices) {
    if (matrix.rank() != 2) throw DimensionError("take_rows expects a 2-D tensor");
    const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
    for (std::size_t idx : indices) {
        if (idx >= rows) throw InputError(format_msg("row index ", idx, " out of range [0,", rows, ")"));
    }
    const auto& md = matrix.data();
    std::vector<double> out(indices.size() * cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::memcpy(&out[i * cols], &md[indices[i] * cols], cols * sizeof(double));
    }
    Tensor result({indices.size(), cols}, std::move(out));
    Tape* tape = result_tape(matrix);
    if (!tape) return result;
    result = tape->make_tracked(std::move(result));
    const int mid = matrix.node();
    tape->record(result.node(), [mid, indices, rows, cols](const std::vector<double>& dout,
                                                           Tape::Grads& grads) {
        std::vector<double> dm(rows * cols, 0.0);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            for (std::size_t c = 0; c < cols; ++c) dm[indices[i] * cols + c] += dout[i * cols + c];
        }
        Tape::accumulate(grads, mid, dm.size(), dm.data());
    });
    return result;
}

// ---------------------------------------------------------------------------
// Gradient checker
// ---------------------------------------------------------------------------

GradCheckReport grad_check(
    const std::function<double()>& eval,
    const std::function<std::vector<std::pair<std::string, std::vector<double>>>()>& analytic,
    const std::vector<NamedTensorRef>& params,
    double eps) {
    if (!(eps > 0.0)) throw ContractError("grad_check requires eps > 0");
    const double base1 = eval();
    const double base2 = eval();
    if (base1 != base2) {
        throw ContractError(format_msg("grad_check objective is non-deterministic: ", base1,
                                       " vs ", base2));
    }
    auto grads = analytic();
    auto grad_for = [&](const std::string& name) -> const std::vector<double>* {
        for (const auto& g : grads) {
            if (g.first == name) return &g.second;
        }
        return nullptr;
    };
    GradCheckReport report;
    for (const auto& p : params) {
        const std::vector<double>* g = grad_for(p.name);
        if (g == nullptr) {
            throw ContractError(format_msg("no analytic gradient reported for parameter ", p.name));
        }
        auto& values = p.value->raw();
        if (g->size() != values.size()) {
            throw ContractError(format_msg("gradient size mismatch for parameter ", p.name));
        }
        double param_max = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double fp = eval();
            values[i] = saved - eps;
            const double fm = eval();
            values[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic_v = (*g)[i];
            const double denom = std::max(1e-8, std::abs(analytic_v) + std::abs(numeric));
            const double rel = std::abs(analytic_v - numeric) / denom;
            param_max = std::max(param_max, rel);
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p.name;
                report.worst_index = i;
                report.worst_analytic = analytic_v;
                report.worst_numeric = numeric;
            }
        }
        report.per_param.emplace_back(p.name, param_max);
    }
    return report;
}

}  // namespace distilltron
