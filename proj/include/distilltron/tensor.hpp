// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation engine: a value-semantic
// Tensor (row-major doubles) plus a dynamic Tape recording backward rules.
// Eager execution; the tape is rebuilt per training step. A tape and the
// tensors recorded on it are confined to one worker at a time; untracked
// tensors are immutable values and freely shareable.

#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "distilltron/common.hpp"

namespace distilltron {

class Tape;
class GradientMap;

class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor from_vector(std::vector<double> values);  // 1-D
    static Tensor from_matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const;
    std::size_t dim(std::size_t axis) const;

    const std::vector<double>& data() const;
    // In-place mutation is only allowed on untracked tensors (parameters
    // between steps); tracked values are frozen once recorded on a tape.
    std::vector<double>& raw();

    double item() const;                 // scalar (size-1) tensors only
    double at(std::size_t flat) const { return data()[flat]; }
    double at2(std::size_t r, std::size_t c) const;

    bool defined() const { return static_cast<bool>(data_); }
    bool tracked() const { return node_ >= 0; }
    int node() const { return node_; }
    Tape* tape() const { return tape_; }

    bool all_finite() const;
    Tensor detached() const;             // same values, no tape link
    Tensor clone() const;                // deep copy, untracked

private:
    friend class Tape;
    std::vector<std::size_t> shape_;
    std::shared_ptr<const std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Per-node gradient buffers produced by one backward pass.
class GradientMap {
public:
    bool has(const Tensor& t) const;
    // Gradient of the loss w.r.t. a tracked tensor; zero-filled when the
    // tensor does not influence the loss.
    Tensor grad(const Tensor& t) const;

private:
    friend class Tape;
    std::vector<std::vector<double>> grads_;
    std::vector<std::vector<std::size_t>> shapes_;
    const Tape* tape_ = nullptr;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers an (untracked) tensor as a leaf and returns a tracked handle
    // sharing the same storage.
    Tensor watch(const Tensor& t);

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients in reverse
    // topological order. loss must be a scalar recorded on this tape.
    GradientMap backward(const Tensor& loss);

    std::size_t num_nodes() const { return shapes_.size(); }
    std::size_t num_ops() const { return ops_.size(); }

    // --- engine internals (used by the op implementations) ---
    using Grads = std::vector<std::vector<double>>;
    using BackwardFn = std::function<void(const std::vector<double>& dout, Grads& grads)>;

    Tensor make_tracked(Tensor value);
    void record(int out_node, BackwardFn fn);
    static void accumulate(Grads& grads, int node, std::size_t size, const double* contrib);

private:
    struct OpRec {
        int out;
        BackwardFn fn;
    };
    std::vector<std::vector<std::size_t>> shapes_;
    std::vector<OpRec> ops_;
};

// ---------------------------------------------------------------------------
// Operations. Each computes eagerly and, when any input is tracked, records a
// backward rule on the inputs' tape. Mixing tensors from two different tapes
// is a contract error.
// ---------------------------------------------------------------------------

enum class UnaryOp { Tanh, Sigmoid, Relu, Exp, Log, Sqrt, Softplus };
enum class BinaryOp { Add, Sub, Mul, Div };
enum class ReduceOp { Sum, Mean };

Tensor unary(UnaryOp op, const Tensor& x);
Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b);

// shapes equal, or one operand broadcastable by the trailing-dimension rule
// (align shapes on the right; each dimension must match or be 1/missing).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator*(double s, const Tensor& a);

Tensor tanh_t(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp_t(const Tensor& x);
Tensor log_t(const Tensor& x);
Tensor sqrt_t(const Tensor& x);
Tensor softplus(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);           // [m,k] x [k,n]
Tensor matvec(const Tensor& w, const Tensor& x);           // [m,n] x [n] -> [m]
Tensor transpose(const Tensor& x);                         // 2-D

// Cross-correlation with zero padding; output length equals input length.
// input [C_in, L], kernels [C_out, C_in, W] with W odd.
Tensor conv1d(const Tensor& input, const Tensor& kernels);

Tensor softmax(const Tensor& x);                           // last axis
Tensor reduce(ReduceOp op, const Tensor& x);               // all elements -> scalar
Tensor reduce(ReduceOp op, const Tensor& x, std::size_t axis);  // keeps the axis as size 1
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
Tensor stack_rows(const std::vector<Tensor>& rows);        // n 1-D tensors -> [n, len]
Tensor take_rows(const Tensor& matrix, const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------
// Finite-difference gradient checker (verification harness). `eval` returns
// the scalar objective at the current parameter values; `analytic` returns
// the objective together with gradients for every named parameter, computed
// at the same point. Parameters are perturbed in place through `raw()`.
// ---------------------------------------------------------------------------

struct NamedTensorRef {
    std::string name;
    Tensor* value;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::vector<std::pair<std::string, double>> per_param;  // max rel err per parameter
};

GradCheckReport grad_check(
    const std::function<double()>& eval,
    const std::function<std::vector<std::pair<std::string, std::vector<double>>>()>& analytic,
    const std::vector<NamedTensorRef>& params,
    double eps);

}  // namespace distilltron
