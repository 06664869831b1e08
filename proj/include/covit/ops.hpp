#pragma once

// Differentiable primitives recorded on a Graph. Matrix ops view their
// operands as rows x cols (see Tensor); all shapes are checked and a
// mismatch throws ShapeError.

#include "covit/autodiff.hpp"

#include <random>
#include <span>
#include <vector>

namespace covit::ops {

inline constexpr double kLayerNormEps = 1e-5;

// [m x k] * [k x n]
Var matmul(const Var& a, const Var& b);
// [m x k] * [n x k]^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
// Adds a length-n bias to every row of an [m x n] operand.
Var add_row(const Var& a, const Var& bias);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);
Var mean(const Var& a);

Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var row(const Var& a, std::size_t index);

// Along the last axis, max-subtracted.
Var softmax(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = kLayerNormEps);
// Tanh approximation.
Var gelu(const Var& x);
// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, double p, std::mt19937_64& rng);

// Mean over the batch of -log softmax(logits)[label]. logits is [b x c].
Var cross_entropy(const Var& logits, std::span<const int> labels);

// Plain scalar forms shared by the ops and their tests.
double gelu_value(double x);
double gelu_derivative(double x);
std::vector<double> softmax_values(std::span<const double> row);

}  // namespace covit::ops
