#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "sit/autodiff/tape.hpp"

namespace sit::ad {

using Rng = std::mt19937_64;

inline constexpr double kLayerNormEps = 1e-6;

enum class Transpose { none, first, second };

// op(a) * op(b); `transpose` selects which operand is used transposed.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, Transpose transpose = Transpose::none);

// Element-wise a + b. b may also be a single row broadcast over a's rows.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

template <typename T>
Var<T> transpose(Var<T> a);

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count);
template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count);

// out row i = a row index[i]; repeated indices accumulate in backward.
template <typename T>
Var<T> gather_rows(Var<T> a, std::span<const std::uint32_t> index);

// Row-wise softmax, stabilised by subtracting the row maximum.
template <typename T>
Var<T> softmax_rows(Var<T> a);

// Row-wise (x - mean) / sqrt(var + eps), then * gamma + beta when given
// (gamma, beta are 1 x cols).
template <typename T>
Var<T> layernorm_rows(Var<T> a, std::optional<Var<T>> gamma = std::nullopt,
                      std::optional<Var<T>> beta = std::nullopt, double eps = kLayerNormEps);

template <typename T>
Var<T> layernorm_rows(Var<T> a, Var<T> gamma, Var<T> beta, double eps = kLayerNormEps) {
  return layernorm_rows(a, std::optional<Var<T>>(gamma), std::optional<Var<T>>(beta), eps);
}

// x * Phi(x) with the exact Gaussian CDF.
template <typename T>
Var<T> gelu(Var<T> a);

// Inverted dropout. Identity (the same Var) when !training or p == 0.
template <typename T>
Var<T> dropout(Var<T> a, double p, bool training, Rng& rng);

// Mean squared error against a constant target. With a row mask, only the
// selected rows contribute and the mean runs over their entries.
template <typename T>
Var<T> mse(Var<T> pred, const Array<T>& target,
           std::optional<std::span<const std::uint8_t>> row_mask = std::nullopt);

// Convenience: x W + b.
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  return add(matmul(x, weight), bias);
}

}  // namespace sit::ad
