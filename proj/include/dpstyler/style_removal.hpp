#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include "dpstyler/errors.hpp"
#include "dpstyler/matrix.hpp"
#include "dpstyler/rng.hpp"

namespace dpstyler {

/// Style-SE gate: a(v) = sigmoid(relu(v^T W1) W2), R(v) = a(v) * v + v. No biases.
template <std::floating_point T>
struct StyleRemoverParams {
  Matrix<T> w1;  // C x H
  Matrix<T> w2;  // H x C
  int ratio = 16;

  std::size_t dim() const { return w1.rows(); }
  std::size_t hidden() const { return w1.cols(); }

  void validate() const {
    if (w1.rows() == 0 || w1.cols() == 0) throw ContractError("style remover: empty parameters");
    if (w2.rows() != w1.cols() || w2.cols() != w1.rows()) throw ContractError("style remover: W1/W2 shapes disagree");
    for (auto x : w1.flat()) {
      if (!std::isfinite(x)) throw ContractError("style remover: non-finite W1");
    }
    for (auto x : w2.flat()) {
      if (!std::isfinite(x)) throw ContractError("style remover: non-finite W2");
    }
  }

  template <typename U>
  StyleRemoverParams<U> cast() const {
    return {w1.template cast<U>(), w2.template cast<U>(), ratio};
  }

  bool operator==(const StyleRemoverParams&) const = default;
};

inline std::size_t remover_hidden_width(std::size_t dim, int ratio) {
  if (ratio < 1) throw ContractError("compression ratio must be >= 1");
  const std::size_t hidden = dim / static_cast<std::size_t>(ratio);
  if (hidden < 1) {
    throw ContractError("compression ratio " + std::to_string(ratio) + " leaves no hidden units for C=" +
                        std::to_string(dim));
  }
  return hidden;
}

/// Xavier-uniform init with each matrix's own fans.
template <std::floating_point T>
StyleRemoverParams<T> remover_init(std::size_t dim, int ratio, Rng& rng) {
  const std::size_t hidden = remover_hidden_width(dim, ratio);
  const double bound = std::sqrt(6.0 / static_cast<double>(dim + hidden));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  StyleRemoverParams<T> params{Matrix<T>(dim, hidden), Matrix<T>(hidden, dim), ratio};
  for (auto& x : params.w1.flat()) x = static_cast<T>(uniform(rng));
  for (auto& x : params.w2.flat()) x = static_cast<T>(uniform(rng));
  return params;
}

/// Intermediates of one forward pass, kept for the backward pass.
template <std::floating_point T>
struct RemoverTrace {
  std::vector<T> hidden_pre;  // v^T W1
  std::vector<T> hidden;      // relu(hidden_pre)
  std::vector<T> gate;        // a(v)
  std::vector<T> output;      // R(v)
};

template <std::floating_point T>
RemoverTrace<T> remover_forward_traced(std::type_identity_t<std::span<const T>> v, const StyleRemoverParams<T>& params) {
  const std::size_t dim = params.dim();
  const std::size_t hidden = params.hidden();
  if (v.size() != dim) {
    throw ContractError("remover_forward: input length " + std::to_string(v.size()) + " != C=" + std::to_string(dim));
  }
  RemoverTrace<T> trace{std::vector<T>(hidden, T{0}), std::vector<T>(hidden), std::vector<T>(dim, T{0}),
                        std::vector<T>(dim)};
  for (std::size_t c = 0; c < dim; ++c) {
    const auto w_row = params.w1.row(c);
    for (std::size_t h = 0; h < hidden; ++h) trace.hidden_pre[h] += v[c] * w_row[h];
  }
  for (std::size_t h = 0; h < hidden; ++h) trace.hidden[h] = trace.hidden_pre[h] > T{0} ? trace.hidden_pre[h] : T{0};
  for (std::size_t h = 0; h < hidden; ++h) {
    const auto w_row = params.w2.row(h);
    for (std::size_t c = 0; c < dim; ++c) trace.gate[c] += trace.hidden[h] * w_row[c];
  }
  for (std::size_t c = 0; c < dim; ++c) {
    trace.gate[c] = T{1} / (T{1} + std::exp(-trace.gate[c]));
    trace.output[c] = trace.gate[c] * v[c] + v[c];
  }
  return trace;
}

template <std::floating_point T>
std::vector<T> remover_forward(std::type_identity_t<std::span<const T>> v, const StyleRemoverParams<T>& params) {
  return remover_forward_traced(v, params).output;
}

template <std::floating_point T>
struct RemoverGradients {
  std::vector<T> d_input;
  Matrix<T> d_w1;
  Matrix<T> d_w2;
};

/// Accumulates the gradients of <upstream, R(v)> into `grads` (d_w1, d_w2 added to, d_input overwritten).
/// relu'(0) is taken as 0.
template <std::floating_point T>
void remover_backward_accumulate(std::type_identity_t<std::span<const T>> v, const StyleRemoverParams<T>& params,
                                 const RemoverTrace<T>& trace, std::type_identity_t<std::span<const T>> upstream,
                                 RemoverGradients<T>& grads) {
  const std::size_t dim = params.dim();
  const std::size_t hidden = params.hidden();
  if (v.size() != dim || upstream.size() != dim) throw ContractError("remover_backward: shape mismatch");
  if (grads.d_w1.rows() != dim || grads.d_w1.cols() != hidden || grads.d_w2.rows() != hidden ||
      grads.d_w2.cols() != dim) {
    throw ContractError("remover_backward: gradient buffers have the wrong shape");
  }

  std::vector<T> d_gate_pre(dim);
  grads.d_input.assign(dim, T{0});
  for (std::size_t c = 0; c < dim; ++c) {
    const T a = trace.gate[c];
    grads.d_input[c] = upstream[c] * (T{1} + a);
    d_gate_pre[c] = upstream[c] * v[c] * a * (T{1} - a);
  }
  std::vector<T> d_hidden_pre(hidden, T{0});
  for (std::size_t h = 0; h < hidden; ++h) {
    const auto w_row = params.w2.row(h);
    auto g_row = grads.d_w2.row(h);
    T acc{0};
    for (std::size_t c = 0; c < dim; ++c) {
      g_row[c] += trace.hidden[h] * d_gate_pre[c];
      acc += w_row[c] * d_gate_pre[c];
    }
    d_hidden_pre[h] = trace.hidden_pre[h] > T{0} ? acc : T{0};
  }
  for (std::size_t c = 0; c < dim; ++c) {
    const auto w_row = params.w1.row(c);
    auto g_row = grads.d_w1.row(c);
    for (std::size_t h = 0; h < hidden; ++h) {
      g_row[h] += v[c] * d_hidden_pre[h];
      grads.d_input[c] += w_row[h] * d_hidden_pre[h];
    }
  }
}

template <std::floating_point T>
RemoverGradients<T> remover_backward(std::type_identity_t<std::span<const T>> v, const StyleRemoverParams<T>& params,
                                     std::type_identity_t<std::span<const T>> upstream) {
  const auto trace = remover_forward_traced(v, params);
  RemoverGradients<T> grads{{}, Matrix<T>(params.dim(), params.hidden()), Matrix<T>(params.hidden(), params.dim())};
  remover_backward_accumulate(v, params, trace, upstream, grads);
  return grads;
}

}  // namespace dpstyler
