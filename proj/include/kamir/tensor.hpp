#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kamir/errors.hpp"

namespace kamir {

// Row-major dense float matrix. Operations in this module keep every entry
// finite; a NaN/Inf result is an internal error, never a silent value.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// splitmix64-seeded xoshiro256**. Pure 64-bit integer arithmetic, so an
// identical seed yields an identical stream on every platform. Single-owner:
// never share one instance across threads.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform double in [0, 1), 53 bits.
  double next_unit();
  // Uniform integer in [0, n), rejection-sampled (no modulo bias). n >= 1.
  std::uint64_t next_below(std::uint64_t n);
  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double next_gaussian();

 private:
  std::array<std::uint64_t, 4> state_{};
};

// (a.b)/(|a||b|) with 64-bit accumulation, clamped to [-1, 1].
// Zero-norm input throws DataError: a zero vector here means an upstream bug.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Max-shifted softmax; output entries positive and summing to 1 within 1e-6.
std::vector<float> softmax(std::span<const float> logits);

// -sum p ln p in nats with 0*ln 0 := 0. Input must be a distribution
// (entries >= 0, sum within 1e-5 of 1).
double shannon_entropy(std::span<const float> p);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// Normalizes to zero mean / unit variance (no affine part). Constant input
// maps to zeros via the epsilon term.
std::vector<float> layer_norm(std::span<const float> x, float eps = 1e-5f);

// tanh-approximation GELU and its derivative.
float gelu(float x);
float gelu_grad(float x);

DenseMatrix gaussian_init(std::size_t rows, std::size_t cols, float stddev, SeededRng& rng);

}  // namespace kamir
