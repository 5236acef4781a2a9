#include "kamir/tensor.hpp"

#include <cmath>
#include <limits>

namespace kamir {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

void require_finite(std::span<const float> v, const char* what) {
  for (float x : v) {
    if (!std::isfinite(x)) throw InternalError(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = splitmix64(x);
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = rotl64(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl64(state_[3], 45);
  return result;
}

double SeededRng::next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t SeededRng::next_below(std::uint64_t n) {
  if (n == 0) throw DataError("next_below: n must be >= 1");
  const std::uint64_t min = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= min) return r % n;
  }
}

double SeededRng::next_gaussian() {
  double u1 = next_unit();
  const double u2 = next_unit();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.empty() || a.size() != b.size())
    throw DataError("cosine_similarity: vectors must be non-empty and of equal length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DataError("cosine_similarity: degenerate zero-norm vector");
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  if (!std::isfinite(c)) throw InternalError("cosine_similarity: non-finite result");
  return c;
}

std::vector<float> softmax(std::span<const float> logits) {
  if (logits.empty()) throw DataError("softmax: empty input");
  float m = logits[0];
  for (float x : logits) {
    if (!std::isfinite(x)) throw DataError("softmax: non-finite logit");
    if (x > m) m = x;
  }
  std::vector<float> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - m);
    out[i] = static_cast<float>(e);
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (auto& x : out) x = static_cast<float>(x * inv);
  require_finite(out, "softmax");
  return out;
}

double shannon_entropy(std::span<const float> p) {
  if (p.empty()) throw DataError("shannon_entropy: empty input");
  double sum = 0.0;
  for (float x : p) {
    if (!(x >= 0.0f)) throw DataError("shannon_entropy: negative or NaN entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-5)
    throw DataError("shannon_entropy: input does not sum to 1 within 1e-5");
  double h = 0.0;
  for (float x : p) {
    if (x > 0.0f) h -= static_cast<double>(x) * std::log(static_cast<double>(x));
  }
  return h < 0.0 ? 0.0 : h;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows) throw DataError("matmul: inner dimensions do not match");
  DenseMatrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k)
        acc += static_cast<double>(a.data[i * a.cols + k]) * b.data[k * b.cols + j];
      out.data[i * b.cols + j] = static_cast<float>(acc);
    }
  }
  require_finite(out.data, "matmul");
  return out;
}

std::vector<float> layer_norm(std::span<const float> x, float eps) {
  if (x.empty()) throw DataError("layer_norm: empty input");
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<float>((x[i] - mean) * inv);
  require_finite(out, "layer_norm");
  return out;
}

float gelu(float x) {
  const float c = 0.7978845608028654f;  // sqrt(2/pi)
  const float inner = c * (x + 0.044715f * x * x * x);
  return 0.5f * x * (1.0f + std::tanh(inner));
}

float gelu_grad(float x) {
  const float c = 0.7978845608028654f;
  const float inner = c * (x + 0.044715f * x * x * x);
  const float th = std::tanh(inner);
  const float sech2 = 1.0f - th * th;
  return 0.5f * (1.0f + th) + 0.5f * x * sech2 * c * (1.0f + 3.0f * 0.044715f * x * x);
}

DenseMatrix gaussian_init(std::size_t rows, std::size_t cols, float stddev, SeededRng& rng) {
  DenseMatrix m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(rng.next_gaussian() * stddev);
  require_finite(m.data, "gaussian_init");
  return m;
}

}  // namespace kamir
