#pragma once

// Shared plumbing private to the library: binary little-endian IO, numeric
// text formatting, a minimal parallel loop, and the Adam optimizer state.

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "kamir/errors.hpp"

namespace kamir::detail {

// ---------------------------------------------------------------- formatting

// Shortest %g form with 9 significant digits; round-trips any float32.
inline std::string format_g9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::string format_g6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------- file bytes

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

// ------------------------------------------------------------- binary coding

class ByteWriter {
 public:
  void magic(const char (&m)[9]) { buf_.append(m, 8); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(char(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32_span(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void expect_magic(const char (&m)[9]) {
    if (bytes_.size() < 8 || bytes_.compare(0, 8, m, 8) != 0)
      throw FormatError(std::string("bad magic at offset 0 (expected \"") + m + "\")");
    pos_ = 8;
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void f32_span(std::span<float> out) {
    need(out.size() * 4, "f32 block");
    for (auto& v : out) v = f32();
  }

  void expect_end() {
    if (pos_ != bytes_.size())
      throw FormatError("trailing bytes at offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("truncated file: reading ") + what + " at offset " +
                        std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

// ------------------------------------------------------------- parallel loop

// Runs f(i) for i in [0, n). Work items must be independent; results keyed by
// index stay deterministic regardless of thread count.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ----------------------------------------------------------------- optimizer

// Adam with bias correction; per-coordinate math in double, state in float.
struct AdamState {
  std::vector<float> m, v;
  std::uint64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit AdamState(std::size_t n, double b1 = 0.9, double b2 = 0.999, double e = 1e-8)
      : m(n, 0.0f), v(n, 0.0f), beta1(b1), beta2(b2), eps(e) {}

  void step(std::span<float> params, std::span<const float> grad, double lr) {
    KAMIR_CHECK(params.size() == m.size() && grad.size() == m.size(),
                "AdamState: size mismatch");
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * g;
      const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
      params[i] = static_cast<float>(params[i] - update);
    }
  }
};

// --------------------------------------------------------------- CSV helpers

// Quotes a CSV field only when it contains a separator, quote or newline.
inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

// Reads one CSV field starting at pos (handles the quoted form produced by
// csv_escape); advances pos past the trailing comma when present.
inline std::string csv_take_field(const std::string& line, std::size_t& pos) {
  std::string out;
  if (pos < line.size() && line[pos] == '"') {
    ++pos;
    for (;;) {
      if (pos >= line.size()) throw FormatError("unterminated quoted CSV field");
      if (line[pos] == '"') {
        if (pos + 1 < line.size() && line[pos + 1] == '"') {
          out += '"';
          pos += 2;
        } else {
          ++pos;
          break;
        }
      } else {
        out += line[pos++];
      }
    }
  } else {
    while (pos < line.size() && line[pos] != ',') out += line[pos++];
  }
  if (pos < line.size() && line[pos] == ',') ++pos;
  return out;
}

}  // namespace kamir::detail
