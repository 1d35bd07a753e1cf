#pragma once

// Dense vector/matrix primitives, stable softmax, the seeded generator used
// by every stochastic step, and the central-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cake {

// All library failures carry the name of the module that raised them so the
// CLI can report "<module>: <what>" without guessing.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

using Vec64 = std::vector<double>;

// Row-major dense matrix.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  friend bool operator==(const Mat64&, const Mat64&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error("numerics", "dot: length mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// y = W x + b
inline Vec64 affine(const Mat64& w, std::span<const double> b, std::span<const double> x) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw Error("numerics", "affine: shape mismatch (W " + std::to_string(w.rows()) + "x" +
                                std::to_string(w.cols()) + ", x " + std::to_string(x.size()) +
                                ", b " + std::to_string(b.size()) + ")");
  }
  Vec64 y(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) y[r] = dot(w.row(r), x) + b[r];
  return y;
}

// g += a bᵀ
inline void add_outer(Mat64& g, std::span<const double> a, std::span<const double> b) {
  for (std::size_t r = 0; r < a.size(); ++r) {
    auto row = g.row(r);
    for (std::size_t c = 0; c < b.size(); ++c) row[c] += a[r] * b[c];
  }
}

// Wᵀ v
inline Vec64 transpose_times(const Mat64& w, std::span<const double> v) {
  Vec64 out(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += row[c] * v[r];
  }
  return out;
}

inline Vec64 softmax_stable(std::span<const double> logits) {
  if (logits.empty()) throw Error("numerics", "softmax of empty vector");
  if (!all_finite(logits)) throw Error("numerics", "softmax: non-finite logit");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec64 p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

// log(softmax(logits)[k]) without forming the probability.
inline double log_softmax_at(std::span<const double> logits, std::size_t k) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return logits[k] - mx - std::log(z);
}

// Index of the maximum; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// xoshiro256** seeded through splitmix64. Bit-identical on every platform;
// std:: distributions are avoided because their outputs are
// implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n) by rejection (no modulo bias).
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw Error("numerics", "next_below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; one draw per call, no cached spare.
  double next_gaussian() {
    double u1;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool operator==(const SeededRng&) const = default;

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
};

inline Vec64 rng_uniform(SeededRng& rng, std::size_t n, double lo, double hi) {
  if (!(lo < hi)) throw Error("numerics", "rng_uniform: invalid range, need lo < hi");
  Vec64 out(n);
  for (double& x : out) {
    x = lo + (hi - lo) * rng.next_double();
    if (x >= hi) x = std::nextafter(hi, lo);
  }
  return out;
}

// Fisher-Yates with the seeded generator.
template <typename T>
void shuffle(std::vector<T>& v, SeededRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.next_below(i);
    std::swap(v[i - 1], v[j]);
  }
}

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences, one coordinate at a time.
inline Vec64 finite_diff_grad(const ScalarFn& f, std::span<const double> params, double eps = 1e-5) {
  if (!(eps > 0.0)) throw Error("numerics", "finite_diff_grad: eps must be positive");
  Vec64 p(params.begin(), params.end());
  Vec64 g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + eps;
    const double fp = f(p);
    p[i] = orig - eps;
    const double fm = f(p);
    p[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error("numerics", "finite_diff_grad: non-finite function value at coordinate " +
                                  std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace cake
