#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace idac {

/// Dense row-major matrix of 64-bit floats.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using ProbVector = std::vector<double>;

/// xoshiro256** seeded through splitmix64.
///
/// Substreams are derived from the construction seed and a tag only, never
/// from the draws already made, so `substream(t)` is the same generator no
/// matter how far the parent has advanced. Experiments use this to give data
/// shuffling, weight init, noise injection and bootstrap their own streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  Rng substream(std::uint64_t tag) const;

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer on [0, n); rejection sampling, no modulo bias. n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller (one output per call).
  double normal() noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

/// Fixed tags for the experiment-level substreams.
enum class Stream : std::uint64_t {
  Shuffle = 0x5348554646ULL,
  Init = 0x494e4954ULL,
  Noise = 0x4e4f495345ULL,
  Bootstrap = 0x424f4f54ULL,
};

inline Rng substream(const Rng& rng, Stream s) { return rng.substream(static_cast<std::uint64_t>(s)); }

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

double log_sum_exp(std::span<const double> values);
/// Max-subtracted softmax. Throws InvalidInput on non-finite logits or fewer than two entries.
ProbVector softmax_stable(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
/// Row-wise softmax_stable.
Matrix softmax_rows(const Matrix& logits);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
/// A non-finite f value raises NumericDegeneracy.
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-4);

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
/// Adds a 1×cols bias row to every row of m.
Matrix add_bias(const Matrix& m, const Matrix& bias);
Matrix relu(const Matrix& m);
/// Zeroes grad wherever the pre-activation is <= 0.
Matrix relu_backward(const Matrix& grad, const Matrix& pre_activation);
/// 1×cols row of column sums.
Matrix column_sums(const Matrix& m);

}  // namespace idac
