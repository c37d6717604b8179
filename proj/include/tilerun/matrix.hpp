#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tilerun/error.hpp"

namespace tilerun {

// Dense row-major matrix. Never empty: rows >= 1 and cols >= 1.
template <typename T>
class MatrixBuf {
 public:
  using value_type = T;

  MatrixBuf() : MatrixBuf(1, 1) {}

  MatrixBuf(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), T{}) {}

  MatrixBuf(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols)) {
      throw DimensionError("MatrixBuf: data length " + std::to_string(data_.size()) +
                           " != rows*cols " + std::to_string(rows * cols));
    }
  }

  // Row-wise initializer, mostly for tests: {{1, 2}, {3, 4}}.
  MatrixBuf(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(checked_size(rows_, cols_));
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("MatrixBuf: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static MatrixBuf identity(std::size_t n) {
    MatrixBuf m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  std::size_t bytes() const noexcept { return data_.size() * sizeof(T); }

  bool operator==(const MatrixBuf&) const = default;

 private:
  static std::size_t checked_size(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw DimensionError("MatrixBuf: rows and cols must be >= 1");
    return rows * cols;
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
MatrixBuf<T> transpose(const MatrixBuf<T>& m) {
  MatrixBuf<T> t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

template <typename To, typename From>
MatrixBuf<To> convert(const MatrixBuf<From>& m) {
  std::vector<To> out(m.size());
  std::transform(m.data().begin(), m.data().end(), out.begin(),
                 [](From v) { return static_cast<To>(v); });
  return MatrixBuf<To>(m.rows(), m.cols(), std::move(out));
}

// c += a * b, in place. Each c(i, j) accumulates over k in ascending order,
// which is what makes the tiled product bitwise equal to reference_gemm.
//
// `factor` splits the row and column ranges into factor x factor sub-blocks
// (the host-worker path). Sub-blocking never reorders the k sum, so the
// result is bitwise identical for every factor.
template <typename T>
void gemm_accumulate(const MatrixBuf<T>& a, const MatrixBuf<T>& b, MatrixBuf<T>& c,
                     std::size_t factor = 1) {
  if (a.cols() != b.rows())
    throw DimensionError("gemm: a.cols (" + std::to_string(a.cols()) + ") != b.rows (" +
                         std::to_string(b.rows()) + ")");
  if (c.rows() != a.rows() || c.cols() != b.cols())
    throw DimensionError("gemm: accumulator shape does not match a.rows x b.cols");
  if (factor == 0) throw DimensionError("gemm: sub-block factor must be >= 1");

  const std::size_t m = a.rows(), n = b.cols(), kk = a.cols();
  const std::size_t bm = (m + factor - 1) / factor;
  const std::size_t bn = (n + factor - 1) / factor;
  for (std::size_t i0 = 0; i0 < m; i0 += bm) {
    const std::size_t i1 = std::min(m, i0 + bm);
    for (std::size_t j0 = 0; j0 < n; j0 += bn) {
      const std::size_t j1 = std::min(n, j0 + bn);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t k = 0; k < kk; ++k) {
          const T aik = a(i, k);
          for (std::size_t j = j0; j < j1; ++j) c(i, j) += aik * b(k, j);
        }
      }
    }
  }
}

// Pure form of the tile kernel: returns c + a * b.
template <typename T>
MatrixBuf<T> gemm_tile(const MatrixBuf<T>& a, const MatrixBuf<T>& b, MatrixBuf<T> c) {
  gemm_accumulate(a, b, c);
  return c;
}

// Naive triple loop with a fixed k-ascending summation order. Ground truth
// for every equivalence test.
template <typename T>
MatrixBuf<T> reference_gemm(const MatrixBuf<T>& a, const MatrixBuf<T>& b) {
  if (a.cols() != b.rows())
    throw DimensionError("reference_gemm: a.cols (" + std::to_string(a.cols()) +
                         ") != b.rows (" + std::to_string(b.rows()) + ")");
  MatrixBuf<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T acc{};
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

}  // namespace tilerun
