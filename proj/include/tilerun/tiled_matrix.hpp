#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tilerun/error.hpp"
#include "tilerun/matrix.hpp"

namespace tilerun {

using TaskId = std::uint64_t;

struct TileCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const TileCoord&) const = default;
};

// Identifies the operand a tile belongs to. A, B and C are the operands of
// a single GEMM; callers that run several products over shared operands may
// hand out their own ids.
using MatrixId = std::uint32_t;
inline constexpr MatrixId kMatrixA = 0;
inline constexpr MatrixId kMatrixB = 1;
inline constexpr MatrixId kMatrixC = 2;

struct TileKey {
  MatrixId matrix = kMatrixA;
  TileCoord coord;
  auto operator<=>(const TileKey&) const = default;
};

struct TileKeyHash {
  std::size_t operator()(const TileKey& k) const noexcept {
    std::uint64_t h = k.matrix;
    h = h * 0x9E3779B97F4A7C15ull ^ k.coord.row;
    h = h * 0x9E3779B97F4A7C15ull ^ k.coord.col;
    return std::hash<std::uint64_t>{}(h);
  }
};

inline std::string to_string(const TileKey& k) {
  static constexpr const char* names[] = {"A", "B", "C"};
  std::string m = k.matrix < 3 ? names[k.matrix] : "M" + std::to_string(k.matrix);
  return m + "[" + std::to_string(k.coord.row) + "," + std::to_string(k.coord.col) + "]";
}

inline std::size_t ceil_div(std::size_t n, std::size_t d) { return (n + d - 1) / d; }

// Row-major task ids: id = i * grid_cols + j.
inline TaskId encode_task(std::size_t i, std::size_t j, std::size_t grid_cols) {
  if (grid_cols == 0) throw DimensionError("encode_task: grid_cols must be >= 1");
  if (j >= grid_cols) throw DimensionError("encode_task: column index out of grid");
  return static_cast<TaskId>(i * grid_cols + j);
}

inline TileCoord decode_task(TaskId id, std::size_t grid_rows, std::size_t grid_cols) {
  if (grid_cols == 0 || grid_rows == 0) throw DimensionError("decode_task: empty grid");
  if (id >= grid_rows * grid_cols)
    throw DimensionError("decode_task: id " + std::to_string(id) + " out of range for " +
                         std::to_string(grid_rows) + "x" + std::to_string(grid_cols) + " grid");
  return {static_cast<std::size_t>(id / grid_cols), static_cast<std::size_t>(id % grid_cols)};
}

// A matrix held as a grid of tiles. Interior tiles are tile_size x tile_size;
// the last tile row / column is ragged when the dimension is not a multiple
// of tile_size. No padding.
template <typename T>
class TiledMatrix {
 public:
  TiledMatrix(std::size_t rows, std::size_t cols, std::size_t tile_size)
      : rows_(rows), cols_(cols), tile_(tile_size) {
    if (tile_size == 0) throw DimensionError("tile size must be >= 1");
    if (rows == 0 || cols == 0) throw DimensionError("TiledMatrix: rows and cols must be >= 1");
    grid_rows_ = ceil_div(rows, tile_size);
    grid_cols_ = ceil_div(cols, tile_size);
    tiles_.reserve(grid_rows_ * grid_cols_);
    for (std::size_t i = 0; i < grid_rows_; ++i)
      for (std::size_t j = 0; j < grid_cols_; ++j)
        tiles_.emplace_back(tile_rows(i), tile_cols(j));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t tile_size() const noexcept { return tile_; }
  std::size_t grid_rows() const noexcept { return grid_rows_; }
  std::size_t grid_cols() const noexcept { return grid_cols_; }
  std::size_t tile_count() const noexcept { return tiles_.size(); }

  std::size_t tile_rows(std::size_t i) const noexcept {
    return std::min(tile_, rows_ - i * tile_);
  }
  std::size_t tile_cols(std::size_t j) const noexcept {
    return std::min(tile_, cols_ - j * tile_);
  }

  MatrixBuf<T>& tile(std::size_t i, std::size_t j) { return tiles_.at(i * grid_cols_ + j); }
  const MatrixBuf<T>& tile(std::size_t i, std::size_t j) const {
    return tiles_.at(i * grid_cols_ + j);
  }
  const MatrixBuf<T>& tile(TileCoord c) const { return tile(c.row, c.col); }

  std::size_t square_tile_count() const noexcept { return (rows_ / tile_) * (cols_ / tile_); }

 private:
  std::size_t rows_, cols_, tile_;
  std::size_t grid_rows_ = 0, grid_cols_ = 0;
  std::vector<MatrixBuf<T>> tiles_;
};

template <typename T>
TiledMatrix<T> partition(const MatrixBuf<T>& m, std::size_t tile_size) {
  TiledMatrix<T> tm(m.rows(), m.cols(), tile_size);
  for (std::size_t i = 0; i < tm.grid_rows(); ++i)
    for (std::size_t j = 0; j < tm.grid_cols(); ++j) {
      auto& t = tm.tile(i, j);
      for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c)
          t(r, c) = m(i * tile_size + r, j * tile_size + c);
    }
  return tm;
}

template <typename T>
MatrixBuf<T> reassemble(const TiledMatrix<T>& tm) {
  MatrixBuf<T> m(tm.rows(), tm.cols());
  const std::size_t ts = tm.tile_size();
  for (std::size_t i = 0; i < tm.grid_rows(); ++i)
    for (std::size_t j = 0; j < tm.grid_cols(); ++j) {
      const auto& t = tm.tile(i, j);
      for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m(i * ts + r, j * ts + c) = t(r, c);
    }
  return m;
}

// Tiled transpose that keeps track of where each tile came from: tile (r, c)
// of the result is the transpose of source tile (c, r). Used so that a
// product such as X^T * dY addresses the cache with the keys of X's own tiles.
template <typename T>
TiledMatrix<T> transpose_tiles(const TiledMatrix<T>& src) {
  TiledMatrix<T> out(src.cols(), src.rows(), src.tile_size());
  for (std::size_t i = 0; i < out.grid_rows(); ++i)
    for (std::size_t j = 0; j < out.grid_cols(); ++j) out.tile(i, j) = transpose(src.tile(j, i));
  return out;
}

}  // namespace tilerun
