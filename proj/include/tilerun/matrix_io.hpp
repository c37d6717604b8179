#pragma once

// Matrix file formats.
//
// Text:   first line "rows cols", then rows*cols decimal values in row-major
//         order separated by whitespace. Writers put one matrix row per line
//         and use the shortest representation that round-trips exactly.
// Binary: 16-byte header of two little-endian u64 (rows, cols), followed by
//         rows*cols little-endian IEEE-754 f64 values in row-major order.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>

#include "tilerun/error.hpp"
#include "tilerun/matrix.hpp"

namespace tilerun::io {

enum class Format { text, binary };

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "binary matrix format assumes a little-endian host");

inline std::string format_value(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw IoError("failed to format value");
  return std::string(buf.data(), end);
}

}  // namespace detail

inline void write_text(std::ostream& os, const MatrixBuf<double>& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << detail::format_value(m(r, c));
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed");
}

inline MatrixBuf<double> read_text(std::istream& is) {
  std::uint64_t rows = 0, cols = 0;
  if (!(is >> rows >> cols)) throw IoError("text matrix: missing 'rows cols' header");
  if (rows == 0 || cols == 0) throw IoError("text matrix: dimensions must be >= 1");
  std::vector<double> data;
  data.reserve(rows * cols);
  std::string tok;
  while (data.size() < rows * cols && is >> tok) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
      throw IoError("text matrix: bad value '" + tok + "'");
    data.push_back(v);
  }
  if (data.size() != rows * cols)
    throw IoError("text matrix: expected " + std::to_string(rows * cols) + " values, got " +
                  std::to_string(data.size()));
  if (is >> tok) throw IoError("text matrix: trailing data after " +
                               std::to_string(rows * cols) + " values");
  return MatrixBuf<double>(rows, cols, std::move(data));
}

inline void write_binary(std::ostream& os, const MatrixBuf<double>& m) {
  const std::uint64_t header[2] = {m.rows(), m.cols()};
  os.write(reinterpret_cast<const char*>(header), sizeof header);
  os.write(reinterpret_cast<const char*>(m.data().data()),
           static_cast<std::streamsize>(m.bytes()));
  if (!os) throw IoError("write failed");
}

inline MatrixBuf<double> read_binary(std::istream& is) {
  std::uint64_t header[2] = {0, 0};
  if (!is.read(reinterpret_cast<char*>(header), sizeof header))
    throw IoError("binary matrix: truncated header");
  if (header[0] == 0 || header[1] == 0) throw IoError("binary matrix: dimensions must be >= 1");
  std::vector<double> data(header[0] * header[1]);
  if (!is.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(double))))
    throw IoError("binary matrix: truncated payload");
  return MatrixBuf<double>(header[0], header[1], std::move(data));
}

// `.bin` selects the binary format, anything else is text.
inline Format format_for(const std::filesystem::path& path) {
  return path.extension() == ".bin" ? Format::binary : Format::text;
}

inline MatrixBuf<double> load(const std::filesystem::path& path) {
  const Format f = format_for(path);
  std::ifstream in(path, f == Format::binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return f == Format::binary ? read_binary(in) : read_text(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void save(const std::filesystem::path& path, const MatrixBuf<double>& m) {
  const Format f = format_for(path);
  std::ofstream out(path, f == Format::binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  f == Format::binary ? write_binary(out, m) : write_text(out, m);
}

}  // namespace tilerun::io
