#pragma once

#include <fstream>
#include <istream>
#include <limits>
#include <locale>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace powerlab::io {

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::istringstream classic_stream(const std::string& text) {
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  return in;
}

inline std::vector<std::string> data_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

inline std::vector<double> parse_row(const std::string& line, std::size_t lineno) {
  std::istringstream in = classic_stream(line);
  std::vector<double> row;
  double x = 0.0;
  while (in >> x) row.push_back(x);
  in.clear();
  std::string rest;
  if (in >> rest) {
    throw FormatError("line " + std::to_string(lineno) + ": not a number: '" + rest + "'");
  }
  return row;
}

inline std::vector<long long> parse_header(const std::string& line, std::size_t expected) {
  std::istringstream in = classic_stream(line);
  std::vector<long long> fields;
  long long x = 0;
  while (in >> x) fields.push_back(x);
  if (fields.size() != expected || !in.eof()) {
    throw FormatError("malformed header line: '" + line + "'");
  }
  for (long long f : fields)
    if (f <= 0) throw FormatError("header sizes must be positive: '" + line + "'");
  return fields;
}

inline Matrix parse_block(const std::vector<std::string>& lines, long long rows, long long cols,
                          long long extra_cols = 0) {
  if (static_cast<long long>(lines.size()) - 1 != rows) {
    throw FormatError("expected " + std::to_string(rows) + " data rows, found " +
                      std::to_string(lines.size() - 1));
  }
  Matrix m(rows, cols + extra_cols);
  for (long long i = 0; i < rows; ++i) {
    std::vector<double> row = parse_row(lines[i + 1], i + 2);
    const auto width = static_cast<long long>(row.size());
    if (width != cols && width != cols + extra_cols) {
      throw FormatError("line " + std::to_string(i + 2) + ": expected " + std::to_string(cols) +
                        " values, found " + std::to_string(width));
    }
    for (long long j = 0; j < width; ++j) m(i, j) = row[j];
    for (long long j = width; j < cols + extra_cols; ++j) m(i, j) = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

inline std::ostream& prepare(std::ostream& out) {
  out.imbue(std::locale::classic());
  out.precision(std::numeric_limits<double>::max_digits10);
  return out;
}

}  // namespace detail

/// Dense matrix file: a line "d", then d rows of d reals. Symmetry is validated.
inline SymmetricMatrix read_matrix(std::istream& in) {
  const std::vector<std::string> lines = detail::data_lines(in);
  if (lines.empty()) throw FormatError("empty matrix file");
  const long long d = detail::parse_header(lines[0], 1)[0];
  Matrix m = detail::parse_block(lines, d, d);
  try {
    return SymmetricMatrix(std::move(m));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

inline void write_matrix(std::ostream& out, const SymmetricMatrix& a) {
  detail::prepare(out);
  out << a.dim() << '\n';
  for (int i = 0; i < a.dim(); ++i) {
    for (int j = 0; j < a.dim(); ++j) out << (j ? " " : "") << a(i, j);
    out << '\n';
  }
}

/// Samples file: a line "n d", then n rows of d reals.
inline Matrix read_samples(std::istream& in) {
  const std::vector<std::string> lines = detail::data_lines(in);
  if (lines.empty()) throw FormatError("empty samples file");
  const std::vector<long long> header = detail::parse_header(lines[0], 2);
  return detail::parse_block(lines, header[0], header[1]);
}

inline void write_samples(std::ostream& out, const Matrix& x) {
  detail::prepare(out);
  out << x.rows() << ' ' << x.cols() << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << (j ? " " : "") << x(i, j);
    out << '\n';
  }
}

struct PointsFile {
  Matrix points;  // n x 2
  std::optional<std::vector<int>> labels;
};

/// Points file: a line "n 2", then n rows "x y" with an optional trailing integer label.
inline PointsFile read_points(std::istream& in) {
  const std::vector<std::string> lines = detail::data_lines(in);
  if (lines.empty()) throw FormatError("empty points file");
  const std::vector<long long> header = detail::parse_header(lines[0], 2);
  if (header[1] != 2) throw FormatError("points file must have 2 columns");
  const Matrix m = detail::parse_block(lines, header[0], 2, 1);
  PointsFile out;
  out.points = m.leftCols(2);
  const bool any_label = (m.col(2).array() == m.col(2).array()).any();
  if (any_label) {
    if (!(m.col(2).array() == m.col(2).array()).all()) {
      throw FormatError("labels must be given for every point or for none");
    }
    std::vector<int> labels(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double l = m(i, 2);
      if (l != std::floor(l)) throw FormatError("label on row " + std::to_string(i + 2) + " is not an integer");
      labels[i] = static_cast<int>(l);
    }
    out.labels = std::move(labels);
  }
  return out;
}

inline void write_points(std::ostream& out, const Matrix& points,
                         const std::optional<std::vector<int>>& labels = std::nullopt) {
  detail::prepare(out);
  out << points.rows() << " 2\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out << points(i, 0) << ' ' << points(i, 1);
    if (labels) out << ' ' << (*labels)[i];
    out << '\n';
  }
}

/// Label output: CSV with header "index,label".
inline void write_labels(std::ostream& out, const std::vector<int>& labels) {
  out.imbue(std::locale::classic());
  out << "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

template <class Fn>
auto with_input_file(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return fn(in);
}

}  // namespace powerlab::io
