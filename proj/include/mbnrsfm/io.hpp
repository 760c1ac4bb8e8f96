#pragma once

// MBNR1 text formats.
//
//   matrix:  "MBNR1 matrix <rows> <cols>\n" then <rows> lines of <cols>
//            space-separated decimals (shortest round-trip form).
//   labels:  "MBNR1 labels <P>\n" then P lines with one nonnegative integer.
//
// All files use LF line endings and '.' as the decimal separator.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mbnrsfm/admm.hpp"
#include "mbnrsfm/error.hpp"
#include "mbnrsfm/linalg.hpp"
#include "mbnrsfm/scene.hpp"

namespace mbnrsfm::io {

inline constexpr std::string_view kFormatTag = "MBNR1";

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw ValueError("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline bool parse_count(std::string_view tok, long long& value) {
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

// Parses the "MBNR1 <kind> <dims...>" header into `counts`.
inline void parse_header(const std::vector<std::string>& lines, std::string_view kind,
                         std::size_t ndims, std::vector<long long>& counts) {
  if (lines.empty()) throw ParseError("empty file, expected MBNR1 header", 1);
  const auto toks = split_ws(lines[0]);
  if (toks.size() != 2 + ndims || toks[0] != kFormatTag || toks[1] != kind) {
    throw ParseError("malformed header, expected \"MBNR1 " + std::string(kind) + "\" with " +
                         std::to_string(ndims) + " size field(s)",
                     1);
  }
  counts.clear();
  for (std::size_t i = 0; i < ndims; ++i) {
    long long v = 0;
    if (!parse_count(toks[2 + i], v) || v < 0) {
      throw ParseError("malformed header size \"" + std::string(toks[2 + i]) + "\"", 1);
    }
    counts.push_back(v);
  }
}

inline void check_trailing(const std::vector<std::string>& lines, std::size_t used) {
  for (std::size_t i = used; i < lines.size(); ++i) {
    if (!split_ws(lines[i]).empty()) {
      throw ParseError("unexpected data after the declared rows", i + 1);
    }
  }
}

}  // namespace detail

inline std::string matrix_to_string(const Eigen::Ref<const DenseMatrix>& m) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw ValueError("write_matrix: degenerate " + dims(m.rows(), m.cols()) + " matrix");
  }
  require_finite(m, "write_matrix");
  std::string out = std::string(kFormatTag) + " matrix " + std::to_string(m.rows()) + " " +
                    std::to_string(m.cols()) + "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ' ';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_matrix(const std::filesystem::path& path, const Eigen::Ref<const DenseMatrix>& m) {
  detail::write_text(path, matrix_to_string(m));
}

inline DenseMatrix parse_matrix(const std::vector<std::string>& lines) {
  std::vector<long long> n;
  detail::parse_header(lines, "matrix", 2, n);
  if (n[0] == 0 || n[1] == 0) {
    throw ParseError("degenerate " + std::to_string(n[0]) + "x" + std::to_string(n[1]) + " matrix", 1);
  }
  const Index rows = static_cast<Index>(n[0]), cols = static_cast<Index>(n[1]);
  if (static_cast<Index>(lines.size()) < rows + 1) {
    throw ParseError("expected " + std::to_string(rows) + " rows, file ends early",
                     lines.size() + 1);
  }
  DenseMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const std::size_t lineno = static_cast<std::size_t>(i) + 2;
    const auto toks = detail::split_ws(lines[static_cast<std::size_t>(i) + 1]);
    if (static_cast<Index>(toks.size()) != cols) {
      throw ParseError("expected " + std::to_string(cols) + " values, found " +
                           std::to_string(toks.size()),
                       lineno);
    }
    for (Index j = 0; j < cols; ++j) {
      const std::string_view tok = toks[static_cast<std::size_t>(j)];
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw ParseError("invalid number \"" + std::string(tok) + "\"", lineno);
      }
      if (!std::isfinite(v)) {
        throw ParseError("non-finite value \"" + std::string(tok) + "\"", lineno);
      }
      m(i, j) = v;
    }
  }
  detail::check_trailing(lines, static_cast<std::size_t>(rows) + 1);
  return m;
}

inline DenseMatrix read_matrix(const std::filesystem::path& path) {
  try {
    return parse_matrix(detail::read_lines(path));
  } catch (const ParseError& e) {
    throw ParseError(e.detail(), e.line(), path.string());
  }
}

inline std::string labels_to_string(const SegmentLabels& labels) {
  if (labels.size() == 0) throw ValueError("write_labels: empty labelling");
  std::string out = std::string(kFormatTag) + " labels " + std::to_string(labels.size()) + "\n";
  for (int l : labels.values()) out += std::to_string(l) + "\n";
  return out;
}

inline void write_labels(const std::filesystem::path& path, const SegmentLabels& labels) {
  detail::write_text(path, labels_to_string(labels));
}

inline SegmentLabels parse_labels(const std::vector<std::string>& lines) {
  std::vector<long long> n;
  detail::parse_header(lines, "labels", 1, n);
  if (n[0] == 0) throw ParseError("empty labelling", 1);
  const std::size_t p = static_cast<std::size_t>(n[0]);
  std::vector<int> labels;
  labels.reserve(p);
  for (std::size_t i = 1; i < lines.size() && labels.size() < p; ++i) {
    const auto toks = detail::split_ws(lines[i]);
    if (toks.size() != 1) {
      throw ParseError("expected exactly one label, found " + std::to_string(toks.size()), i + 1);
    }
    long long v = 0;
    if (!detail::parse_count(toks[0], v)) {
      throw ParseError("invalid label \"" + std::string(toks[0]) + "\"", i + 1);
    }
    if (v < 0) throw ParseError("negative label " + std::to_string(v), i + 1);
    if (v > std::numeric_limits<int>::max()) throw ParseError("label out of range", i + 1);
    labels.push_back(static_cast<int>(v));
  }
  if (labels.size() != p) {
    throw ParseError("header declares " + std::to_string(p) + " labels, found " +
                         std::to_string(labels.size()),
                     lines.size() + 1);
  }
  detail::check_trailing(lines, p + 1);
  return SegmentLabels(std::move(labels));
}

inline SegmentLabels read_labels(const std::filesystem::path& path) {
  try {
    return parse_labels(detail::read_lines(path));
  } catch (const ParseError& e) {
    throw ParseError(e.detail(), e.line(), path.string());
  }
}

/// "# converged=<bool> iterations=<n>", the column header, then one row per sweep.
inline std::string trace_to_csv(const SolverTrace& trace) {
  std::string out = std::string("# converged=") + (trace.converged ? "true" : "false") +
                    " iterations=" + std::to_string(trace.iterations()) + "\n";
  out += "iteration,objective,r1,r2,r3,r4,beta\n";
  for (const TraceRecord& r : trace.records) {
    out += std::to_string(r.iteration) + "," + format_double(r.objective) + "," +
           format_double(r.residuals.r1) + "," + format_double(r.residuals.r2) + "," +
           format_double(r.residuals.r3) + "," + format_double(r.residuals.r4) + "," +
           format_double(r.beta) + "\n";
  }
  return out;
}

inline void write_trace(const std::filesystem::path& path, const SolverTrace& trace) {
  detail::write_text(path, trace_to_csv(trace));
}

/// Inverse of trace_to_csv.
inline SolverTrace parse_trace(const std::vector<std::string>& lines) {
  if (lines.size() < 2 || lines[0].rfind("# converged=", 0) != 0) {
    throw ParseError("malformed trace header", 1);
  }
  SolverTrace trace;
  trace.converged = lines[0].rfind("# converged=true", 0) == 0;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<double> v;
    std::string_view rest = lines[i];
    while (true) {
      const std::size_t comma = rest.find(',');
      const std::string_view tok = rest.substr(0, comma);
      double x = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw ParseError("invalid trace value \"" + std::string(tok) + "\"", i + 1);
      }
      v.push_back(x);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (v.size() != 7) throw ParseError("trace row needs 7 fields", i + 1);
    TraceRecord r;
    r.iteration = static_cast<int>(v[0]);
    r.objective = v[1];
    r.residuals = Residuals{v[2], v[3], v[4], v[5]};
    r.beta = v[6];
    trace.records.push_back(r);
  }
  return trace;
}

inline SolverTrace read_trace(const std::filesystem::path& path) {
  return parse_trace(detail::read_lines(path));
}

}  // namespace mbnrsfm::io
