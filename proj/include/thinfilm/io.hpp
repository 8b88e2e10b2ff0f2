#ifndef THINFILM_IO_HPP
#define THINFILM_IO_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "thinfilm/errors.hpp"
#include "thinfilm/grid.hpp"
#include "thinfilm/trajectory.hpp"

namespace thinfilm::io {

inline constexpr const char* kDiagnosticsHeader =
    "t,phi,E,mass,min_g,tilde_v,step_norm,vi_min,strong_residual";

/// 17 significant digits; infinities as "inf".
inline std::string format_real(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_real(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error("csv: cannot parse number '" + s + "'");
  }
  if (used != s.size()) throw Error("csv: trailing characters in '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Diagnostics

inline void write_diagnostics_csv(std::ostream& os, const std::vector<DiagnosticsRecord>& rec) {
  os << kDiagnosticsHeader << '\n';
  for (const auto& r : rec) {
    os << format_real(r.t) << ',' << format_real(r.phi) << ',' << format_real(r.E.to_double())
       << ',' << format_real(r.mass) << ',' << format_real(r.min_g) << ','
       << format_real(r.tilde_v) << ',' << format_real(r.step_norm) << ','
       << format_real(r.vi_min) << ',' << format_real(r.strong_residual) << '\n';
  }
}

inline void write_diagnostics_csv(const std::filesystem::path& path,
                                  const std::vector<DiagnosticsRecord>& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string());
  write_diagnostics_csv(os, rec);
}

/// Parses and validates a diagnostics CSV: exact header, nine columns per
/// row, every value finite except E which may be "inf", t increasing.
inline std::vector<DiagnosticsRecord> read_diagnostics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kDiagnosticsHeader)
    throw Error("diagnostics csv: bad header");
  std::vector<DiagnosticsRecord> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 9)
      throw Error("diagnostics csv: row " + std::to_string(row) + " has " +
                  std::to_string(cells.size()) + " columns");
    double v[9];
    for (int i = 0; i < 9; ++i) {
      v[i] = parse_real(cells[i]);
      const bool e_col = (i == 2);
      if (!std::isfinite(v[i]) && !(e_col && cells[i] == "inf"))
        throw Error("diagnostics csv: non-finite value in row " + std::to_string(row));
    }
    DiagnosticsRecord r;
    r.t = v[0];
    r.phi = v[1];
    r.E = std::isinf(v[2]) ? ExtReal::infinity() : ExtReal(v[2]);
    r.mass = v[3];
    r.min_g = v[4];
    r.tilde_v = v[5];
    r.step_norm = v[6];
    r.vi_min = v[7];
    r.strong_residual = v[8];
    if (!out.empty() && !(r.t > out.back().t))
      throw Error("diagnostics csv: t not increasing at row " + std::to_string(row));
    out.push_back(r);
  }
  return out;
}

inline std::vector<DiagnosticsRecord> read_diagnostics_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_diagnostics_csv(is);
}

// ---------------------------------------------------------------------------
// Snapshots

/// Named columns of a snapshot file; "h" always comes first.
struct Snapshot {
  std::vector<std::string> columns;
  std::map<std::string, std::vector<double>> data;

  std::size_t rows() const { return data.empty() ? 0 : data.begin()->second.size(); }
  bool has(const std::string& c) const { return data.count(c) != 0; }
};

struct SnapshotOptions {
  bool derivatives = false;  // w_h, w_hh
  std::optional<Field> u;    // slope column
};

inline void write_snapshot(std::ostream& os, const Field& w, const SnapshotOptions& opt = {}) {
  os << "h,w";
  std::optional<Field> wh, whh;
  if (opt.derivatives) {
    wh = d1(w);
    whh = d2(w);
    os << ",w_h,w_hh";
  }
  if (opt.u) os << ",u";
  os << '\n';
  for (int i = 0; i < w.size(); ++i) {
    os << format_real(w.grid().coord(i)) << ',' << format_real(w[i]);
    if (opt.derivatives) os << ',' << format_real((*wh)[i]) << ',' << format_real((*whh)[i]);
    if (opt.u) os << ',' << format_real((*opt.u)[i]);
    os << '\n';
  }
}

inline void write_snapshot(const std::filesystem::path& path, const Field& w,
                           const SnapshotOptions& opt = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string());
  write_snapshot(os, w, opt);
}

inline Snapshot read_snapshot(std::istream& is) {
  Snapshot s;
  std::string line;
  if (!std::getline(is, line)) throw Error("snapshot: empty file");
  s.columns = split_csv_line(line);
  if (s.columns.empty() || s.columns.front() != "h")
    throw Error("snapshot: first column must be h");
  for (const auto& c : s.columns) s.data[c];
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != s.columns.size()) throw Error("snapshot: ragged row");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double v = parse_real(cells[i]);
      if (!std::isfinite(v)) throw Error("snapshot: non-finite value");
      s.data[s.columns[i]].push_back(v);
    }
  }
  return s;
}

inline Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_snapshot(is);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace thinfilm::io

#endif  // THINFILM_IO_HPP
