#pragma once

#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "toll_transport/analysis.hpp"
#include "toll_transport/coupling.hpp"
#include "toll_transport/errors.hpp"
#include "toll_transport/measures.hpp"

namespace toll::io {

/// Shortest text that round-trips the double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

/// Rows of a CSV file with the given header (checked verbatim).
inline std::vector<std::vector<double>> read_csv(const std::string& path,
                                                 const std::string& header) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || split(line) != split(header)) {
    throw IOError("'" + path + "': expected header '" + header + "'");
  }
  const std::size_t cols = split(header).size();
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != cols) {
      throw IOError("'" + path + "' line " + std::to_string(lineno) +
                    ": expected " + std::to_string(cols) + " columns");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw IOError("'" + path + "' line " + std::to_string(lineno) +
                      ": not a number: '" + c + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IOError("cannot write '" + path + "'");
  return out;
}

/// `position,weight`, one row per node. Widths are rebuilt from node gaps.
inline DiscreteMeasure read_measure_csv(const std::string& path) {
  const auto rows = read_csv(path, "position,weight");
  if (rows.empty()) throw IOError("'" + path + "': no rows");
  std::vector<double> nodes, weights;
  for (const auto& r : rows) {
    nodes.push_back(r[0]);
    weights.push_back(r[1]);
  }
  const std::size_t n = nodes.size();
  std::vector<double> widths(n, 1.0);
  for (std::size_t i = 0; i < n && n > 1; ++i) {
    const double l = i > 0 ? nodes[i] - nodes[i - 1] : nodes[1] - nodes[0];
    const double r = i + 1 < n ? nodes[i + 1] - nodes[i] : nodes[n - 1] - nodes[n - 2];
    widths[i] = 0.5 * (l + r);
  }
  try {
    return DiscreteMeasure(Grid(std::move(nodes), std::move(widths)),
                           std::move(weights));
  } catch (const DomainError& e) {
    throw IOError("'" + path + "': " + e.what());
  }
}

inline void write_measure_csv(const std::string& path, const DiscreteMeasure& m) {
  auto out = open_out(path);
  out << "position,weight\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << format_double(m.node(i)) << ',' << format_double(m.weight(i)) << '\n';
  }
}

/// `t,rate` breakpoints of a piecewise-constant rate.
inline std::vector<std::pair<double, double>> read_rate_table(
    const std::string& path) {
  std::vector<std::pair<double, double>> table;
  for (const auto& r : read_csv(path, "t,rate")) table.emplace_back(r[0], r[1]);
  if (table.empty()) throw IOError("'" + path + "': no rows");
  return table;
}

inline std::string coupling_header(std::size_t arity) {
  return arity == 3 ? "i,j,k,mass" : "i,j,k,l,mass";
}

/// Sparse `i,j,k[,l],mass` rows for cells with mass > threshold.
inline void write_coupling_csv(const std::string& path, const Coupling& pi,
                               double threshold = 1e-12) {
  auto out = open_out(path);
  out << coupling_header(pi.arity()) << '\n';
  const auto sh = pi.shape();
  const auto st = strides_of(sh);
  for (std::size_t c = 0; c < pi.cells(); ++c) {
    if (!(pi.mass()[c] > threshold)) continue;
    for (std::size_t a = 0; a < sh.size(); ++a) out << (c / st[a]) % sh[a] << ',';
    out << format_double(pi.mass()[c]) << '\n';
  }
}

/// Dense mass tensor from a sparse coupling CSV on the given shape.
inline std::vector<double> read_coupling_csv(const std::string& path,
                                             const std::vector<std::size_t>& shape) {
  const auto rows = read_csv(path, coupling_header(shape.size()));
  const auto st = strides_of(shape);
  std::vector<double> mass(cells_of(shape), 0.0);
  for (const auto& r : rows) {
    std::size_t cell = 0;
    for (std::size_t a = 0; a < shape.size(); ++a) {
      const double v = r[a];
      if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v)) ||
          static_cast<std::size_t>(v) >= shape[a]) {
        throw IOError("'" + path + "': index out of range");
      }
      cell += static_cast<std::size_t>(v) * st[a];
    }
    if (!(r.back() >= 0.0)) throw IOError("'" + path + "': negative mass");
    mass[cell] += r.back();
  }
  return mass;
}

inline void write_trajectories_csv(std::ostream& out,
                                   const std::vector<Trajectory>& trs) {
  out << "id,time,position\n";
  for (const auto& tr : trs) {
    for (std::size_t s = 0; s < tr.times.size(); ++s) {
      out << tr.id << ',' << format_double(tr.times[s]) << ','
          << format_double(tr.positions[s]) << '\n';
    }
  }
}

inline void write_trajectories_csv(const std::string& path,
                                   const std::vector<Trajectory>& trs) {
  auto out = open_out(path);
  write_trajectories_csv(out, trs);
}

inline void write_maps_csv(const std::string& path, const MonotoneMap& tx,
                           const MonotoneMap& ty) {
  auto out = open_out(path);
  out << "t,Tx,Ty\n";
  for (std::size_t k = 0; k < tx.values.size(); ++k) {
    out << format_double(tx.time_grid.node(k)) << ','
        << format_double(tx.values[k]) << ',' << format_double(ty.values[k])
        << '\n';
  }
}

}  // namespace toll::io
