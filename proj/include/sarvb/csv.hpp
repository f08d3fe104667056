#pragma once

#include "sarvb/common.hpp"
#include "sarvb/model.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace sarvb {

// 17 significant digits: doubles survive a write/read round trip bit for bit
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw input_error("failed writing " + path.string());
}

inline void write_matrix_csv(const std::filesystem::path& path, const MatrixXd& m,
                             const std::vector<std::string>& row_labels,
                             const std::vector<std::string>& col_labels) {
  std::ostringstream out;
  out << "unit";
  for (const auto& c : col_labels) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << row_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << format_g17(m(i, j));
    out << '\n';
  }
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// wide panel format: time,<unit>...,<unit>__<var>...
// ---------------------------------------------------------------------------

inline std::string panel_to_csv(const PanelData& panel) {
  std::ostringstream out;
  out << "time";
  for (const auto& u : panel.unit_labels) out << ',' << u;
  std::vector<std::pair<std::size_t, Eigen::Index>> exog_order;  // (unit, column)
  for (std::size_t i = 0; i < panel.X_blocks.size(); ++i) {
    for (Eigen::Index c = 0; c < panel.X_blocks[i].cols(); ++c) {
      out << ',' << panel.unit_labels[i] << "__x" << (c + 1);
      exog_order.emplace_back(i, c);
    }
  }
  out << '\n';
  for (Eigen::Index t = 0; t < panel.T(); ++t) {
    out << panel.time_labels[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < panel.N(); ++j) out << ',' << format_g17(panel.Y(t, j));
    for (const auto& [i, c] : exog_order) out << ',' << format_g17(panel.X_blocks[i](t, c));
    out << '\n';
  }
  return out.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw input_error("panel parse error at row " + std::to_string(row) + ", column " +
                      std::to_string(col) + ": '" + cell + "' is not a number");
  }
}

}  // namespace detail

// Parses the wide panel layout. Endogenous columns are the headers without
// "__"; exogenous headers must be named <unit>__<var> for a known unit.
inline PanelData panel_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw input_error("panel parse error: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "time") {
    throw input_error("panel parse error: missing required header 'time'");
  }

  PanelData panel;
  std::map<std::string, std::size_t> unit_index;
  struct ExogCol {
    std::size_t unit;
  };
  std::vector<ExogCol> exog_cols;
  bool seen_exog = false;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& name = header[c];
    const auto sep = name.find("__");
    if (sep == std::string::npos) {
      if (seen_exog) {
        throw input_error("panel parse error: endogenous header '" + name +
                          "' appears after exogenous columns");
      }
      if (unit_index.count(name)) {
        throw input_error("panel parse error: duplicate unit header '" + name + "'");
      }
      unit_index[name] = panel.unit_labels.size();
      panel.unit_labels.push_back(name);
    } else {
      seen_exog = true;
      const std::string unit = name.substr(0, sep);
      const auto it = unit_index.find(unit);
      if (it == unit_index.end()) {
        throw input_error("panel parse error: exogenous header '" + name +
                          "' names unknown unit '" + unit + "'");
      }
      exog_cols.push_back({it->second});
    }
  }
  const std::size_t n_units = panel.unit_labels.size();
  if (n_units == 0) throw input_error("panel parse error: no endogenous columns");

  std::vector<std::vector<double>> y_rows;
  std::vector<std::vector<double>> x_rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw input_error("panel parse error at row " + std::to_string(row_no) + ": expected " +
                        std::to_string(header.size()) + " cells, found " +
                        std::to_string(cells.size()));
    }
    panel.time_labels.push_back(cells[0]);
    std::vector<double> y(n_units), x(exog_cols.size());
    for (std::size_t c = 0; c < n_units; ++c) y[c] = detail::parse_cell(cells[1 + c], row_no, 1 + c);
    for (std::size_t c = 0; c < exog_cols.size(); ++c) {
      x[c] = detail::parse_cell(cells[1 + n_units + c], row_no, 1 + n_units + c);
    }
    y_rows.push_back(std::move(y));
    x_rows.push_back(std::move(x));
  }
  const std::size_t T = y_rows.size();
  if (T == 0) throw input_error("panel parse error: no data rows");

  panel.Y.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(n_units));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < n_units; ++c) {
      panel.Y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = y_rows[t][c];
    }
  }
  std::vector<Eigen::Index> widths(n_units, 0);
  for (const auto& e : exog_cols) ++widths[e.unit];
  panel.X_blocks.resize(n_units);
  for (std::size_t u = 0; u < n_units; ++u) {
    panel.X_blocks[u].resize(static_cast<Eigen::Index>(T), widths[u]);
  }
  std::vector<Eigen::Index> next(n_units, 0);
  for (std::size_t c = 0; c < exog_cols.size(); ++c) {
    const std::size_t u = exog_cols[c].unit;
    for (std::size_t t = 0; t < T; ++t) {
      panel.X_blocks[u](static_cast<Eigen::Index>(t), next[u]) = x_rows[t][c];
    }
    ++next[u];
  }
  if (!panel.Y.allFinite()) throw input_error("panel contains non-finite endogenous values");
  for (const auto& b : panel.X_blocks) {
    if (b.size() > 0 && !b.allFinite()) {
      throw input_error("panel contains non-finite exogenous values");
    }
  }
  return panel;
}

inline PanelData read_panel_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open panel file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return panel_from_csv(buf.str());
}

}  // namespace sarvb
