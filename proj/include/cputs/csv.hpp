#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cputs {

//! Numeric table with an optional response column. Rows whose covariate
//! cells fail to parse are dropped (and counted); a missing response cell is
//! allowed only when the loader was told the response may be partial, in
//! which case the row is kept and marked unlabeled.
struct Dataset
{
  std::vector<std::string> covariate_names;
  std::string response_name; // empty when the table has no response column
  Eigen::MatrixXd X;
  Eigen::VectorXd y;          // NaN on unlabeled rows
  std::vector<char> labeled;  // per row
  std::size_t dropped_rows = 0;

  bool has_response() const { return !response_name.empty(); }

  std::size_t labeled_count() const
  {
    std::size_t n = 0;
    for (const char f : labeled)
      n += f ? 1u : 0u;
    return n;
  }

  Eigen::MatrixXd labeled_X() const { return select(true).first; }
  Eigen::VectorXd labeled_y() const { return select(true).second; }
  Eigen::MatrixXd unlabeled_X() const { return select(false).first; }

private:
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> select(bool want_labeled) const
  {
    std::size_t n = 0;
    for (const char f : labeled)
      n += (static_cast<bool>(f) == want_labeled) ? 1u : 0u;
    Eigen::MatrixXd xs(n, X.cols());
    Eigen::VectorXd ys(n);
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (static_cast<bool>(labeled[static_cast<std::size_t>(i)]) != want_labeled)
        continue;
      xs.row(at) = X.row(i);
      ys[at] = y[i];
      ++at;
    }
    return {std::move(xs), std::move(ys)};
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ','))
    cells.push_back(cell);
  if (!line.empty() && line.back() == ',')
    cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s)
{
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a])))
    ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1])))
    --b;
  return s.substr(a, b - a);
}

inline bool parse_cell(const std::string& raw, double& out)
{
  const std::string s = trim(raw);
  if (s.empty())
    return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

} // namespace detail

//! Load a comma-separated table with a header row. `response_column` names
//! the response; empty means a covariates-only table. With
//! `allow_missing_response`, rows whose response cell is empty or
//! non-numeric stay in the table as unlabeled rows.
inline Dataset load_csv(const std::string& path,
                        const std::string& response_column = "",
                        bool allow_missing_response = false)
{
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("load_csv: '" + path + "' is empty (header missing)");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  const std::vector<std::string> header_raw = detail::split_csv_line(line);
  std::vector<std::string> header;
  header.reserve(header_raw.size());
  bool any_name = false;
  for (const std::string& h : header_raw) {
    header.push_back(detail::trim(h));
    double ignored;
    if (!header.back().empty() && !detail::parse_cell(header.back(), ignored))
      any_name = true;
  }
  if (header.empty() || !any_name)
    throw std::invalid_argument("load_csv: '" + path + "' has no header row");

  std::ptrdiff_t response_idx = -1;
  if (!response_column.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == response_column)
        response_idx = static_cast<std::ptrdiff_t>(j);
    if (response_idx < 0)
      throw std::invalid_argument("load_csv: response column '" + response_column +
                               "' not found in '" + path + "'");
  }

  Dataset ds;
  ds.response_name = response_idx >= 0 ? response_column : "";
  for (std::size_t j = 0; j < header.size(); ++j)
    if (static_cast<std::ptrdiff_t>(j) != response_idx)
      ds.covariate_names.push_back(header[j]);

  std::vector<std::vector<double>> rows;
  std::vector<double> responses;
  std::vector<char> labeled;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (detail::trim(line).empty())
      continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      ++ds.dropped_rows;
      continue;
    }
    std::vector<double> xrow;
    xrow.reserve(ds.covariate_names.size());
    double yval = std::numeric_limits<double>::quiet_NaN();
    bool has_y = false;
    bool bad = false;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v;
      const bool ok = detail::parse_cell(cells[j], v);
      if (static_cast<std::ptrdiff_t>(j) == response_idx) {
        if (ok) {
          yval = v;
          has_y = true;
        } else if (!allow_missing_response) {
          bad = true;
        }
      } else {
        if (!ok)
          bad = true;
        else
          xrow.push_back(v);
      }
    }
    if (bad) {
      ++ds.dropped_rows;
      continue;
    }
    rows.push_back(std::move(xrow));
    responses.push_back(yval);
    labeled.push_back(response_idx >= 0 && has_y ? 1 : 0);
  }

  if (rows.empty())
    throw std::invalid_argument("load_csv: '" + path + "' has no usable data rows");

  ds.X.resize(static_cast<Eigen::Index>(rows.size()),
              static_cast<Eigen::Index>(ds.covariate_names.size()));
  ds.y.resize(static_cast<Eigen::Index>(rows.size()));
  ds.labeled = std::move(labeled);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    ds.y[static_cast<Eigen::Index>(i)] = responses[i];
  }
  return ds;
}

//! Load a table that may or may not carry the response column: when the
//! header has it, partially filled responses mark labeled rows; when it
//! does not, the table is treated as covariates-only.
inline Dataset load_csv_maybe_response(const std::string& path,
                                       const std::string& response_column)
{
  try {
    return load_csv(path, response_column, true);
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    if (msg.find("response column") == std::string::npos)
      throw;
    return load_csv(path, "", false);
  }
}

} // namespace cputs
