#pragma once

// CSV files exchanged between CLI stages.

#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tfp/error.hpp"
#include "tfp/featex.hpp"
#include "tfp/gmmbase.hpp"
#include "tfp/pipeline.hpp"

namespace tfp::csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(0, 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

namespace detail {

inline long to_long(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError(where + ": '" + s + "' is not an integer");
}

inline double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError(where + ": '" + s + "' is not a number");
}

inline void expect_header(std::istream& is, const std::vector<std::string>& expected, const std::string& what) {
  std::string line;
  if (!std::getline(is, line)) throw InputError(what + ": empty file");
  const auto cells = split_line(line);
  if (cells.size() < expected.size() || !std::equal(expected.begin(), expected.end(), cells.begin()))
    throw InputError(what + ": unexpected header '" + line + "'");
}

}  // namespace detail

// `frame,count`
inline std::map<std::size_t, long> read_truth(std::istream& is) {
  detail::expect_header(is, {"frame", "count"}, "truth CSV");
  std::map<std::size_t, long> truth;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    const std::string where = "truth CSV line " + std::to_string(lineno);
    if (cells.size() != 2) throw InputError(where + ": expected 2 columns");
    const long frame = detail::to_long(cells[0], where);
    const long count = detail::to_long(cells[1], where);
    if (frame < 0 || count < 0) throw InputError(where + ": negative value");
    truth[static_cast<std::size_t>(frame)] = count;
  }
  return truth;
}

inline void write_truth(std::ostream& os, const std::map<std::size_t, long>& truth) {
  os << "frame,count\n";
  for (const auto& [k, v] : truth) os << k << ',' << v << '\n';
}

inline void write_features(std::ostream& os, const std::vector<featex::FeatureVector>& features,
                           const std::vector<std::size_t>& frames) {
  const auto& header = featex::csv_header();
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  os << std::setprecision(17);
  for (std::size_t r = 0; r < features.size(); ++r) {
    os << frames[r];
    for (double v : features[r].values()) os << ',' << v;
    os << '\n';
  }
}

struct FeatureTable {
  std::vector<std::size_t> frames;
  std::vector<featex::FeatureVector> features;
};

inline FeatureTable read_features(std::istream& is) {
  const auto& header = featex::csv_header();
  detail::expect_header(is, std::vector<std::string>(header.begin(), header.end()), "features CSV");
  FeatureTable t;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    const std::string where = "features CSV line " + std::to_string(lineno);
    if (cells.size() != header.size()) throw InputError(where + ": expected " + std::to_string(header.size()) + " columns");
    const long frame = detail::to_long(cells[0], where);
    if (frame < 0) throw InputError(where + ": negative frame");
    std::array<double, featex::kFeatureCount> v{};
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::to_double(cells[i + 1], where);
    t.frames.push_back(static_cast<std::size_t>(frame));
    t.features.push_back(featex::FeatureVector::from_values(v));
  }
  return t;
}

// `frame,truth,estimate[,mean,variance]`; missing truth is an empty cell.
inline void write_report(std::ostream& os, const pipeline::RunReport& report, bool raw_mean = false) {
  os << "frame,truth,estimate" << (raw_mean ? ",mean,variance" : "") << '\n';
  os << std::setprecision(17);
  for (const auto& r : report.rows) {
    os << r.frame << ',';
    if (r.truth) os << *r.truth;
    os << ',' << r.estimate;
    if (raw_mean) os << ',' << r.mean << ',' << r.variance;
    os << '\n';
  }
}

inline pipeline::RunReport read_report(std::istream& is) {
  detail::expect_header(is, {"frame", "truth", "estimate"}, "report CSV");
  pipeline::RunReport report;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    const std::string where = "report CSV line " + std::to_string(lineno);
    if (cells.size() < 3) throw InputError(where + ": expected at least 3 columns");
    pipeline::ReportRow row;
    row.frame = static_cast<std::size_t>(detail::to_long(cells[0], where));
    if (!cells[1].empty()) row.truth = detail::to_long(cells[1], where);
    row.estimate = detail::to_long(cells[2], where);
    row.mean = cells.size() > 3 ? detail::to_double(cells[3], where) : static_cast<double>(row.estimate);
    if (cells.size() > 4) row.variance = detail::to_double(cells[4], where);
    report.rows.push_back(row);
  }
  return report;
}

inline void write_metrics(std::ostream& os, const pipeline::Metrics& m) {
  os << std::setprecision(10);
  os << "metric,value\n";
  os << "mae," << m.mae << '\n';
  os << "rmse," << m.rmse << '\n';
  os << "max_abs_error," << m.max_abs << '\n';
  os << "frames," << m.frames << '\n';
}

inline void write_counts(std::ostream& os, const std::vector<gmmbase::FrameCount>& counts) {
  os << "frame,count\n";
  for (const auto& c : counts) os << c.frame << ',' << c.count << '\n';
}

inline void write_boxes(std::ostream& os, const std::vector<gmmbase::FrameCount>& counts) {
  os << "frame,top,left,height,width\n";
  for (const auto& c : counts)
    for (const auto& b : c.blobs) os << c.frame << ',' << b.top << ',' << b.left << ',' << b.height << ',' << b.width << '\n';
}

}  // namespace tfp::csv
