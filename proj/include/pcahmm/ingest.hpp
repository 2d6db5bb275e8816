#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pcahmm/matrix.hpp"

namespace pcahmm::ingest {

/// Closing prices; missing entries hold kMissing (NaN).
struct PricePanel {
  std::vector<std::string> dates;
  std::vector<std::string> assets;
  Matrix prices;  // dates.size() x assets.size()
};

/// Simple per-period returns; missing entries hold kMissing (NaN).
struct ReturnsPanel {
  std::vector<std::string> dates;
  std::vector<std::string> assets;
  Matrix returns;  // dates.size() x assets.size()

  std::size_t periods() const noexcept { return dates.size(); }
  std::size_t num_assets() const noexcept { return assets.size(); }
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline bool valid_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (!is_digit(s[i])) return false;
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  const int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

}  // namespace detail

/// Parses `date,<ticker>,...` price CSV. Empty cells are missing prices.
inline PricePanel parse_price_csv(std::istream& in) {
  using detail::trim;
  std::string line;
  std::size_t line_no = 0;

  // Header; tolerate a UTF-8 byte order mark.
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedCsv, "empty file");
  ++line_no;
  std::string_view header = line;
  if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
  const auto head = detail::split_commas(trim(header));
  if (head.empty() || trim(head[0]) != "date") {
    throw Error(ErrorCode::MalformedCsv, "first header column must be 'date'");
  }
  PricePanel panel;
  std::set<std::string, std::less<>> seen;
  for (std::size_t j = 1; j < head.size(); ++j) {
    std::string ticker(trim(head[j]));
    if (ticker.empty()) throw Error(ErrorCode::MalformedCsv, "empty ticker in header column " + std::to_string(j + 1));
    if (!seen.insert(ticker).second) throw Error(ErrorCode::MalformedCsv, "duplicate ticker " + ticker);
    panel.assets.push_back(std::move(ticker));
  }
  const std::size_t n = panel.assets.size();

  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto cells = detail::split_commas(body);
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != n + 1) {
      throw Error(ErrorCode::MalformedCsv, where + ": expected " + std::to_string(n + 1) + " fields, got " +
                                               std::to_string(cells.size()));
    }
    const std::string_view date = trim(cells[0]);
    if (!detail::valid_iso_date(date)) {
      throw Error(ErrorCode::MalformedCsv, where + ": date '" + std::string(date) + "' is not YYYY-MM-DD");
    }
    if (!panel.dates.empty()) {
      const std::string& prev = panel.dates.back();
      if (date == prev) throw Error(ErrorCode::DuplicateDate, where + ": duplicate date " + prev);
      if (date < std::string_view(prev)) {
        throw Error(ErrorCode::UnsortedDates, where + ": date " + std::string(date) + " precedes " + prev);
      }
    }
    panel.dates.emplace_back(date);
    for (std::size_t j = 0; j < n; ++j) {
      const std::string_view cell = trim(cells[j + 1]);
      if (cell.empty()) {
        values.push_back(kMissing);
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::MalformedCsv, where + ": cannot parse '" + std::string(cell) + "' for " + panel.assets[j]);
      }
      if (v <= 0.0) {
        throw Error(ErrorCode::NonPositivePrice, where + ": price " + std::string(cell) + " for " + panel.assets[j]);
      }
      values.push_back(v);
    }
  }
  panel.prices = Matrix(panel.dates.size(), n, std::move(values));
  return panel;
}

inline PricePanel load_price_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open input file " + path);
  return parse_price_csv(in);
}

/// Simple returns p[t]/p[t-1] - 1; missing if either price is missing.
inline ReturnsPanel compute_returns(const PricePanel& p) {
  const std::size_t rows = p.dates.size();
  if (rows < 2) throw Error(ErrorCode::TooFewRows, "need at least 2 price rows, got " + std::to_string(rows));
  const std::size_t n = p.assets.size();
  ReturnsPanel r{std::vector<std::string>(p.dates.begin() + 1, p.dates.end()), p.assets, Matrix(rows - 1, n)};
  for (std::size_t t = 1; t < rows; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      const double prev = p.prices(t - 1, j);
      const double cur = p.prices(t, j);
      r.returns(t - 1, j) = (is_missing(prev) || is_missing(cur)) ? kMissing : cur / prev - 1.0;
    }
  }
  return r;
}

/// Rows [start, start+length) restricted to columns with no missing entry in
/// that slice.
inline ReturnsPanel window_view(const ReturnsPanel& r, std::size_t start, std::size_t length,
                                std::size_t min_assets) {
  if (start + length > r.periods()) {
    throw Error(ErrorCode::InsufficientHistory, "window [" + std::to_string(start) + ", " +
                                                    std::to_string(start + length) + ") exceeds " +
                                                    std::to_string(r.periods()) + " periods");
  }
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < r.num_assets(); ++j) {
    bool complete = true;
    for (std::size_t t = start; t < start + length && complete; ++t) complete = !is_missing(r.returns(t, j));
    if (complete) keep.push_back(j);
  }
  if (keep.size() < min_assets) {
    throw Error(ErrorCode::InsufficientAssets, std::to_string(keep.size()) + " complete assets in window, need " +
                                                   std::to_string(min_assets));
  }
  ReturnsPanel out;
  out.dates.assign(r.dates.begin() + static_cast<std::ptrdiff_t>(start),
                   r.dates.begin() + static_cast<std::ptrdiff_t>(start + length));
  out.returns = Matrix(length, keep.size());
  for (std::size_t c = 0; c < keep.size(); ++c) {
    out.assets.push_back(r.assets[keep[c]]);
    for (std::size_t t = 0; t < length; ++t) out.returns(t, c) = r.returns(start + t, keep[c]);
  }
  return out;
}

}  // namespace pcahmm::ingest
