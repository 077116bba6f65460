#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "advmap/core/binary_io.hpp"

namespace advmap::pipeline {

inline std::string fixed(double v, int digits = 3) {
  if (std::isnan(v)) return "nan";
  const std::string s = fmt::format("{:.{}f}", v, digits);
  // Avoid "-0.000" so reruns that differ only in the sign of zero match.
  return s.find_first_not_of("-0.") == std::string::npos ? s.substr(s.front() == '-' ? 1 : 0) : s;
}

struct Table {
  std::string title;
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

  std::string csv() const {
    auto cell = [](const std::string& s) {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      return q + "\"";
    };
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + cell(r[i]);
      out += "\n";
    };
    line(headers);
    for (const auto& r : rows) line(r);
    return out;
  }

  std::string markdown() const {
    std::string out = title.empty() ? "" : "### " + title + "\n\n";
    auto line = [&](const std::vector<std::string>& r) {
      out += "|";
      for (const auto& c : r) out += " " + c + " |";
      out += "\n";
    };
    line(headers);
    out += "|";
    for (std::size_t i = 0; i < headers.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
    out += "\n";
    for (const auto& r : rows) line(r);
    return out;
  }

  /// Writes <stem>.csv and <stem>.md; returns both paths.
  std::vector<std::filesystem::path> save(const std::filesystem::path& stem) const {
    const std::filesystem::path csv_path = stem.string() + ".csv", md_path = stem.string() + ".md";
    io::write_text(csv_path, csv());
    io::write_text(md_path, markdown());
    return {csv_path, md_path};
  }
};

inline std::vector<std::string> model_headers(std::size_t n) {
  std::vector<std::string> h;
  for (std::size_t i = 0; i < n; ++i) h.push_back("M" + std::to_string(i + 1));
  return h;
}

}  // namespace advmap::pipeline
