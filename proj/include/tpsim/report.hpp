/* Copyright 2026 The tpsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Locale-independent number formatting, CSV rows and self-contained SVG
// line charts.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "tpsim/common.hpp"

namespace tpsim {

// Six significant digits, shortest form ("%g"-like), independent of the
// global locale.
inline std::string format_number(double v, int significant = 6) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0) return "0";
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::general, significant);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), ptr);
}

inline std::string format_fixed(double v, int decimals) {
  std::array<char, 64> buf{};
  auto [ptr, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, decimals);
  if (ec != std::errc{}) return "0";
  std::string s(buf.data(), ptr);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) {
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw ContractError("CsvWriter: wrong number of cells");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << escape(cells[i]);
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  static std::string escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string q = "\"";
    for (char c : cell) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  }

  std::size_t columns_;
  std::ostringstream out_;
};

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// 1, 2 or 5 times a power of ten.
inline double nice_step(double span, int target_ticks) {
  const double raw = span / target_ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  return (r < 1.5 ? 1 : r < 3.5 ? 2 : r < 7.5 ? 5 : 10) * mag;
}

inline constexpr const char* kPalette[] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39"};

}  // namespace detail

inline std::string emit_svg(const std::vector<Series>& series, const Axes& axes) {
  if (series.empty()) throw ContractError("emit_svg: no series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) {
      throw ContractError("emit_svg: series '" + s.label + "' is empty or ragged");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i && !(s.x[i] > s.x[i - 1])) {
        throw ContractError("emit_svg: x values of '" + s.label + "' must strictly increase");
      }
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) throw ContractError("emit_svg: no finite points");
  if (xmax == xmin) { xmin -= 1; xmax += 1; }
  if (ymax == ymin) { ymin -= 0.5 * std::max(1e-9, std::fabs(ymin)); ymax += 0.5 * std::max(1e-9, std::fabs(ymax)); }
  const double ystep = detail::nice_step(ymax - ymin, 5);
  ymin = std::floor(ymin / ystep) * ystep;
  ymax = std::ceil(ymax / ystep) * ystep;
  const double xstep = detail::nice_step(xmax - xmin, 6);

  constexpr double kWidth = 760, kHeight = 480;
  constexpr double kLeft = 80, kRight = 190, kTop = 40, kBottom = 60;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - ymin) / (ymax - ymin) * ph; };
  auto f = [](double v) { return format_fixed(v, 2); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
    << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << f(kLeft + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << detail::xml_escape(axes.title) << "</text>\n";
  o << "<rect x=\"" << f(kLeft) << "\" y=\"" << f(kTop) << "\" width=\"" << f(pw)
    << "\" height=\"" << f(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t = std::ceil(xmin / xstep) * xstep; t <= xmax + 1e-9 * xstep; t += xstep) {
    o << "<line x1=\"" << f(px(t)) << "\" y1=\"" << f(kTop + ph) << "\" x2=\"" << f(px(t))
      << "\" y2=\"" << f(kTop + ph + 5) << "\" stroke=\"black\"/>"
      << "<text x=\"" << f(px(t)) << "\" y=\"" << f(kTop + ph + 18)
      << "\" text-anchor=\"middle\">" << format_number(t, 4) << "</text>\n";
  }
  for (double t = ymin; t <= ymax + 1e-9 * ystep; t += ystep) {
    o << "<line x1=\"" << f(kLeft - 5) << "\" y1=\"" << f(py(t)) << "\" x2=\"" << f(kLeft + pw)
      << "\" y2=\"" << f(py(t)) << "\" stroke=\"#dddddd\"/>"
      << "<text x=\"" << f(kLeft - 8) << "\" y=\"" << f(py(t) + 4)
      << "\" text-anchor=\"end\">" << format_number(t, 4) << "</text>\n";
  }
  o << "<text x=\"" << f(kLeft + pw / 2) << "\" y=\"" << f(kHeight - 15)
    << "\" text-anchor=\"middle\">" << detail::xml_escape(axes.x_label) << "</text>\n";
  o << "<text transform=\"translate(20," << f(kTop + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << detail::xml_escape(axes.y_label)
    << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = detail::kPalette[k % std::size(detail::kPalette)];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      if (!points.empty()) points += ' ';
      points += f(px(s.x[i])) + "," + f(py(s.y[i]));
    }
    o << "<g>\n";
    if (s.x.size() > 1) {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << points << "\"/>\n";
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      o << "<circle cx=\"" << f(px(s.x[i])) << "\" cy=\"" << f(py(s.y[i]))
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    o << "</g>\n";
    const double ly = kTop + 10 + 16 * static_cast<double>(k);
    o << "<line x1=\"" << f(kLeft + pw + 12) << "\" y1=\"" << f(ly) << "\" x2=\""
      << f(kLeft + pw + 32) << "\" y2=\"" << f(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/><text x=\"" << f(kLeft + pw + 38) << "\" y=\"" << f(ly + 4)
      << "\">" << detail::xml_escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace tpsim
