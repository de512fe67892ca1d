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

#include <gtest/gtest.h>

#include "tpsim/arch.hpp"
#include "tpsim/report.hpp"

namespace tpsim {
namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

TEST(FormatTest, Numbers) {
  EXPECT_EQ(format_number(0), "0");
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(format_number(104), "104");
  EXPECT_EQ(format_number(1.2345678), "1.23457");
  EXPECT_EQ(format_number(0.000125), "0.000125");
  EXPECT_EQ(format_number(std::nan("")), "nan");
  EXPECT_EQ(format_fixed(-0.001, 2), "0.00");
  EXPECT_EQ(format_fixed(-1.256, 2), "-1.26");
}

TEST(CsvTest, QuotesSpecialCells) {
  CsvWriter csv({"a", "b"});
  csv.row({"x,y", "say \"hi\""});
  EXPECT_EQ(csv.str(), "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
  EXPECT_THROW(csv.row({"only one"}), ContractError);
}

TEST(SvgTest, SinglePoint) {
  const auto svg = emit_svg({{"only", {1.0}, {2.0}}}, {"t", "x", "y"});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(count(svg, "<circle"), 1u);
}

TEST(SvgTest, LegendListsEveryModel) {
  std::vector<Series> series;
  for (const auto& m : builtin_catalog()) {
    series.push_back({m.name, {200, 400, 600}, {1.1, 1.2, 1.25}});
  }
  const auto svg = emit_svg(series, {"Speedup", "Gbit/s", "x"});
  for (const auto& m : builtin_catalog()) {
    EXPECT_NE(svg.find(">" + m.name + "<"), std::string::npos) << m.name;
  }
  EXPECT_EQ(count(svg, "<polyline"), 12u);
}

TEST(SvgTest, DeterministicAndEscaped) {
  const std::vector<Series> s = {{"a<b & c", {1, 2, 3}, {3, 1, 2}}};
  const Axes axes{"title \"q\"", "x", "y"};
  EXPECT_EQ(emit_svg(s, axes), emit_svg(s, axes));
  const auto svg = emit_svg(s, axes);
  EXPECT_NE(svg.find("a&lt;b &amp; c"), std::string::npos);
  EXPECT_EQ(svg.find("a<b"), std::string::npos);
}

TEST(SvgTest, RejectsMalformedSeries) {
  EXPECT_THROW(emit_svg({}, {}), ContractError);
  EXPECT_THROW(emit_svg({{"a", {1, 2}, {1}}}, {}), ContractError);
  EXPECT_THROW(emit_svg({{"a", {2, 1}, {1, 1}}}, {}), ContractError);
}

TEST(SvgTest, FlatSeriesStillRenders) {
  const auto svg = emit_svg({{"flat", {8, 16}, {1, 1}}}, {"t", "x", "y"});
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.find("inf"), std::string::npos);
}

}  // namespace
}  // namespace tpsim
