/*
 * Copyright 2026 The nkv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// C++ standard libraries
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

// external sources
#include <gtest/gtest.h>

// local sources
#include "nkv/cost_model.hpp"
#include "nkv/workload.hpp"

namespace nkv::cost
{
namespace
{
auto
RelErr(double got, double want) -> double
{
  return std::abs(got - want) / std::abs(want);
}

// Straight from the definitions, kept apart from the library code.
struct Oracle {
  double m, fl, p, io;

  [[nodiscard]] auto Ss(double size, double rop) const -> double { return (p + io) + fl * size * (1.0 / rop); }
  [[nodiscard]] auto Mm(double size, double rop) const -> double { return p + m * size * (1.0 / rop); }
  // Ss == Mm at rop = 1/t: io == (m - fl) * size * t
  [[nodiscard]] auto T(double size) const -> double { return io / (m - fl) / size; }
};

TEST(CostModelTest, ShippedDefaultsAnchor)
{
  const CostParams p{};
  EXPECT_LE(RelErr(BreakEvenInterval(p, 4096), 45.0), 0.01);
  EXPECT_LE(RelErr(BreakEvenInterval(p, 409.6), 450.0), 0.01);
  EXPECT_LE(RelErr(BreakEvenInterval(p, 2048), 90.0), 1e-12);
  // a tenth of the size: exactly ten times the interval
  EXPECT_LE(RelErr(BreakEvenInterval(p, 409.6), 10 * BreakEvenInterval(p, 4096)), 1e-12);
}

TEST(CostModelTest, ShippedParamsFileMatchesDefaults)
{
  const auto p = CostParams::Load(NKV_SOURCE_DIR "/config/cost_params.conf");
  EXPECT_LE(RelErr(BreakEvenInterval(p, 4096), 45.0), 0.01);
}

TEST(CostModelTest, IntervalTimesSizeIsConstant)
{
  const CostParams p{};
  const auto c = BreakEvenInterval(p, 4096) * 4096;
  for (const double size : {1.0, 64.0, 409.6, 2048.0, 8192.0, 1e6}) {
    EXPECT_LE(RelErr(BreakEvenInterval(p, size) * size, c), 1e-12) << size;
  }
}

TEST(CostModelTest, AgreesWithOracleOnRandomDraws)
{
  std::mt19937_64 rng{3};
  std::uniform_real_distribution<double> exp10{-15, -6};
  std::uniform_real_distribution<double> size{1, 1e5};
  std::uniform_real_distribution<double> rate{-3, 6};
  for (int i = 0; i < 1000; ++i) {
    const auto fl = std::pow(10.0, exp10(rng) - 2);
    const auto m = fl + std::pow(10.0, exp10(rng));
    const CostParams p{m, fl, std::pow(10.0, exp10(rng)), std::pow(10.0, exp10(rng))};
    const Oracle o{m, fl, p.cpu_op, p.io_overhead};
    const auto s = size(rng);
    const auto r = std::pow(10.0, rate(rng));
    ASSERT_LE(RelErr(CostPerOpSsd(p, s, r), o.Ss(s, r)), 1e-12);
    ASSERT_LE(RelErr(CostPerOpMem(p, s, r), o.Mm(s, r)), 1e-12);
    ASSERT_LE(RelErr(BreakEvenInterval(p, s), o.T(s)), 1e-12);
  }
}

TEST(CostModelTest, Limits)
{
  const CostParams p{};
  EXPECT_LE(RelErr(CostPerOpSsd(p, 4096, 1e30), p.IoOp()), 1e-12);
  EXPECT_LE(RelErr(CostPerOpMem(p, 4096, 1e30), p.cpu_op), 1e-12);
  const CostParams no_flash{1e-12, 0, 2e-8, 1e-7};
  for (const double rop : {1e-3, 1.0, 1e3}) EXPECT_EQ(CostPerOpSsd(no_flash, 4096, rop), no_flash.IoOp());
  const CostParams same{1e-12, 1e-12, 2e-8, 0};
  for (const double rop : {1e-3, 1.0, 1e3}) EXPECT_EQ(CostPerOpSsd(same, 100, rop), CostPerOpMem(same, 100, rop));
}

TEST(CostModelTest, IoIdentityIsEnforced)
{
  const auto p = CostParams::WithIoOp(1e-12, 5e-14, 2e-8, 1.8432e-7, 2e-8 + 1.8432e-7);
  EXPECT_EQ(p.IoOp(), p.cpu_op + p.io_overhead);
  EXPECT_THROW(CostParams::WithIoOp(1e-12, 5e-14, 2e-8, 1.8432e-7, 2e-7), ParamsError);
  EXPECT_THROW(CostParams::Parse("io_op = 1\n"), ParamsError);
  EXPECT_NO_THROW(CostParams::Parse("cpu_op = 1\nio_overhead = 2\nio_op = 3\n"));
}

TEST(CostModelTest, DegenerateParams)
{
  EXPECT_THROW(CostParams::Parse("mem_rent = 1e-14\nflash_rent = 1e-13\n"), ParamsError);
  EXPECT_THROW(CostParams::Parse("cpu_op = -1\n"), ParamsError);
  CostParams p{};
  p.mem_rent = p.flash_rent;
  EXPECT_THROW(BreakEvenInterval(p, 4096), ParamsError);
}

TEST(CostModelTest, ParseErrorsNameTheLine)
{
  auto message = [](const std::string &text) {
    try {
      CostParams::Parse(text);
    } catch (const ParamsError &e) {
      return std::string{e.what()};
    }
    return std::string{};
  };
  EXPECT_NE(message("# comment\nmem_rent 1\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("mem_rent = 1\n\nflash_rent = abc\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("speed = 1\n").find("line 1"), std::string::npos);
  const auto p = CostParams::Parse("  mem_rent = 2e-12  # dram\n\n");
  EXPECT_EQ(p.mem_rent, 2e-12);
}

TEST(CostModelTest, CurveBoundaryMatchesInterval)
{
  const CostParams p{};
  const auto grid = RopGrid(1e-4, 1, 401);
  for (const double size : {2048.0, 4096.0}) {
    const auto rows = CrossoverCurves(p, {size}, grid);
    const auto boundary = BoundaryRop(p, size);
    for (size_t i = 0; i < rows.size(); ++i) {
      // rates below the boundary keep the unit on flash, rates above cache it
      if (rows[i].rop < boundary) {
        EXPECT_FALSE(rows[i].mem_cheaper) << rows[i].rop;
      } else if (rows[i].rop > boundary) {
        EXPECT_TRUE(rows[i].mem_cheaper) << rows[i].rop;
      }
      if (i > 0) {
        const auto prev = rows[i - 1].mm_cost - rows[i - 1].ss_cost;
        // the rent gap shrinks as the rate grows
        EXPECT_LE(rows[i].mm_cost - rows[i].ss_cost, prev);
      }
    }
  }
  EXPECT_LE(RelErr(BoundaryRop(p, 2048), BoundaryRop(p, 4096) / 2), 1e-12);
}

TEST(CostModelTest, CsvLayout)
{
  std::ostringstream out;
  WriteCurvesCsv(out, CrossoverCurves(CostParams{}, {4096}, {0.001, 1}));
  const auto text = out.str();
  EXPECT_EQ(text.rfind("size_bytes,rop,ss_cost,mm_cost,cheaper\n4096,0.001,", 0), 0U);
  EXPECT_NE(text.find(",ssd\n4096,1,"), std::string::npos);
  EXPECT_TRUE(text.ends_with(",mem\n"));
}

TEST(CostModelTest, RopGrid)
{
  const auto g = RopGrid(0.01, 100, 5);
  ASSERT_EQ(g.size(), 5U);
  EXPECT_DOUBLE_EQ(g[0], 0.01);
  EXPECT_DOUBLE_EQ(g[2], 1);
  EXPECT_EQ(g[4], 100);
  EXPECT_THROW(RopGrid(0, 1, 3), ParamsError);
  EXPECT_THROW(RopGrid(2, 1, 3), ParamsError);
}

/*##############################################################################
 * Hit-ratio simulation
 *############################################################################*/

/// LRU by stack distance: a hit iff fewer than capacity distinct ids were seen since the last access.
auto
StackDistanceHits(const std::vector<uint64_t> &trace, size_t capacity) -> double
{
  uint64_t hits = 0;
  for (size_t i = 0; i < trace.size(); ++i) {
    std::set<uint64_t> between;
    for (size_t j = i; j-- > 0;) {
      if (trace[j] == trace[i]) {
        if (between.size() < capacity) ++hits;
        break;
      }
      between.insert(trace[j]);
    }
  }
  return static_cast<double>(hits) / static_cast<double>(trace.size());
}

TEST(HitRatioTest, RepeatedId)
{
  const std::vector<uint64_t> trace(100, 42);
  EXPECT_DOUBLE_EQ(SimulateHitRatio(trace, Granularity::Parse("record:100"), 100), 0.99);
  EXPECT_DOUBLE_EQ(SimulateHitRatio(trace, Granularity::Parse("page:1000:10"), 1000), 0.99);
}

TEST(HitRatioTest, MatchesStackDistanceOracle)
{
  std::mt19937_64 rng{17};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<uint64_t> trace(600);
    for (auto &id : trace) id = rng() % 40;
    const size_t capacity = 1 + trial;
    EXPECT_DOUBLE_EQ(SimulateHitRatio(trace, Granularity{Granularity::Kind::kRecord, 10, 1}, capacity * 10),
                     StackDistanceHits(trace, capacity));
  }
}

TEST(HitRatioTest, UniformTraceApproachesBudgetShare)
{
  std::mt19937_64 rng{23};
  std::vector<uint64_t> trace(200000);
  for (auto &id : trace) id = rng() % 10000;
  const auto ratio = SimulateHitRatio(trace, Granularity::Parse("record:100"), 1000 * 100);
  EXPECT_NEAR(ratio, 0.1, 0.01);
}

TEST(HitRatioTest, RecordsBeatPagesOnSkewedTrace)
{
  const auto trace = ZipfTrace(100000, 1000000, 0.99, 1);
  const size_t budget = 100000 * 400 / 10;
  const auto record = SimulateHitRatio(trace, Granularity::Parse("record:400"), budget);
  const auto page = SimulateHitRatio(trace, Granularity::Parse("page:4000:10"), budget);
  EXPECT_GT(record, page);
}

TEST(HitRatioTest, BadInputs)
{
  EXPECT_THROW(Granularity::Parse("page:4096"), ParamsError);
  EXPECT_THROW(Granularity::Parse("record:0"), ParamsError);
  EXPECT_THROW(SimulateHitRatio({1}, Granularity::Parse("record:100"), 99), ParamsError);
  EXPECT_EQ(Granularity::Parse("page:4000:10").Name(), "page:4000:10");
}

}  // namespace
}  // namespace nkv::cost
