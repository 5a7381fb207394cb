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

#ifndef NKV_COST_MODEL_HPP
#define NKV_COST_MODEL_HPP

// C++ standard libraries
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nkv::cost
{
class ParamsError : public std::invalid_argument
{
 public:
  using std::invalid_argument::invalid_argument;
};

/**
 * @brief Rental prices. Currency units are arbitrary; only ratios matter.
 *
 * mem_rent and flash_rent are per byte per second, cpu_op and io_overhead per
 * operation. The cost of one SSD operation is io_op = cpu_op + io_overhead.
 */
struct CostParams {
  double mem_rent{1.05e-12};
  double flash_rent{5e-14};
  double cpu_op{2e-8};
  double io_overhead{1.8432e-7};

  [[nodiscard]] auto IoOp() const -> double { return cpu_op + io_overhead; }

  /// Throws ParamsError on negative prices or mem_rent <= flash_rent.
  void Validate() const;

  /// Builds params from an explicit io_op, which must equal cpu_op + io_overhead.
  static auto WithIoOp(double mem_rent, double flash_rent, double cpu_op, double io_overhead, double io_op)
      -> CostParams;

  /// Parses key=value lines (mem_rent, flash_rent, cpu_op, io_overhead, io_op); '#' starts a comment.
  static auto Parse(const std::string &text) -> CostParams;
  static auto Load(const std::string &path) -> CostParams;
};

/// Cost of one operation on a unit of @p unit_bytes served from SSD at @p rop operations per second.
auto CostPerOpSsd(const CostParams &p, double unit_bytes, double rop) -> double;

/// Cost of one operation on a unit of @p unit_bytes kept in DRAM at @p rop operations per second.
auto CostPerOpMem(const CostParams &p, double unit_bytes, double rop) -> double;

/// Access interval (seconds) at which both costs are equal.
auto BreakEvenInterval(const CostParams &p, double unit_bytes) -> double;

/// Operation rate above which DRAM is cheaper; the reciprocal of the break-even interval.
auto BoundaryRop(const CostParams &p, double unit_bytes) -> double;

struct CurveRow {
  double size_bytes;
  double rop;
  double ss_cost;
  double mm_cost;
  bool mem_cheaper;
};

/// @p points rates spaced evenly in log scale over [lo, hi].
auto RopGrid(double lo, double hi, size_t points) -> std::vector<double>;

auto CrossoverCurves(const CostParams &p, const std::vector<double> &sizes, const std::vector<double> &rops)
    -> std::vector<CurveRow>;

/// Header `size_bytes,rop,ss_cost,mm_cost,cheaper` and one line per row.
void WriteCurvesCsv(std::ostream &out, const std::vector<CurveRow> &rows);

/*##############################################################################
 * Hit-ratio simulation
 *############################################################################*/

struct Granularity {
  enum class Kind : uint8_t { kRecord, kPage };

  Kind kind{Kind::kRecord};
  size_t unit_bytes{0};
  size_t records_per_page{1};

  /// "record:BYTES" or "page:BYTES:RECORDS_PER_PAGE".
  static auto Parse(const std::string &text) -> Granularity;
  [[nodiscard]] auto Name() const -> std::string;
};

/**
 * @brief Replays @p trace against an LRU cache of @p budget_bytes.
 *
 * Page granularity groups ids into pages with a seeded shuffle of the distinct
 * ids (unclustered: neighbors in id order rarely share a page).
 */
auto SimulateHitRatio(const std::vector<uint64_t> &trace,
                      const Granularity &granularity,
                      size_t budget_bytes,
                      uint64_t seed = 1) -> double;

}  // namespace nkv::cost

#endif  // NKV_COST_MODEL_HPP
