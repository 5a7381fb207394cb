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

#include "nkv/cost_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <list>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace nkv::cost
{
namespace
{
constexpr double kIoTolerance = 1e-12;

auto
Trim(std::string s) -> std::string
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

auto
ParseDouble(const std::string &text, double *out) -> bool
{
  const auto *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, *out);
  return ec == std::errc{} && ptr == end && std::isfinite(*out);
}

auto
ParseSize(const std::string &text, const std::string &what) -> size_t
{
  size_t v = 0;
  const auto *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || v == 0) throw ParamsError{"bad " + what + ": '" + text + "'"};
  return v;
}
}  // namespace

void
CostParams::Validate() const
{
  if (mem_rent < 0 || flash_rent < 0 || cpu_op < 0 || io_overhead < 0) {
    throw ParamsError{"cost parameters must be non-negative"};
  }
  if (mem_rent <= flash_rent) throw ParamsError{"mem_rent must exceed flash_rent"};
}

auto
CostParams::WithIoOp(double mem_rent, double flash_rent, double cpu_op, double io_overhead, double io_op)
    -> CostParams
{
  const CostParams p{mem_rent, flash_rent, cpu_op, io_overhead};
  const auto expect = p.IoOp();
  if (std::abs(io_op - expect) > kIoTolerance * std::max(std::abs(expect), 1e-300)) {
    throw ParamsError{"io_op must equal cpu_op + io_overhead"};
  }
  p.Validate();
  return p;
}

auto
CostParams::Parse(const std::string &text) -> CostParams
{
  CostParams p{};
  std::optional<double> io_op;
  std::istringstream in{text};
  std::string line;
  for (size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ParamsError{where + "expected key=value"};
    const auto key = Trim(line.substr(0, eq));
    double value = 0;
    if (!ParseDouble(Trim(line.substr(eq + 1)), &value)) throw ParamsError{where + "bad number for " + key};
    if (key == "mem_rent") {
      p.mem_rent = value;
    } else if (key == "flash_rent") {
      p.flash_rent = value;
    } else if (key == "cpu_op") {
      p.cpu_op = value;
    } else if (key == "io_overhead") {
      p.io_overhead = value;
    } else if (key == "io_op") {
      io_op = value;
    } else {
      throw ParamsError{where + "unknown key " + key};
    }
  }
  if (io_op) return WithIoOp(p.mem_rent, p.flash_rent, p.cpu_op, p.io_overhead, *io_op);
  p.Validate();
  return p;
}

auto
CostParams::Load(const std::string &path) -> CostParams
{
  std::ifstream in{path};
  if (!in) throw ParamsError{"cannot read " + path};
  std::ostringstream text;
  text << in.rdbuf();
  return Parse(text.str());
}

auto
CostPerOpSsd(const CostParams &p, double unit_bytes, double rop) -> double
{
  return p.IoOp() + p.flash_rent * unit_bytes / rop;
}

auto
CostPerOpMem(const CostParams &p, double unit_bytes, double rop) -> double
{
  return p.cpu_op + p.mem_rent * unit_bytes / rop;
}

auto
BreakEvenInterval(const CostParams &p, double unit_bytes) -> double
{
  if (p.mem_rent <= p.flash_rent) throw ParamsError{"break-even needs mem_rent > flash_rent"};
  if (p.io_overhead <= 0) throw ParamsError{"break-even needs io_overhead > 0"};
  if (unit_bytes <= 0) throw ParamsError{"unit size must be positive"};
  return p.io_overhead / ((p.mem_rent - p.flash_rent) * unit_bytes);
}

auto
BoundaryRop(const CostParams &p, double unit_bytes) -> double
{
  return 1.0 / BreakEvenInterval(p, unit_bytes);
}

auto
RopGrid(double lo, double hi, size_t points) -> std::vector<double>
{
  if (points == 0 || lo <= 0 || hi < lo) throw ParamsError{"rop range needs 0 < lo <= hi and at least one point"};
  std::vector<double> grid;
  grid.reserve(points);
  if (points == 1) {
    grid.push_back(lo);
    return grid;
  }
  const auto step = (std::log(hi) - std::log(lo)) / static_cast<double>(points - 1);
  for (size_t i = 0; i < points; ++i) grid.push_back(std::exp(std::log(lo) + step * static_cast<double>(i)));
  grid.back() = hi;
  return grid;
}

auto
CrossoverCurves(const CostParams &p, const std::vector<double> &sizes, const std::vector<double> &rops)
    -> std::vector<CurveRow>
{
  if (sizes.empty() || rops.empty()) throw ParamsError{"curves need at least one size and one rate"};
  std::vector<CurveRow> rows;
  rows.reserve(sizes.size() * rops.size());
  for (const auto size : sizes) {
    for (const auto rop : rops) {
      const auto ss = CostPerOpSsd(p, size, rop);
      const auto mm = CostPerOpMem(p, size, rop);
      rows.push_back(CurveRow{size, rop, ss, mm, mm < ss});
    }
  }
  return rows;
}

void
WriteCurvesCsv(std::ostream &out, const std::vector<CurveRow> &rows)
{
  out << "size_bytes,rop,ss_cost,mm_cost,cheaper\n";
  const auto flags = out.flags();
  const auto prec = out.precision(10);
  for (const auto &r : rows) {
    out << r.size_bytes << ',' << r.rop << ',' << r.ss_cost << ',' << r.mm_cost << ','
        << (r.mem_cheaper ? "mem" : "ssd") << '\n';
  }
  out.precision(prec);
  out.flags(flags);
}

auto
Granularity::Parse(const std::string &text) -> Granularity
{
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in{text};
  while (std::getline(in, part, ':')) parts.push_back(part);
  if (parts.size() == 2 && parts[0] == "record") {
    return Granularity{Kind::kRecord, ParseSize(parts[1], "record size"), 1};
  }
  if (parts.size() == 3 && parts[0] == "page") {
    return Granularity{Kind::kPage, ParseSize(parts[1], "page size"), ParseSize(parts[2], "records per page")};
  }
  throw ParamsError{"granularity must be record:BYTES or page:BYTES:RPP, got '" + text + "'"};
}

auto
Granularity::Name() const -> std::string
{
  if (kind == Kind::kRecord) return "record:" + std::to_string(unit_bytes);
  return "page:" + std::to_string(unit_bytes) + ":" + std::to_string(records_per_page);
}

auto
SimulateHitRatio(const std::vector<uint64_t> &trace, const Granularity &granularity, size_t budget_bytes, uint64_t seed)
    -> double
{
  if (granularity.unit_bytes == 0) throw ParamsError{"unit size must be positive"};
  const auto capacity = budget_bytes / granularity.unit_bytes;
  if (capacity == 0) throw ParamsError{"budget holds less than one unit"};
  if (trace.empty()) return 0.0;

  std::unordered_map<uint64_t, uint64_t> page_of;
  if (granularity.kind == Granularity::Kind::kPage) {
    std::vector<uint64_t> ids{trace};
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::mt19937_64 rng{seed};
    std::shuffle(ids.begin(), ids.end(), rng);
    page_of.reserve(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) page_of.emplace(ids[i], i / granularity.records_per_page);
  }

  std::list<uint64_t> lru;  // most recent at the front
  std::unordered_map<uint64_t, std::list<uint64_t>::iterator> where;
  where.reserve(capacity * 2);
  uint64_t hits = 0;
  for (const auto id : trace) {
    const auto unit = granularity.kind == Granularity::Kind::kPage ? page_of.at(id) : id;
    const auto it = where.find(unit);
    if (it != where.end()) {
      ++hits;
      lru.splice(lru.begin(), lru, it->second);
      continue;
    }
    if (where.size() == capacity) {
      where.erase(lru.back());
      lru.pop_back();
    }
    lru.push_front(unit);
    where.emplace(unit, lru.begin());
  }
  return static_cast<double>(hits) / static_cast<double>(trace.size());
}

}  // namespace nkv::cost
