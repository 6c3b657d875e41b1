#pragma once

#include <string>
#include <vector>

#include "dermfuse/train.hpp"

namespace dermfuse {

// Per-epoch history rows with the metric block in the fixed column order
// (DIAG, PN, BWV, VS, PIG, STR, DaG, RS, AVG, meanF1).
void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& config_name, uint64_t seed,
                       const std::string& path);

// Minimal CSV table reader (no quoting; the formats written here never need
// it).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::string& path);
  int column(const std::string& name) const;  // -1 if absent
};

// Fixed-width text rendering of a CSV table.
std::string render_table(const CsvTable& table);

// One polyline per series over a shared integer x-axis, written as an SVG
// image.
struct ChartSeries {
  std::string label;
  std::vector<double> values;
};

void write_svg_chart(const std::string& title,
                     const std::vector<ChartSeries>& series,
                     const std::string& path);

}  // namespace dermfuse
