#include "dermfuse/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dermfuse {

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& config_name, uint64_t seed,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write history CSV '" + path + "'");
  out << "config,seed,epoch,lr,train_loss,DIAG,PN,BWV,VS,PIG,STR,DaG,RS,AVG,"
         "meanF1\n";
  char buf[64];
  for (const EpochRecord& r : history) {
    out << config_name << "," << seed << "," << r.epoch;
    std::snprintf(buf, sizeof(buf), "%.10g", r.lr);
    out << "," << buf;
    std::snprintf(buf, sizeof(buf), "%.10g", r.train_loss);
    out << "," << buf;
    for (int t = 0; t < kNumTasks; ++t) {
      std::snprintf(buf, sizeof(buf), "%.4f",
                    r.val.accuracy[static_cast<size_t>(t)]);
      out << "," << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.4f", r.val.avg);
    out << "," << buf;
    std::snprintf(buf, sizeof(buf), "%.4f", r.val.mean_f1);
    out << "," << buf << "\n";
  }
}

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV '" + path + "'");
  CsvTable t;
  std::string line;
  bool first = true;
  auto fields = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : l) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      t.header = fields(line);
      first = false;
    } else {
      t.rows.push_back(fields(line));
    }
  }
  if (first) throw DataError("CSV '" + path + "' is empty");
  return t;
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::string render_table(const CsvTable& table) {
  std::vector<size_t> widths(table.header.size(), 0);
  for (size_t c = 0; c < table.header.size(); ++c) {
    widths[c] = table.header[c].size();
  }
  for (const auto& row : table.rows) {
    for (size_t c = 0; c < row.size() && c < widths.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row) {
    for (size_t c = 0; c < widths.size(); ++c) {
      const std::string cell = c < row.size() ? row[c] : "";
      os << cell << std::string(widths[c] - cell.size() + 2, ' ');
    }
    os << "\n";
  };
  emit(table.header);
  for (size_t c = 0; c < widths.size(); ++c) {
    os << std::string(widths[c], '-') << "  ";
  }
  os << "\n";
  for (const auto& row : table.rows) emit(row);
  return os.str();
}

void write_svg_chart(const std::string& title,
                     const std::vector<ChartSeries>& series,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write SVG '" + path + "'");

  const int width = 720, height = 420;
  const int ml = 60, mr = 20, mt = 40, mb = 40;
  const double plot_w = width - ml - mr;
  const double plot_h = height - mt - mb;

  size_t max_n = 0;
  double lo = 0.0, hi = 1.0;
  bool any = false;
  for (const ChartSeries& s : series) {
    max_n = std::max(max_n, s.values.size());
    for (double v : s.values) {
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!any || max_n < 2) {
    lo = 0.0;
    hi = 1.0;
    max_n = std::max<size_t>(max_n, 2);
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;

  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                           "#ff7f0e", "#8c564b"};
  char buf[256];

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title
      << "</text>\n";
  // Axes.
  std::snprintf(buf, sizeof(buf),
                "<line x1='%d' y1='%d' x2='%d' y2='%d' stroke='black'/>\n",
                ml, mt, ml, height - mb);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1='%d' y1='%d' x2='%d' y2='%d' stroke='black'/>\n",
                ml, height - mb, width - mr, height - mb);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x='%d' y='%d' font-family='sans-serif' font-size='11' "
                "text-anchor='end'>%.3g</text>\n",
                ml - 6, height - mb, lo);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x='%d' y='%d' font-family='sans-serif' font-size='11' "
                "text-anchor='end'>%.3g</text>\n",
                ml - 6, mt + 10, hi);
  out << buf;

  for (size_t si = 0; si < series.size(); ++si) {
    const ChartSeries& s = series[si];
    if (s.values.size() < 2) continue;
    out << "<polyline fill=\"none\" stroke=\"" << palette[si % 6]
        << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.values.size(); ++i) {
      const double x =
          ml + plot_w * static_cast<double>(i) /
                   static_cast<double>(max_n - 1);
      const double y =
          (height - mb) - plot_h * (s.values[i] - lo) / (hi - lo);
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x, y);
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<text x='%d' y='%d' font-family='sans-serif' "
                  "font-size='12' fill='%s'>%s</text>\n",
                  width - mr - 150, mt + 16 * static_cast<int>(si) + 8,
                  palette[si % 6], s.label.c_str());
    out << buf;
  }
  out << "</svg>\n";
}

}  // namespace dermfuse
