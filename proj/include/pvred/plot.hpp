#pragma once

// Merges horizon tables and loss histories into one long-format CSV
// (`series,horizon_ms,value`). Loss rows put the iteration in the horizon_ms column.

#include <string>
#include <string_view>
#include <vector>

#include "pvred/error.hpp"
#include "pvred/eval.hpp"
#include "pvred/textio.hpp"

namespace pvred::plot {

inline constexpr std::string_view kPlotHeader = "series,horizon_ms,value";
inline constexpr std::string_view kLossHeader = "iteration,loss";

struct Series {
  std::string label;
  std::string csv;  // a horizon-table CSV or a loss CSV
};

inline std::string emit_plot(const std::vector<Series>& inputs) {
  std::string out(kPlotHeader);
  out += '\n';
  for (const auto& s : inputs) {
    if (s.label.find_first_of(",\n") != std::string::npos)
      throw InvalidInput("series label '" + s.label + "' contains a separator");
    const auto lines = textio::lines(s.csv);
    const std::string_view header = lines.empty() ? std::string_view() : lines.front();
    if (header == eval::kHorizonHeader) {
      const auto table = eval::parse_horizon_csv(s.csv);
      for (std::size_t i = 0; i < table.horizons_ms.size(); ++i)
        out += s.label + "," + textio::format_double(table.horizons_ms[i]) + "," +
               textio::format_double(table.errors[i]) + "\n";
    } else if (header == kLossHeader) {
      for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = textio::split(lines[i], ',');
        if (f.size() != 2) throw ParseError("expected 2 fields", i + 1);
        const long it = textio::parse_long(f[0], i + 1);
        const double loss = textio::parse_double(f[1], i + 1);
        out += s.label + "," + std::to_string(it) + "," + textio::format_double(loss) + "\n";
      }
    } else {
      throw ParseError("unrecognized CSV header '" + std::string(header) + "'", 1);
    }
  }
  return out;
}

}  // namespace pvred::plot
