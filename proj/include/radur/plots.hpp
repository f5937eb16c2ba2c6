#pragma once

// Small self-contained SVG charts for reports.

#include <optional>
#include <string>
#include <vector>

namespace radur::plots {

struct Series {
  std::string name;
  std::vector<std::optional<double>> values;  // missing bars are left out
};

/// Grouped bars, one group per category; values in [0, 1].
std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<Series>& series);

/// cells[row][col] in [0, 1], annotated with two decimals.
std::string heatmap(const std::string& title, const std::string& row_label, const std::vector<std::string>& rows,
                    const std::string& col_label, const std::vector<std::string>& cols,
                    const std::vector<std::vector<double>>& cells);

}  // namespace radur::plots
