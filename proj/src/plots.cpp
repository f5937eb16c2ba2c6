#include "radur/plots.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace radur::plots {

namespace {

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"};

std::string escape(const std::string& s) {
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

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Blue ramp from white (0) to dark blue (1).
std::string ramp(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(247 - v * (247 - 8));
  const int g = static_cast<int>(251 - v * (251 - 48));
  const int b = static_cast<int>(255 - v * (255 - 107));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<Series>& series) {
  const double left = 50, top = 40, plot_h = 220, group_w = 90;
  const double width = left + group_w * static_cast<double>(std::max<std::size_t>(1, categories.size())) + 150;
  const double height = top + plot_h + 60;
  const double bar_w = (group_w - 20) / static_cast<double>(std::max<std::size_t>(1, series.size()));
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = top + plot_h - plot_h * i / 4.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + group_w * static_cast<double>(categories.size())
        << "\" y1=\"" << y << "\" y2=\"" << y << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fixed(i / 4.0) << "</text>\n";
  }
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = left + group_w * static_cast<double>(c) + 10;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].values.size() || !series[s].values[c]) continue;
      const double v = std::clamp(*series[s].values[c], 0.0, 1.0);
      const double h = plot_h * v;
      const double x = gx + bar_w * static_cast<double>(s);
      svg << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w - 2 << "\" height=\"" << h
          << "\" fill=\"" << kPalette[s % 5] << "\"/>\n";
      svg << "<text x=\"" << x + (bar_w - 2) / 2 << "\" y=\"" << top + plot_h - h - 3
          << "\" text-anchor=\"middle\" font-size=\"9\">" << fixed(v) << "</text>\n";
    }
    svg << "<text x=\"" << gx + (group_w - 20) / 2 << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">"
        << escape(categories[c]) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = top + 14.0 * static_cast<double>(s);
    const double x = left + group_w * static_cast<double>(categories.size()) + 20;
    svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[s % 5] << "\"/>\n";
    svg << "<text x=\"" << x + 14 << "\" y=\"" << y + 9 << "\">" << escape(series[s].name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string heatmap(const std::string& title, const std::string& row_label, const std::vector<std::string>& rows,
                    const std::string& col_label, const std::vector<std::string>& cols,
                    const std::vector<std::vector<double>>& cells) {
  const double left = 80, top = 50, cell = 56;
  const double width = left + cell * static_cast<double>(cols.size()) + 20;
  const double height = top + cell * static_cast<double>(rows.size()) + 50;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double y = top + cell * static_cast<double>(r);
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">" << escape(rows[r])
        << "</text>\n";
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double x = left + cell * static_cast<double>(c);
      const double v = r < cells.size() && c < cells[r].size() ? cells[r][c] : 0.0;
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
          << ramp(v) << "\" stroke=\"#fff\"/>\n";
      svg << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
          << (v > 0.55 ? "#fff" : "#000") << "\">" << fixed(v) << "</text>\n";
    }
  }
  for (std::size_t c = 0; c < cols.size(); ++c) {
    svg << "<text x=\"" << left + cell * (static_cast<double>(c) + 0.5) << "\" y=\"" << top - 6
        << "\" text-anchor=\"middle\">" << escape(cols[c]) << "</text>\n";
  }
  svg << "<text x=\"" << left + cell * static_cast<double>(cols.size()) / 2 << "\" y=\""
      << top + cell * static_cast<double>(rows.size()) + 20 << "\" text-anchor=\"middle\">" << escape(col_label)
      << " (columns), " << escape(row_label) << " (rows)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace radur::plots
