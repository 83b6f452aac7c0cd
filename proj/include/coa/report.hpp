#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace coa::report {

struct Series {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
};

// Rasterizes a simple line chart (axes, ticks, labelled series) to a PNG.
void render_line_chart(const std::filesystem::path& png_path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

std::string format_table_markdown(const std::vector<std::string>& columns,
                                  const std::vector<std::vector<std::string>>& rows);
std::string format_table_csv(const std::vector<std::string>& columns,
                             const std::vector<std::vector<std::string>>& rows);

// Fixed-point with one decimal, the table convention for score columns.
std::string format_score(double value);

}  // namespace coa::report
