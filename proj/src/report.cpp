#include "coa/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "coa/errors.hpp"

namespace coa::report {

namespace fs = std::filesystem;

namespace {

const std::vector<cv::Scalar>& palette() {
    static const std::vector<cv::Scalar> colors = {
        cv::Scalar(180, 90, 30),  cv::Scalar(40, 110, 200), cv::Scalar(60, 160, 70),
        cv::Scalar(160, 60, 160), cv::Scalar(40, 40, 40),   cv::Scalar(20, 150, 190),
    };
    return colors;
}

std::string tick_label(double v) {
    std::ostringstream out;
    if (std::abs(v) >= 1000.0 || (v != 0.0 && std::abs(v) < 0.01))
        out.precision(2), out << std::scientific << v;
    else
        out.precision(3), out << v;
    return out.str();
}

}  // namespace

void render_line_chart(const fs::path& png_path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
    constexpr int W = 720, H = 480;
    constexpr int L = 80, R = 30, T = 50, B = 60;  // margins

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (double x : s.xs) xmin = std::min(xmin, x), xmax = std::max(xmax, x);
        for (double y : s.ys) ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
    if (!std::isfinite(xmin) || !std::isfinite(ymin))
        throw InputError("render_line_chart: no data points");
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    cv::Mat canvas(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
    const auto to_px = [&](double x, double y) {
        const int px = L + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (W - L - R)));
        const int py = H - B - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (H - T - B)));
        return cv::Point(px, py);
    };

    const cv::Scalar axis(70, 70, 70);
    cv::line(canvas, {L, T}, {L, H - B}, axis, 1);
    cv::line(canvas, {L, H - B}, {W - R, H - B}, axis, 1);

    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        const cv::Point xp = to_px(xv, ymin), yp = to_px(xmin, yv);
        cv::line(canvas, {xp.x, H - B}, {xp.x, H - B + 4}, axis, 1);
        cv::line(canvas, {L - 4, yp.y}, {L, yp.y}, axis, 1);
        cv::putText(canvas, tick_label(xv), {xp.x - 20, H - B + 20}, cv::FONT_HERSHEY_SIMPLEX,
                    0.38, axis, 1, cv::LINE_AA);
        cv::putText(canvas, tick_label(yv), {8, yp.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.38, axis,
                    1, cv::LINE_AA);
    }

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const cv::Scalar color = palette()[si % palette().size()];
        for (std::size_t i = 0; i + 1 < s.xs.size(); ++i)
            cv::line(canvas, to_px(s.xs[i], s.ys[i]), to_px(s.xs[i + 1], s.ys[i + 1]), color, 2,
                     cv::LINE_AA);
        for (std::size_t i = 0; i < s.xs.size(); ++i)
            cv::circle(canvas, to_px(s.xs[i], s.ys[i]), 3, color, cv::FILLED, cv::LINE_AA);
        cv::putText(canvas, s.label, {W - R - 200, T + 18 * static_cast<int>(si + 1)},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, color, 1, cv::LINE_AA);
    }

    cv::putText(canvas, title, {L, T - 18}, cv::FONT_HERSHEY_SIMPLEX, 0.6, cv::Scalar(0, 0, 0),
                1, cv::LINE_AA);
    cv::putText(canvas, x_label, {(W - L - R) / 2 + L - 40, H - 16}, cv::FONT_HERSHEY_SIMPLEX,
                0.45, axis, 1, cv::LINE_AA);
    cv::putText(canvas, y_label, {10, T - 18}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1,
                cv::LINE_AA);

    if (!png_path.parent_path().empty()) fs::create_directories(png_path.parent_path());
    std::vector<uint8_t> encoded;
    if (!cv::imencode(".png", canvas, encoded))
        throw IoError("failed to encode chart: " + png_path.string());
    std::ofstream out(png_path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(encoded.data()),
              static_cast<std::streamsize>(encoded.size()));
    if (!out) throw IoError("failed to write chart: " + png_path.string());
}

std::string format_table_markdown(const std::vector<std::string>& columns,
                                  const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream out;
    out << "|";
    for (const auto& c : columns) out << " " << c << " |";
    out << "\n|";
    for (std::size_t i = 0; i < columns.size(); ++i) out << " --- |";
    out << "\n";
    for (const auto& row : rows) {
        out << "|";
        for (const auto& cell : row) out << " " << cell << " |";
        out << "\n";
    }
    return out.str();
}

std::string format_table_csv(const std::vector<std::string>& columns,
                             const std::vector<std::vector<std::string>>& rows) {
    const auto escape = [](const std::string& cell) {
        if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
        std::string quoted = "\"";
        for (char c : cell) {
            if (c == '"') quoted += "\"\"";
            else quoted += c;
        }
        return quoted + "\"";
    };
    std::ostringstream out;
    for (std::size_t i = 0; i < columns.size(); ++i)
        out << (i ? "," : "") << escape(columns[i]);
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << escape(row[i]);
        out << "\n";
    }
    return out.str();
}

std::string format_score(double value) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(1);
    out << value;
    return out.str();
}

}  // namespace coa::report
