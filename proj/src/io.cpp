#include "coa/io.hpp"

#include <cmath>
#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "coa/errors.hpp"

namespace coa::io {

namespace fs = std::filesystem;

ImageTensor load_image(const fs::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw IoError("failed to read image: " + path.string());
    if (mat.depth() != CV_8U)
        throw IoError("unsupported bit depth (expected 8-bit): " + path.string());

    const int channels = mat.channels() == 4 ? 3 : mat.channels();
    if (channels != 1 && channels != 3)
        throw IoError("unsupported channel count: " + path.string());

    std::vector<double> px(static_cast<std::size_t>(mat.rows) * mat.cols * channels);
    for (int y = 0; y < mat.rows; ++y) {
        for (int x = 0; x < mat.cols; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * mat.cols + x) * channels;
            if (mat.channels() == 1) {
                px[base] = mat.at<uint8_t>(y, x) / 255.0;
            } else {
                const auto* p = mat.ptr<uint8_t>(y) + static_cast<std::size_t>(x) * mat.channels();
                // OpenCV stores BGR(A); tensors are RGB.
                px[base + 0] = p[2] / 255.0;
                px[base + 1] = p[1] / 255.0;
                px[base + 2] = p[0] / 255.0;
            }
        }
    }
    return ImageTensor(mat.rows, mat.cols, channels, std::move(px));
}

void save_png(const fs::path& path, const ImageTensor& image) {
    const int channels = image.channels();
    if (channels != 1 && channels != 3)
        throw IoError("save_png supports 1- or 3-channel images");

    cv::Mat mat(image.height(), image.width(), channels == 1 ? CV_8UC1 : CV_8UC3);
    const auto px = image.pixels();
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * image.width() + x) * channels;
            auto quantize = [&](int c) {
                return static_cast<uint8_t>(std::lround(px[base + c] * 255.0));
            };
            if (channels == 1) {
                mat.at<uint8_t>(y, x) = quantize(0);
            } else {
                auto* p = mat.ptr<uint8_t>(y) + static_cast<std::size_t>(x) * 3;
                p[0] = quantize(2);
                p[1] = quantize(1);
                p[2] = quantize(0);
            }
        }
    }

    std::vector<uint8_t> encoded;
    if (!cv::imencode(".png", mat, encoded))
        throw IoError("failed to encode PNG: " + path.string());
    atomic_write_text(path, std::string(encoded.begin(), encoded.end()));
}

void atomic_write_text(const fs::path& path, const std::string& content) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw IoError("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

void atomic_write_json(const fs::path& path, const nlohmann::json& value) {
    atomic_write_text(path, value.dump(2) + "\n");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<nlohmann::json> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            lines.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw IoError("invalid JSONL line in " + path.string() + ": " + e.what());
        }
    }
    return lines;
}

void atomic_write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& lines) {
    std::string content;
    for (const auto& obj : lines) {
        content += obj.dump();
        content += '\n';
    }
    atomic_write_text(path, content);
}

}  // namespace coa::io
