#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coa/image.hpp"
#include "json.hpp"

namespace coa::io {

// PNG or JPEG in, [0,1] doubles out (RGB channel order; alpha dropped).
ImageTensor load_image(const std::filesystem::path& path);

// 8-bit PNG, round-to-nearest quantization. 1- or 3-channel tensors.
void save_png(const std::filesystem::path& path, const ImageTensor& image);

// All writes go through a temp file + rename so readers never observe a
// partial file.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);
void atomic_write_json(const std::filesystem::path& path, const nlohmann::json& value);

std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

// One JSON object per line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void atomic_write_jsonl(const std::filesystem::path& path,
                        const std::vector<nlohmann::json>& lines);

}  // namespace coa::io
