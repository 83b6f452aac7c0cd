// Regenerates the committed desk-scale fixture: ten clean images with mild
// seeded structure plus a ten-caption pool. Deterministic, so the checked-in
// files can always be reproduced bit for bit.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <vector>

#include "coa/image.hpp"
#include "coa/io.hpp"
#include "coa/rng.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kCount = 10;
constexpr int kSize = 64;

// Smooth low-frequency blobs plus pixel noise, kept well inside [0.1, 0.9].
coa::ImageTensor make_clean_image(int index) {
    const uint64_t seed = coa::splitmix64(0xf1c7u + static_cast<uint64_t>(index));
    const double cx = 8.0 + 48.0 * coa::unit_double(coa::splitmix64(seed ^ 1));
    const double cy = 8.0 + 48.0 * coa::unit_double(coa::splitmix64(seed ^ 2));
    const double freq = 0.05 + 0.15 * coa::unit_double(coa::splitmix64(seed ^ 3));
    const double phase = 6.28 * coa::unit_double(coa::splitmix64(seed ^ 4));

    std::vector<double> px(static_cast<std::size_t>(kSize) * kSize * 3);
    std::size_t i = 0;
    for (int y = 0; y < kSize; ++y) {
        for (int x = 0; x < kSize; ++x) {
            const double r = std::hypot(x - cx, y - cy);
            const double blob = 0.25 * std::exp(-r * r / 300.0);
            const double wave = 0.12 * std::sin(freq * (x + 2 * y) + phase);
            for (int c = 0; c < 3; ++c) {
                const double tint = 0.05 * c * std::sin(0.1 * x + c);
                const double noise = coa::uniform_at(seed, i, -0.05, 0.05);
                px[i++] = std::clamp(0.5 + blob + wave + tint + noise, 0.1, 0.9);
            }
        }
    }
    return coa::ImageTensor(kSize, kSize, 3, std::move(px));
}

const char* kCaptions[kCount] = {
    "a bird perched on a branch in the park",
    "two young boys playing baseball on a field",
    "a bunch of people celebrating around a birthday cake",
    "a little girl taking a tennis lesson",
    "a close up of a vase with flowers",
    "a group of chickens foraging in a grassy enclosure",
    "a red truck parked beside an old barn",
    "a surfer riding a large wave at the beach",
    "a plate of pasta with tomato sauce on a table",
    "a cat sleeping on a sunny windowsill",
};

}  // namespace

int main(int argc, char** argv) {
    const fs::path out_dir = argc > 1 ? argv[1] : "data/fixture";
    fs::create_directories(out_dir / "images");

    for (int i = 0; i < kCount; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%03d.png", i);
        coa::io::save_png(out_dir / "images" / name, make_clean_image(i));
    }

    std::string pool;
    for (const char* caption : kCaptions) {
        pool += caption;
        pool += '\n';
    }
    coa::io::atomic_write_text(out_dir / "captions.txt", pool);

    std::cout << "fixture written to " << out_dir.string() << "\n";
    return 0;
}
