#pragma once

#include <span>
#include <vector>

namespace coa {

// H x W x C pixel grid with values in [0, 1], row-major, channel-fastest.
// Immutable once constructed; every operation that changes pixels returns a
// new tensor.
class ImageTensor {
public:
    ImageTensor(int height, int width, int channels,
                std::vector<double> pixels);

    static ImageTensor zeros(int height, int width, int channels);
    // Fills from a generator f(flat_index) -> value in [0, 1].
    template <typename F>
    static ImageTensor generate(int height, int width, int channels, F&& f) {
        std::vector<double> px(static_cast<std::size_t>(height) * width * channels);
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = f(i);
        return ImageTensor(height, width, channels, std::move(px));
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return pixels_.size(); }

    std::span<const double> pixels() const { return pixels_; }
    double at(int y, int x, int c) const {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    bool same_shape(const ImageTensor& other) const {
        return height_ == other.height_ && width_ == other.width_ &&
               channels_ == other.channels_;
    }

private:
    int height_;
    int width_;
    int channels_;
    std::vector<double> pixels_;
};

struct TensorShape {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::size_t size() const {
        return static_cast<std::size_t>(height) * width * channels;
    }
    bool operator==(const TensorShape&) const = default;
};

inline TensorShape shape_of(const ImageTensor& image) {
    return {image.height(), image.width(), image.channels()};
}

}  // namespace coa
