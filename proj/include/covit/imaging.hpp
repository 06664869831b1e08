#pragma once

// Small 2D raster toolkit used by the preprocessing stage and the phantom
// generator: 8-bit images, binary masks, Otsu thresholding, connected
// components, hole filling, disk morphology and bilinear resampling.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace covit {

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct FloatImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;

    FloatImage() = default;
    FloatImage(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), values(w * h, fill) {}

    double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
    double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

    friend bool operator==(const FloatImage&, const FloatImage&) = default;
};

// Binary mask; each byte is 0 or 1.
struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}

    bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
    void set(std::size_t x, std::size_t y, bool v = true) { bits[y * width + x] = v ? 1 : 0; }
    std::size_t count() const;
    double fraction() const;
    bool empty() const { return count() == 0; }

    friend bool operator==(const Mask&, const Mask&) = default;
};

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Box {
    std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    std::size_t width() const { return x1 - x0; }
    std::size_t height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }

    friend bool operator==(const Box&, const Box&) = default;
};

namespace imaging {

enum class Connectivity { four, eight };

// Threshold t maximizing between-class variance for classes {<= t} and {> t}.
// A constant histogram returns its single value.
std::uint8_t otsu_threshold(std::span<const std::uint8_t> values);

struct Components {
    std::vector<std::int32_t> labels;  // 0 = background, 1..n component ids
    std::vector<std::size_t> sizes;    // sizes[id - 1]
};

Components label_components(const Mask& mask, Connectivity conn);

// Empty mask when the input is empty. Ties resolve to the lowest label
// (first component in raster order).
Mask largest_component(const Mask& mask, Connectivity conn = Connectivity::eight);

// Sets background regions not 4-connected to the image border.
Mask fill_holes(const Mask& mask);

Mask dilate(const Mask& mask, int radius);
// Pixels outside the image count as foreground, so closing is extensive.
Mask erode(const Mask& mask, int radius);
Mask close(const Mask& mask, int radius);

Mask mask_and(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);
bool is_subset(const Mask& inner, const Mask& outer);
double dice(const Mask& a, const Mask& b);
// Empty box for an empty mask.
Box bounding_box(const Mask& mask);

// Bilinear resampling with half-pixel centers and edge clamping.
std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_w, std::size_t src_h,
                                    std::size_t out_w, std::size_t out_h);
FloatImage resize_bilinear(const FloatImage& src, std::size_t out_w, std::size_t out_h);

}  // namespace imaging
}  // namespace covit
