#include "covit/imaging.hpp"

#include "covit/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <tuple>

namespace covit {

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

double Mask::fraction() const { return bits.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits.size()); }

namespace imaging {
namespace {

void require_same_dims(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height) throw ShapeError("mask dimensions differ");
}

std::vector<std::pair<int, int>> disk_offsets(int radius) {
    std::vector<std::pair<int, int>> out;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) out.emplace_back(dx, dy);
    return out;
}

}  // namespace

std::uint8_t otsu_threshold(std::span<const std::uint8_t> values) {
    std::array<double, 256> hist{};
    for (std::uint8_t v : values) hist[v] += 1.0;
    const double total = static_cast<double>(values.size());
    if (total == 0.0) return 0;
    std::size_t distinct = 0;
    std::uint8_t only = 0;
    for (std::size_t i = 0; i < 256; ++i)
        if (hist[i] > 0) {
            ++distinct;
            only = static_cast<std::uint8_t>(i);
        }
    if (distinct == 1) return only;

    double sum_all = 0.0;
    for (std::size_t i = 0; i < 256; ++i) sum_all += static_cast<double>(i) * hist[i];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    std::uint8_t best_t = 0;
    for (std::size_t t = 0; t < 255; ++t) {
        w0 += hist[t];
        sum0 += static_cast<double>(t) * hist[t];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_t = static_cast<std::uint8_t>(t);
        }
    }
    return best_t;
}

Components label_components(const Mask& mask, Connectivity conn) {
    const auto w = static_cast<std::ptrdiff_t>(mask.width);
    const auto h = static_cast<std::ptrdiff_t>(mask.height);
    Components out;
    out.labels.assign(mask.bits.size(), 0);
    std::vector<std::ptrdiff_t> stack;
    const std::array<std::pair<int, int>, 8> nb{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
    const std::size_t n_nb = conn == Connectivity::eight ? 8 : 4;
    std::int32_t next = 0;
    for (std::ptrdiff_t start = 0; start < w * h; ++start) {
        if (!mask.bits[start] || out.labels[start] != 0) continue;
        ++next;
        std::size_t size = 0;
        out.labels[start] = next;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::ptrdiff_t p = stack.back();
            stack.pop_back();
            ++size;
            const std::ptrdiff_t x = p % w, y = p / w;
            for (std::size_t k = 0; k < n_nb; ++k) {
                const std::ptrdiff_t nx = x + nb[k].first, ny = y + nb[k].second;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::ptrdiff_t q = ny * w + nx;
                if (mask.bits[q] && out.labels[q] == 0) {
                    out.labels[q] = next;
                    stack.push_back(q);
                }
            }
        }
        out.sizes.push_back(size);
    }
    return out;
}

Mask largest_component(const Mask& mask, Connectivity conn) {
    Mask out(mask.width, mask.height);
    const Components cc = label_components(mask, conn);
    if (cc.sizes.empty()) return out;
    const auto best = static_cast<std::int32_t>(std::max_element(cc.sizes.begin(), cc.sizes.end()) - cc.sizes.begin()) + 1;
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = cc.labels[i] == best ? 1 : 0;
    return out;
}

Mask fill_holes(const Mask& mask) {
    const std::size_t w = mask.width, h = mask.height;
    std::vector<std::uint8_t> outside(w * h, 0);
    std::vector<std::size_t> stack;
    auto seed = [&](std::size_t x, std::size_t y) {
        const std::size_t p = y * w + x;
        if (!mask.bits[p] && !outside[p]) {
            outside[p] = 1;
            stack.push_back(p);
        }
    };
    for (std::size_t x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (std::size_t y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        const std::size_t x = p % w, y = p / w;
        if (x > 0) seed(x - 1, y);
        if (x + 1 < w) seed(x + 1, y);
        if (y > 0) seed(x, y - 1);
        if (y + 1 < h) seed(x, y + 1);
    }
    Mask out(w, h);
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = outside[i] ? 0 : 1;
    return out;
}

Mask dilate(const Mask& mask, int radius) {
    const auto offsets = disk_offsets(radius);
    const auto w = static_cast<std::ptrdiff_t>(mask.width);
    const auto h = static_cast<std::ptrdiff_t>(mask.height);
    Mask out(mask.width, mask.height);
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            if (!mask.bits[y * w + x]) continue;
            for (auto [dx, dy] : offsets) {
                const std::ptrdiff_t nx = x + dx, ny = y + dy;
                if (nx >= 0 && ny >= 0 && nx < w && ny < h) out.bits[ny * w + nx] = 1;
            }
        }
    return out;
}

Mask erode(const Mask& mask, int radius) {
    const auto offsets = disk_offsets(radius);
    const auto w = static_cast<std::ptrdiff_t>(mask.width);
    const auto h = static_cast<std::ptrdiff_t>(mask.height);
    Mask out(mask.width, mask.height);
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            if (!mask.bits[y * w + x]) continue;
            bool keep = true;
            for (auto [dx, dy] : offsets) {
                const std::ptrdiff_t nx = x + dx, ny = y + dy;
                if (nx >= 0 && ny >= 0 && nx < w && ny < h && !mask.bits[ny * w + nx]) {
                    keep = false;
                    break;
                }
            }
            out.bits[y * w + x] = keep ? 1 : 0;
        }
    return out;
}

Mask close(const Mask& mask, int radius) { return erode(dilate(mask, radius), radius); }

Mask mask_and(const Mask& a, const Mask& b) {
    require_same_dims(a, b);
    Mask out(a.width, a.height);
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = (a.bits[i] && b.bits[i]) ? 1 : 0;
    return out;
}

Mask mask_or(const Mask& a, const Mask& b) {
    require_same_dims(a, b);
    Mask out(a.width, a.height);
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = (a.bits[i] || b.bits[i]) ? 1 : 0;
    return out;
}

bool is_subset(const Mask& inner, const Mask& outer) {
    require_same_dims(inner, outer);
    for (std::size_t i = 0; i < inner.bits.size(); ++i)
        if (inner.bits[i] && !outer.bits[i]) return false;
    return true;
}

double dice(const Mask& a, const Mask& b) {
    require_same_dims(a, b);
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        na += a.bits[i] ? 1 : 0;
        nb += b.bits[i] ? 1 : 0;
        inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

Box bounding_box(const Mask& mask) {
    Box box{mask.width, mask.height, 0, 0};
    bool any = false;
    for (std::size_t y = 0; y < mask.height; ++y)
        for (std::size_t x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) {
                any = true;
                box.x0 = std::min(box.x0, x);
                box.y0 = std::min(box.y0, y);
                box.x1 = std::max(box.x1, x + 1);
                box.y1 = std::max(box.y1, y + 1);
            }
    return any ? box : Box{};
}

std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_w, std::size_t src_h,
                                    std::size_t out_w, std::size_t out_h) {
    if (src_w == 0 || src_h == 0 || out_w == 0 || out_h == 0) throw ShapeError("resize_bilinear: empty image");
    if (src.size() != src_w * src_h) throw ShapeError("resize_bilinear: buffer does not match dimensions");
    const double sx = static_cast<double>(src_w) / static_cast<double>(out_w);
    const double sy = static_cast<double>(src_h) / static_cast<double>(out_h);
    // Per-axis source indices and weights.
    auto axis = [](std::size_t n_out, std::size_t n_src, double s) {
        std::vector<std::size_t> i0(n_out), i1(n_out);
        std::vector<double> frac(n_out);
        const double hi = static_cast<double>(n_src - 1);
        for (std::size_t o = 0; o < n_out; ++o) {
            const double c = std::clamp((static_cast<double>(o) + 0.5) * s - 0.5, 0.0, hi);
            const double f = std::floor(c);
            i0[o] = static_cast<std::size_t>(f);
            i1[o] = std::min(i0[o] + 1, n_src - 1);
            frac[o] = c - f;
        }
        return std::tuple{i0, i1, frac};
    };
    const auto [x0, x1, fx] = axis(out_w, src_w, sx);
    const auto [y0, y1, fy] = axis(out_h, src_h, sy);
    std::vector<double> out(out_w * out_h);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double* r0 = src.data() + y0[y] * src_w;
        const double* r1 = src.data() + y1[y] * src_w;
        for (std::size_t x = 0; x < out_w; ++x) {
            const double top = r0[x0[x]] + (r0[x1[x]] - r0[x0[x]]) * fx[x];
            const double bot = r1[x0[x]] + (r1[x1[x]] - r1[x0[x]]) * fx[x];
            out[y * out_w + x] = top + (bot - top) * fy[y];
        }
    }
    return out;
}

FloatImage resize_bilinear(const FloatImage& src, std::size_t out_w, std::size_t out_h) {
    FloatImage out;
    out.width = out_w;
    out.height = out_h;
    out.values = resize_bilinear(src.values, src.width, src.height, out_w, out_h);
    return out;
}

}  // namespace imaging
}  // namespace covit
