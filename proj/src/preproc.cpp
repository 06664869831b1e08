#include "covit/preproc.hpp"

#include "covit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

namespace covit {
namespace {

// Minimum gap between the mean intensities of the two Otsu classes inside
// the body before a dark class is treated as lung.
constexpr double kMinLungContrast = 30.0;

Mask threshold_above(const GrayImage& img, std::uint8_t t) {
    Mask m(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] > t ? 1 : 0;
    return m;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Mask body_mask(const CtSlice& slice) {
    const GrayImage& img = slice.image;
    const std::uint8_t t = imaging::otsu_threshold(img.pixels);
    const Mask fg = threshold_above(img, t);
    const Mask largest = imaging::largest_component(fg, imaging::Connectivity::eight);
    if (largest.empty()) return largest;
    return imaging::fill_holes(largest);
}

LungMask lung_mask(const CtSlice& slice, const Mask& body, int closing_radius) {
    const GrayImage& img = slice.image;
    if (body.width != img.width || body.height != img.height) throw ShapeError("lung_mask: body mask size differs from slice");
    LungMask out{Mask(img.width, img.height), 0.0};
    std::vector<std::uint8_t> inside;
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        if (body.bits[i]) inside.push_back(img.pixels[i]);
    if (inside.empty()) return out;

    const std::uint8_t t = imaging::otsu_threshold(inside);
    double lo_sum = 0, hi_sum = 0, lo_n = 0, hi_n = 0;
    for (std::uint8_t v : inside) {
        if (v <= t) {
            lo_sum += v;
            lo_n += 1;
        } else {
            hi_sum += v;
            hi_n += 1;
        }
    }
    if (lo_n == 0 || hi_n == 0 || hi_sum / hi_n - lo_sum / lo_n < kMinLungContrast) return out;

    Mask dark(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) dark.bits[i] = (body.bits[i] && img.pixels[i] <= t) ? 1 : 0;

    const auto cc = imaging::label_components(dark, imaging::Connectivity::eight);
    // Components touching the body boundary (or the image edge) are not lungs.
    std::vector<bool> touches(cc.sizes.size(), false);
    const std::size_t w = img.width, h = img.height;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::int32_t id = cc.labels[y * w + x];
            if (id == 0) continue;
            const bool edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h || !body.at(x - 1, y) || !body.at(x + 1, y) ||
                              !body.at(x, y - 1) || !body.at(x, y + 1);
            if (edge) touches[id - 1] = true;
        }
    const std::size_t min_size = std::max<std::size_t>(16, img.pixels.size() / 1000);
    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < cc.sizes.size(); ++k)
        if (!touches[k] && cc.sizes[k] >= min_size) candidates.push_back(k);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return cc.sizes[a] > cc.sizes[b]; });
    if (candidates.size() > 2) candidates.resize(2);
    if (candidates.empty()) return out;

    Mask lungs(w, h);
    for (std::size_t i = 0; i < lungs.bits.size(); ++i) {
        const std::int32_t id = cc.labels[i];
        if (id != 0 && std::find(candidates.begin(), candidates.end(), static_cast<std::size_t>(id - 1)) != candidates.end())
            lungs.bits[i] = 1;
    }
    lungs = imaging::fill_holes(imaging::close(lungs, closing_radius));
    out.mask = imaging::mask_and(lungs, body);
    out.lung_fraction = out.mask.fraction();
    return out;
}

FilterResult filter_slices(std::span<const LungMask> masks, double min_lung_fraction) {
    FilterResult out;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        SliceDecision d{i, masks[i].lung_fraction >= min_lung_fraction, masks[i].lung_fraction, {}};
        if (d.kept) {
            out.kept.push_back(i);
        } else {
            char buf[96];
            std::snprintf(buf, sizeof buf, "lung fraction %.4f below %.4f", d.lung_fraction, min_lung_fraction);
            d.reason = buf;
        }
        out.decisions.push_back(std::move(d));
    }
    out.flagged = out.kept.empty();
    return out;
}

RoiTransform roi_transform(std::span<const LungMask> masks, std::size_t margin) {
    if (masks.empty()) throw DataError("crop_to_roi: no slices");
    const std::size_t w = masks.front().mask.width, h = masks.front().mask.height;
    Box u{w, h, 0, 0};
    bool any = false;
    for (const LungMask& m : masks) {
        if (m.mask.width != w || m.mask.height != h) throw ShapeError("crop_to_roi: slices of one subject differ in size");
        const Box b = imaging::bounding_box(m.mask);
        if (b.empty()) continue;
        any = true;
        u.x0 = std::min(u.x0, b.x0);
        u.y0 = std::min(u.y0, b.y0);
        u.x1 = std::max(u.x1, b.x1);
        u.y1 = std::max(u.y1, b.y1);
    }
    if (!any) throw DataError("crop_to_roi: union of lung masks is empty");

    RoiTransform t;
    t.box = Box{u.x0 > margin ? u.x0 - margin : 0, u.y0 > margin ? u.y0 - margin : 0, std::min(w, u.x1 + margin),
                std::min(h, u.y1 + margin)};
    const std::size_t bw = t.box.width(), bh = t.box.height();
    if (bw <= kCropWidth && bh <= kCropHeight) {
        t.scale = 1.0;
        t.placed_width = bw;
        t.placed_height = bh;
    } else {
        t.scale = std::min(static_cast<double>(kCropWidth) / static_cast<double>(bw),
                           static_cast<double>(kCropHeight) / static_cast<double>(bh));
        t.placed_width = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(bw * t.scale)), 1, kCropWidth);
        t.placed_height = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(bh * t.scale)), 1, kCropHeight);
    }
    t.offset_x = (kCropWidth - t.placed_width) / 2;
    t.offset_y = (kCropHeight - t.placed_height) / 2;
    return t;
}

GrayImage apply_roi(const GrayImage& image, const RoiTransform& t) {
    if (t.box.x1 > image.width || t.box.y1 > image.height) throw ShapeError("apply_roi: box outside image");
    GrayImage canvas(kCropWidth, kCropHeight, 0);
    const std::size_t bw = t.box.width(), bh = t.box.height();
    if (t.placed_width == bw && t.placed_height == bh) {
        for (std::size_t y = 0; y < bh; ++y)
            for (std::size_t x = 0; x < bw; ++x) canvas.at(t.offset_x + x, t.offset_y + y) = image.at(t.box.x0 + x, t.box.y0 + y);
        return canvas;
    }
    std::vector<double> region(bw * bh);
    for (std::size_t y = 0; y < bh; ++y)
        for (std::size_t x = 0; x < bw; ++x) region[y * bw + x] = image.at(t.box.x0 + x, t.box.y0 + y);
    const auto scaled = imaging::resize_bilinear(region, bw, bh, t.placed_width, t.placed_height);
    for (std::size_t y = 0; y < t.placed_height; ++y)
        for (std::size_t x = 0; x < t.placed_width; ++x)
            canvas.at(t.offset_x + x, t.offset_y + y) = to_byte(scaled[y * t.placed_width + x]);
    return canvas;
}

CropResult crop_to_roi(std::span<const CtSlice> slices, std::span<const LungMask> masks, std::size_t margin) {
    if (slices.size() != masks.size()) throw DataError("crop_to_roi: slice and mask counts differ");
    CropResult out;
    out.transform = roi_transform(masks, margin);
    out.crops.reserve(slices.size());
    for (const CtSlice& s : slices) out.crops.push_back(apply_roi(s.image, out.transform));
    return out;
}

FloatImage resize_normalize(const GrayImage& crop) {
    if (crop.width != kCropWidth || crop.height != kCropHeight)
        throw ShapeError("resize_normalize expects a 440x360 crop");
    std::vector<double> src(crop.pixels.begin(), crop.pixels.end());
    FloatImage out;
    out.width = kModelSide;
    out.height = kModelSide;
    out.values = imaging::resize_bilinear(src, crop.width, crop.height, kModelSide, kModelSide);
    for (double& v : out.values) v = std::clamp(v / 255.0, 0.0, 1.0);
    return out;
}

SubjectPreprocessResult preprocess_subject(std::span<const CtSlice> slices, const PreprocConfig& config, unsigned threads) {
    SubjectPreprocessResult out;
    if (slices.empty()) {
        out.flagged = true;
        return out;
    }
    std::vector<LungMask> masks(slices.size());
    const std::size_t n_workers = std::clamp<std::size_t>(threads, 1, slices.size());
    std::vector<std::exception_ptr> errors(n_workers);
    auto work = [&](std::size_t begin) {
        try {
            for (std::size_t i = begin; i < slices.size(); i += n_workers)
                masks[i] = lung_mask(slices[i], body_mask(slices[i]), config.closing_radius);
        } catch (...) {
            errors[begin] = std::current_exception();
        }
    };
    if (n_workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(work, t);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    FilterResult filtered = filter_slices(masks, config.min_lung_fraction);
    out.decisions = std::move(filtered.decisions);
    out.flagged = filtered.flagged;
    if (out.flagged) return out;

    std::vector<CtSlice> kept_slices;
    std::vector<LungMask> kept_masks;
    for (std::size_t i : filtered.kept) {
        kept_slices.push_back(slices[i]);
        kept_masks.push_back(masks[i]);
    }
    CropResult crops = crop_to_roi(kept_slices, kept_masks, config.roi_margin_px);
    out.transform = crops.transform;
    for (std::size_t k = 0; k < crops.crops.size(); ++k) {
        PreprocessedSlice ps;
        ps.source_index = kept_slices[k].source_index;
        ps.model = resize_normalize(crops.crops[k]);
        ps.crop = std::move(crops.crops[k]);
        out.slices.push_back(std::move(ps));
    }
    return out;
}

}  // namespace covit
