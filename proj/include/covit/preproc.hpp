#pragma once

// CT slice preparation: body and lung masking, low-lung slice removal,
// subject-wide ROI crop onto a 440x360 canvas, and the 224x224 model input.

#include "covit/imaging.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace covit {

inline constexpr std::size_t kCropWidth = 440;
inline constexpr std::size_t kCropHeight = 360;
inline constexpr std::size_t kModelSide = 224;

struct CtSlice {
    GrayImage image;
    std::size_t source_index = 0;  // position within the subject's original series
};

struct LungMask {
    Mask mask;
    double lung_fraction = 0.0;
};

struct PreprocConfig {
    double min_lung_fraction = 0.02;
    std::size_t roi_margin_px = 10;
    int closing_radius = 3;
};

// Largest connected bright region after an Otsu threshold, holes filled.
Mask body_mask(const CtSlice& slice);

// Up to two largest dark components strictly inside the body, closed and
// hole-filled, clipped to the body.
LungMask lung_mask(const CtSlice& slice, const Mask& body, int closing_radius = 3);

struct SliceDecision {
    std::size_t index = 0;  // position in the input list
    bool kept = false;
    double lung_fraction = 0.0;
    std::string reason;  // empty when kept
};

struct FilterResult {
    std::vector<std::size_t> kept;  // input positions, ascending
    std::vector<SliceDecision> decisions;
    bool flagged = false;  // every slice was dropped
};

FilterResult filter_slices(std::span<const LungMask> masks, double min_lung_fraction);

// Geometry shared by every slice of one subject.
struct RoiTransform {
    Box box;                 // source region after margin and clamping
    double scale = 1.0;      // < 1 only when the box exceeds the canvas
    std::size_t placed_width = 0;
    std::size_t placed_height = 0;
    std::size_t offset_x = 0;  // top-left of the placed region on the canvas
    std::size_t offset_y = 0;

    friend bool operator==(const RoiTransform&, const RoiTransform&) = default;
};

// Union of the masks' bounding boxes, grown by `margin` and clamped to the
// image. Throws DataError when the union is empty.
RoiTransform roi_transform(std::span<const LungMask> masks, std::size_t margin);

GrayImage apply_roi(const GrayImage& image, const RoiTransform& transform);

struct CropResult {
    RoiTransform transform;
    std::vector<GrayImage> crops;  // each kCropWidth x kCropHeight
};

CropResult crop_to_roi(std::span<const CtSlice> slices, std::span<const LungMask> masks, std::size_t margin);

// Bilinear 440x360 -> 224x224, scaled to [0, 1].
FloatImage resize_normalize(const GrayImage& crop);

struct PreprocessedSlice {
    std::size_t source_index = 0;
    GrayImage crop;
    FloatImage model;
};

struct SubjectPreprocessResult {
    std::vector<SliceDecision> decisions;
    bool flagged = false;
    std::optional<RoiTransform> transform;
    std::vector<PreprocessedSlice> slices;
};

// Full per-subject pipeline. Mask computation may use up to `threads`
// workers; the output does not depend on the thread count.
SubjectPreprocessResult preprocess_subject(std::span<const CtSlice> slices, const PreprocConfig& config,
                                           unsigned threads = 1);

}  // namespace covit
