#include "covit/volume_builder.hpp"

#include "covit/error.hpp"

namespace covit {

std::vector<std::vector<std::size_t>> subvolume_indices(std::size_t depth) {
    if (depth == 0) throw DataError("build_subvolumes: subject has no slices");
    std::vector<std::vector<std::size_t>> out;
    const std::size_t stride = depth / kVolumeDepth;
    if (stride == 0) {
        std::vector<std::size_t> idx(kVolumeDepth);
        for (std::size_t i = 0; i < kVolumeDepth; ++i) idx[i] = i * depth / kVolumeDepth;
        out.push_back(std::move(idx));
        return out;
    }
    for (std::size_t k = 0; k < stride; ++k) {
        std::vector<std::size_t> idx(kVolumeDepth);
        for (std::size_t i = 0; i < kVolumeDepth; ++i) idx[i] = k + i * stride;
        out.push_back(std::move(idx));
    }
    return out;
}

std::vector<SubVolume> build_subvolumes(const std::string& subject_id, std::span<const FloatImage> slices) {
    const auto plans = subvolume_indices(slices.size());
    const std::size_t w = slices.front().width, h = slices.front().height;
    for (const FloatImage& s : slices)
        if (s.width != w || s.height != h || s.values.size() != w * h)
            throw DataError("build_subvolumes: slices of subject " + subject_id + " differ in size");
    std::vector<SubVolume> out;
    for (const auto& plan : plans) {
        SubVolume v;
        v.subject_id = subject_id;
        v.slice_indices = plan;
        v.repeated = slices.size() < kVolumeDepth;
        v.width = w;
        v.height = h;
        v.voxels.reserve(kVolumeDepth * w * h);
        for (std::size_t idx : plan) v.voxels.insert(v.voxels.end(), slices[idx].values.begin(), slices[idx].values.end());
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace covit
