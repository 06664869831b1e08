#pragma once

// Fixed-depth sub-volumes from a subject's kept slices by interleaved even
// sampling: with stride s = D / 32, sub-volume k takes k, k+s, ..., k+31s.
// Subjects with fewer than 32 slices get one volume built from
// floor(i * D / 32), so slices repeat.

#include "covit/imaging.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace covit {

inline constexpr std::size_t kVolumeDepth = 32;

// Index lists only; element k lists the kept-slice positions of sub-volume k.
std::vector<std::vector<std::size_t>> subvolume_indices(std::size_t depth);

struct SubVolume {
    std::string subject_id;
    std::vector<std::size_t> slice_indices;  // kVolumeDepth entries
    bool repeated = false;                   // built from fewer than 32 slices
    std::size_t width = 0, height = 0;
    std::vector<double> voxels;  // slice-major, kVolumeDepth * height * width
};

// Throws DataError on an empty list or slices of differing size.
std::vector<SubVolume> build_subvolumes(const std::string& subject_id, std::span<const FloatImage> slices);

}  // namespace covit
