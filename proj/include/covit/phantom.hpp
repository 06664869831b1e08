#pragma once

// Deterministic CT-like phantoms: an elliptical body on a dark background,
// two lung ellipses, a heart blob between them, optional scanner bed and
// border artifact, Gaussian noise. COVID subjects carry bright blobs inside
// the lungs on every lung-bearing slice; nonCOVID subjects carry similar
// blobs in soft tissue outside the lungs.

#include "covit/dataset_io.hpp"
#include "covit/preproc.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace covit {

struct PhantomSpec {
    std::uint64_t seed = 0;
    std::size_t image_size = 512;
    std::size_t n_slices = 10;
    std::size_t lungless_leading = 3;
    std::size_t lesion_count = 0;  // per lung-bearing slice; > 0 makes the subject COVID
    double lesion_radius_min = 0.04;  // fraction of image_size
    double lesion_radius_max = 0.06;
    double lesion_intensity_min = 100.0;  // peak added to the lung background
    double lesion_intensity_max = 140.0;
    std::size_t distractor_count = 2;  // nonCOVID only, outside the lungs
    bool heart = true;
    bool bed = true;
    bool border_artifact = false;
    double noise_sigma = 3.0;

    Label label() const { return lesion_count > 0 ? Label::covid : Label::noncovid; }
};

// Ground truth for one slice.
struct PhantomTruth {
    Mask body;    // body ellipse, lungs included
    Mask lung;    // union of lung ellipses (lesions included)
    Mask lesion;  // lesion disks
    Mask heart;
};

struct PhantomSubject {
    Label label = Label::noncovid;
    std::vector<CtSlice> slices;
    std::vector<PhantomTruth> truth;
};

// Throws DataError when the geometry cannot be satisfied.
PhantomSubject render_subject(const PhantomSpec& spec);

// Sidecar encoding: 0 outside, 85 body, 170 lung, 255 lesion.
GrayImage encode_truth(const PhantomTruth& truth);
PhantomTruth decode_truth(const GrayImage& sidecar);

// Writes `<dir>/slice<NNN>.pgm` plus `slice<NNN>.mask.pgm` sidecars.
PhantomSubject generate_subject(const PhantomSpec& spec, const std::filesystem::path& dir);

struct DatasetSummary {
    std::vector<std::pair<std::string, Label>> subjects;
};

// `<root>/<split>/subj_NNNN/` directories plus `labels.csv`. Labels are
// assigned to ids by a seeded shuffle; `base` supplies everything except
// seed and lesion count.
DatasetSummary generate_dataset(const std::filesystem::path& root, std::size_t n_covid, std::size_t n_noncovid,
                                std::uint64_t seed, Split split = Split::train, const PhantomSpec& base = {},
                                std::size_t covid_lesions = 3);

}  // namespace covit
