#pragma once

// Directory-level stages that connect the modules: raw subjects ->
// processed subjects -> fixed-depth volumes -> model samples.
//
// Processed split layout (`<out>/<split>/`):
//   labels.csv                 copied from the raw split
//   subjects.csv               subject_id,label,status,n_kept
//   slices.csv                 subject_id,source_index,kept,lung_fraction,reason
//   <subject>.hdr/.img         kept model-stage slices, f32, D x 224 x 224
//   crops/<subject>/slice<NNN>.pgm   440x360 crop stage
//
// Volume split layout:
//   labels.csv
//   volumes.csv                volume_id,subject_id,volume_index,repeated,slice_indices
//   <volume_id>.hdr/.img       f32, 32 x 224 x 224

#include "covit/dataset_io.hpp"
#include "covit/preproc.hpp"
#include "covit/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace covit {

struct PreprocessSummary {
    std::size_t subjects = 0;
    std::size_t flagged = 0;
    std::size_t slices_in = 0;
    std::size_t slices_kept = 0;
};

PreprocessSummary preprocess_split(const fs::path& raw_root, Split split, const fs::path& out_root,
                                   const PreprocConfig& config, unsigned threads);

struct VolumeSummary {
    std::size_t subjects = 0;
    std::size_t volumes = 0;
    std::size_t repeated = 0;
};

VolumeSummary build_volumes_split(const fs::path& processed_root, Split split, const fs::path& out_root);

// One sample per kept slice (vit2d) or per volume (vit3d). `slice_index` is
// the source slice index for 2D and the volume index for 3D. Subjects
// without a label get label -1 unless `require_labels` is set, in which
// case they are an error.
std::vector<Sample> load_samples(const fs::path& root, Split split, const ModelConfig& model, bool require_labels);

}  // namespace covit
