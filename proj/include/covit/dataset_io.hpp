#pragma once

// On-disk formats: subject directories of binary PGM slices with a labels
// CSV per split, and the two-file volume container (<stem>.hdr text header
// plus <stem>.img raw little-endian payload).

#include "covit/imaging.hpp"
#include "covit/preproc.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace covit {

namespace fs = std::filesystem;

enum class Label { noncovid = 0, covid = 1, unknown = 2 };
enum class Split { train, validation, test };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct SubjectRecord {
    std::string subject_id;
    Label label = Label::unknown;
    std::vector<fs::path> slice_paths;  // sorted by the integer in the file name
    Split split = Split::train;
};

// `subject_id,label` rows, label in {0,1}, no header. Blank lines are
// skipped; duplicates and malformed rows throw FormatError.
std::map<std::string, Label> read_labels(const fs::path& path);
void write_labels(const fs::path& path, const std::vector<std::pair<std::string, Label>>& rows);

// Last run of digits in the file stem; throws DataError if there is none.
std::size_t slice_index_from_name(const fs::path& path);

// One record per subdirectory of `split_dir`, sorted by subject id. Slice
// files are `*.pgm` excluding `*.mask.pgm` sidecars. A missing labels file
// is treated as empty.
std::vector<SubjectRecord> scan_dataset(const fs::path& split_dir, const fs::path& labels_file, Split split);

// `<root>/<split>` with `<root>/<split>/labels.csv`.
std::vector<SubjectRecord> scan_split(const fs::path& root, Split split);

// Binary PGM (P5, maxval 255).
CtSlice read_slice(const fs::path& path);
void write_slice(const fs::path& path, const GrayImage& image);

enum class VolumeDType { f32, u8 };

struct VolumeContainer {
    std::size_t depth = 0, height = 0, width = 0;
    std::variant<std::vector<float>, std::vector<std::uint8_t>> payload;

    VolumeDType dtype() const;
    std::size_t voxel_count() const { return depth * height * width; }

    friend bool operator==(const VolumeContainer&, const VolumeContainer&) = default;
};

std::string volume_header_text(const VolumeContainer& volume);

// Writes `<stem>.hdr` and `<stem>.img`.
void write_volume(const fs::path& stem, const VolumeContainer& volume);
VolumeContainer read_volume(const fs::path& stem);

// Little-endian raw helpers shared with the checkpoint format.
void append_le(std::string& out, double value);
void append_le(std::string& out, float value);
double read_le_f64(const char* bytes);
float read_le_f32(const char* bytes);

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view bytes);

}  // namespace covit
