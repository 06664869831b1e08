#include "covit/pipeline.hpp"

#include "covit/error.hpp"
#include "covit/volume_builder.hpp"

#include <cstdio>
#include <map>
#include <sstream>

namespace covit {

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::map<std::string, Label> labels_if_present(const fs::path& path) {
    return fs::exists(path) ? read_labels(path) : std::map<std::string, Label>{};
}

VolumeContainer to_container(std::size_t d, std::size_t h, std::size_t w, const std::vector<double>& values) {
    VolumeContainer v;
    v.depth = d;
    v.height = h;
    v.width = w;
    std::vector<float> f(values.begin(), values.end());
    v.payload = std::move(f);
    return v;
}

std::vector<double> as_doubles(const VolumeContainer& v) {
    const auto* f = std::get_if<std::vector<float>>(&v.payload);
    if (f == nullptr) throw FormatError("expected an f32 volume");
    return std::vector<double>(f->begin(), f->end());
}

}  // namespace

PreprocessSummary preprocess_split(const fs::path& raw_root, Split split, const fs::path& out_root,
                                   const PreprocConfig& config, unsigned threads) {
    const auto records = scan_split(raw_root, split);
    const fs::path out_dir = out_root / std::string(to_string(split));
    fs::create_directories(out_dir);
    const fs::path raw_labels = raw_root / std::string(to_string(split)) / "labels.csv";
    std::vector<std::pair<std::string, Label>> label_rows;
    for (const auto& r : records)
        if (r.label != Label::unknown) label_rows.emplace_back(r.subject_id, r.label);
    write_labels(out_dir / "labels.csv", label_rows);

    PreprocessSummary summary;
    std::string subjects_csv = "subject_id,label,status,n_kept\n";
    std::string slices_csv = "subject_id,source_index,kept,lung_fraction,reason\n";
    for (const auto& rec : records) {
        std::vector<CtSlice> slices;
        slices.reserve(rec.slice_paths.size());
        for (const auto& p : rec.slice_paths) {
            CtSlice s = read_slice(p);
            s.source_index = slice_index_from_name(p);
            slices.push_back(std::move(s));
        }
        const auto result = preprocess_subject(slices, config, threads);
        ++summary.subjects;
        summary.slices_in += slices.size();
        for (const auto& d : result.decisions) {
            char frac[32];
            std::snprintf(frac, sizeof frac, "%.6f", d.lung_fraction);
            slices_csv += rec.subject_id + "," + std::to_string(slices[d.index].source_index) + "," + (d.kept ? "1" : "0") +
                          "," + frac + "," + d.reason + "\n";
        }
        const std::string label = rec.label == Label::unknown ? "" : (rec.label == Label::covid ? "1" : "0");
        if (result.flagged) {
            ++summary.flagged;
            subjects_csv += rec.subject_id + "," + label + ",flagged,0\n";
            continue;
        }
        subjects_csv += rec.subject_id + "," + label + ",ok," + std::to_string(result.slices.size()) + "\n";
        summary.slices_kept += result.slices.size();

        std::vector<double> voxels;
        voxels.reserve(result.slices.size() * kModelSide * kModelSide);
        for (const auto& ps : result.slices) {
            voxels.insert(voxels.end(), ps.model.values.begin(), ps.model.values.end());
            char name[32];
            std::snprintf(name, sizeof name, "slice%03zu.pgm", ps.source_index);
            write_slice(out_dir / "crops" / rec.subject_id / name, ps.crop);
        }
        write_volume(out_dir / rec.subject_id, to_container(result.slices.size(), kModelSide, kModelSide, voxels));
    }
    write_file(out_dir / "subjects.csv", subjects_csv);
    write_file(out_dir / "slices.csv", slices_csv);
    return summary;
}

namespace {

struct ProcessedSubject {
    std::string subject_id;
    std::vector<std::size_t> source_indices;
};

std::vector<ProcessedSubject> read_processed_index(const fs::path& dir) {
    std::map<std::string, ProcessedSubject> by_id;
    std::vector<std::string> ok;
    for (const auto& row : read_csv(dir / "subjects.csv")) {
        if (row.size() < 4) throw FormatError((dir / "subjects.csv").string() + ": malformed row");
        if (row[2] == "ok") ok.push_back(row[0]);
    }
    for (const auto& row : read_csv(dir / "slices.csv")) {
        if (row.size() < 4) throw FormatError((dir / "slices.csv").string() + ": malformed row");
        if (row[2] == "1") by_id[row[0]].source_indices.push_back(std::stoul(row[1]));
    }
    std::vector<ProcessedSubject> out;
    for (const auto& id : ok) {
        ProcessedSubject s = by_id[id];
        s.subject_id = id;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

VolumeSummary build_volumes_split(const fs::path& processed_root, Split split, const fs::path& out_root) {
    const fs::path in_dir = processed_root / std::string(to_string(split));
    const fs::path out_dir = out_root / std::string(to_string(split));
    fs::create_directories(out_dir);
    const auto labels = labels_if_present(in_dir / "labels.csv");
    std::vector<std::pair<std::string, Label>> label_rows(labels.begin(), labels.end());
    write_labels(out_dir / "labels.csv", label_rows);

    VolumeSummary summary;
    std::string index = "volume_id,subject_id,volume_index,repeated,slice_indices\n";
    for (const auto& subject : read_processed_index(in_dir)) {
        const VolumeContainer vol = read_volume(in_dir / subject.subject_id);
        if (vol.depth != subject.source_indices.size())
            throw DataError("processed volume of " + subject.subject_id + " does not match slices.csv");
        const auto values = as_doubles(vol);
        std::vector<FloatImage> slices(vol.depth);
        for (std::size_t z = 0; z < vol.depth; ++z) {
            slices[z].width = vol.width;
            slices[z].height = vol.height;
            const auto first = values.begin() + static_cast<std::ptrdiff_t>(z * vol.width * vol.height);
            slices[z].values.assign(first, first + static_cast<std::ptrdiff_t>(vol.width * vol.height));
        }
        const auto subvolumes = build_subvolumes(subject.subject_id, slices);
        ++summary.subjects;
        for (std::size_t k = 0; k < subvolumes.size(); ++k) {
            const auto& sv = subvolumes[k];
            const std::string id = subject.subject_id + "_v" + std::to_string(k);
            write_volume(out_dir / id, to_container(kVolumeDepth, sv.height, sv.width, sv.voxels));
            std::string idx;
            for (std::size_t i = 0; i < sv.slice_indices.size(); ++i)
                idx += (i ? ";" : "") + std::to_string(sv.slice_indices[i]);
            index += id + "," + subject.subject_id + "," + std::to_string(k) + "," + (sv.repeated ? "1" : "0") + "," + idx + "\n";
            ++summary.volumes;
            summary.repeated += sv.repeated ? 1 : 0;
        }
    }
    write_file(out_dir / "volumes.csv", index);
    return summary;
}

std::vector<Sample> load_samples(const fs::path& root, Split split, const ModelConfig& model, bool require_labels) {
    const fs::path dir = root / std::string(to_string(split));
    const auto labels = labels_if_present(dir / "labels.csv");
    auto label_of = [&](const std::string& id) {
        auto it = labels.find(id);
        if (it == labels.end()) {
            if (require_labels) throw DataError("subject " + id + " has no label");
            return -1;
        }
        return it->second == Label::covid ? 1 : 0;
    };
    std::vector<Sample> out;
    if (model.variant == Variant::vit2d) {
        if (!fs::exists(dir / "subjects.csv"))
            throw DataError(dir.string() + " is not a preprocessed split (no subjects.csv)");
        for (const auto& subject : read_processed_index(dir)) {
            const VolumeContainer vol = read_volume(dir / subject.subject_id);
            if (vol.depth != subject.source_indices.size())
                throw DataError("processed volume of " + subject.subject_id + " does not match slices.csv");
            const auto values = as_doubles(vol);
            const int label = label_of(subject.subject_id);
            for (std::size_t z = 0; z < vol.depth; ++z) {
                FloatImage img(vol.width, vol.height);
                const auto first = values.begin() + static_cast<std::ptrdiff_t>(z * vol.width * vol.height);
                img.values.assign(first, first + static_cast<std::ptrdiff_t>(vol.width * vol.height));
                out.push_back(Sample{input_tokens_2d(img, model), label, subject.subject_id, subject.source_indices[z]});
            }
        }
    } else {
        if (!fs::exists(dir / "volumes.csv")) throw DataError(dir.string() + " is not a volume split (no volumes.csv)");
        for (const auto& row : read_csv(dir / "volumes.csv")) {
            if (row.size() < 5) throw FormatError((dir / "volumes.csv").string() + ": malformed row");
            const VolumeContainer vol = read_volume(dir / row[0]);
            const auto values = as_doubles(vol);
            out.push_back(Sample{input_tokens_3d(values, vol.depth, vol.height, vol.width, model), label_of(row[1]), row[1],
                                 std::stoul(row[2])});
        }
    }
    return out;
}

}  // namespace covit
