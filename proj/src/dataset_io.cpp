#include "covit/dataset_io.hpp"

#include "covit/error.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace covit {

std::string_view to_string(Label label) {
    switch (label) {
        case Label::noncovid:
            return "noncovid";
        case Label::covid:
            return "covid";
        case Label::unknown:
            return "unknown";
    }
    return "unknown";
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train:
            return "train";
        case Split::validation:
            return "validation";
        case Split::test:
            return "test";
    }
    return "train";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "validation") return Split::validation;
    if (name == "test") return Split::test;
    throw DataError("unknown split '" + std::string(name) + "'");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <class T>
T le_load(const char* bytes) {
    T v;
    std::memcpy(&v, bytes, sizeof v);
    if constexpr (std::endian::native == std::endian::big) {
        auto* p = reinterpret_cast<unsigned char*>(&v);
        std::reverse(p, p + sizeof v);
    }
    return v;
}

template <class T>
void le_store(std::string& out, T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto* p = reinterpret_cast<unsigned char*>(&v);
        std::reverse(p, p + sizeof v);
    }
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

bool is_slice_file(const fs::path& p) {
    const std::string name = p.filename().string();
    auto ends_with = [&](std::string_view suffix) {
        return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    return ends_with(".pgm") && !ends_with(".mask.pgm");
}

}  // namespace

void append_le(std::string& out, double value) { le_store(out, value); }
void append_le(std::string& out, float value) { le_store(out, value); }
double read_le_f64(const char* bytes) { return le_load<double>(bytes); }
float read_le_f32(const char* bytes) { return le_load<float>(bytes); }

std::map<std::string, Label> read_labels(const fs::path& path) {
    std::map<std::string, Label> out;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view row = trim(line);
        if (row.empty()) continue;
        const auto comma = row.find(',');
        if (comma == std::string_view::npos)
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected subject_id,label");
        const std::string id(trim(row.substr(0, comma)));
        const std::string_view value = trim(row.substr(comma + 1));
        if (id.empty()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": empty subject id");
        Label label;
        if (value == "1")
            label = Label::covid;
        else if (value == "0")
            label = Label::noncovid;
        else
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
        if (!out.emplace(id, label).second)
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": duplicate subject id '" + id + "'");
    }
    return out;
}

void write_labels(const fs::path& path, const std::vector<std::pair<std::string, Label>>& rows) {
    std::string text;
    for (const auto& [id, label] : rows) {
        if (label == Label::unknown) continue;
        text += id + "," + (label == Label::covid ? "1" : "0") + "\n";
    }
    write_file(path, text);
}

std::size_t slice_index_from_name(const fs::path& path) {
    std::string stem = path.filename().string();
    if (auto dot = stem.find('.'); dot != std::string::npos) stem.resize(dot);
    std::size_t end = stem.size();
    while (end > 0 && !std::isdigit(static_cast<unsigned char>(stem[end - 1]))) --end;
    std::size_t begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    if (begin == end) throw DataError("slice file name has no index: " + path.string());
    std::size_t value = 0;
    std::from_chars(stem.data() + begin, stem.data() + end, value);
    return value;
}

std::vector<SubjectRecord> scan_dataset(const fs::path& split_dir, const fs::path& labels_file, Split split) {
    if (!fs::is_directory(split_dir)) throw DataError("dataset directory not found: " + split_dir.string());
    const auto labels = fs::exists(labels_file) ? read_labels(labels_file) : std::map<std::string, Label>{};
    std::vector<SubjectRecord> out;
    for (const auto& entry : fs::directory_iterator(split_dir)) {
        if (!entry.is_directory()) continue;
        SubjectRecord rec;
        rec.subject_id = entry.path().filename().string();
        rec.split = split;
        std::vector<std::pair<std::size_t, fs::path>> slices;
        for (const auto& f : fs::directory_iterator(entry.path()))
            if (f.is_regular_file() && is_slice_file(f.path())) slices.emplace_back(slice_index_from_name(f.path()), f.path());
        if (slices.empty()) throw DataError("subject directory has no slice images: " + entry.path().string());
        std::sort(slices.begin(), slices.end());
        for (std::size_t i = 1; i < slices.size(); ++i)
            if (slices[i].first == slices[i - 1].first)
                throw DataError("duplicate slice index " + std::to_string(slices[i].first) + " in " + entry.path().string());
        for (auto& s : slices) rec.slice_paths.push_back(std::move(s.second));
        if (auto it = labels.find(rec.subject_id); it != labels.end()) rec.label = it->second;
        out.push_back(std::move(rec));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });
    return out;
}

std::vector<SubjectRecord> scan_split(const fs::path& root, Split split) {
    const fs::path dir = root / std::string(to_string(split));
    return scan_dataset(dir, dir / "labels.csv", split);
}

CtSlice read_slice(const fs::path& path) {
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    auto fail = [&](const std::string& what) -> FormatError { return FormatError(path.string() + ": " + what); };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw fail("not a binary PGM (P5)");
    pos = 2;
    auto next_number = [&]() -> std::size_t {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw fail("malformed header");
        std::size_t v = 0;
        const auto res = std::from_chars(bytes.data() + start, bytes.data() + pos, v);
        if (res.ec != std::errc{}) throw fail("header value out of range");
        return v;
    };
    const std::size_t w = next_number();
    const std::size_t h = next_number();
    const std::size_t maxval = next_number();
    if (w == 0 || h == 0) throw fail("zero image dimension");
    if (maxval != 255) throw fail("unsupported maxval " + std::to_string(maxval) + " (expected 255)");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) throw fail("malformed header");
    ++pos;
    if (bytes.size() - pos < w * h) throw fail("truncated pixel data");
    if (bytes.size() - pos > w * h) throw fail("trailing bytes after pixel data");
    CtSlice slice;
    slice.image = GrayImage(w, h);
    std::memcpy(slice.image.pixels.data(), bytes.data() + pos, w * h);
    return slice;
}

void write_slice(const fs::path& path, const GrayImage& image) {
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height)
        throw ShapeError("write_slice: invalid image");
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    write_file(path, out);
}

VolumeDType VolumeContainer::dtype() const {
    return std::holds_alternative<std::vector<float>>(payload) ? VolumeDType::f32 : VolumeDType::u8;
}

std::string volume_header_text(const VolumeContainer& v) {
    return "dims=" + std::to_string(v.depth) + "," + std::to_string(v.height) + "," + std::to_string(v.width) +
           "\ndtype=" + (v.dtype() == VolumeDType::f32 ? "f32" : "u8") + "\norder=slice-major\n";
}

void write_volume(const fs::path& stem, const VolumeContainer& v) {
    if (v.depth == 0 || v.height == 0 || v.width == 0) throw ShapeError("write_volume: dimensions must be positive");
    std::string payload;
    if (const auto* f = std::get_if<std::vector<float>>(&v.payload)) {
        if (f->size() != v.voxel_count()) throw ShapeError("write_volume: payload does not match dims");
        payload.reserve(f->size() * 4);
        for (float x : *f) append_le(payload, x);
    } else {
        const auto& u = std::get<std::vector<std::uint8_t>>(v.payload);
        if (u.size() != v.voxel_count()) throw ShapeError("write_volume: payload does not match dims");
        payload.assign(reinterpret_cast<const char*>(u.data()), u.size());
    }
    fs::path hdr = stem, img = stem;
    hdr += ".hdr";
    img += ".img";
    write_file(hdr, volume_header_text(v));
    write_file(img, payload);
}

VolumeContainer read_volume(const fs::path& stem) {
    fs::path hdr = stem, img = stem;
    hdr += ".hdr";
    img += ".img";
    const std::string header = read_file(hdr);
    std::map<std::string, std::string> kv;
    std::istringstream in(header);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(hdr.string() + ": malformed header line '" + line + "'");
        if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
            throw FormatError(hdr.string() + ": repeated key " + line.substr(0, eq));
    }
    for (const char* key : {"dims", "dtype", "order"})
        if (!kv.count(key)) throw FormatError(hdr.string() + ": missing '" + key + "'");
    if (kv.size() != 3) throw FormatError(hdr.string() + ": unexpected header keys");
    if (kv["order"] != "slice-major") throw FormatError(hdr.string() + ": unsupported order " + kv["order"]);

    VolumeContainer v;
    {
        std::size_t dims[3];
        std::string_view s = kv["dims"];
        for (int i = 0; i < 3; ++i) {
            const auto comma = s.find(',');
            const std::string_view tok = i < 2 ? s.substr(0, comma) : s;
            if ((i < 2 && comma == std::string_view::npos) || tok.empty())
                throw FormatError(hdr.string() + ": dims must be d,h,w");
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), dims[i]);
            if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || dims[i] == 0)
                throw FormatError(hdr.string() + ": invalid dims '" + kv["dims"] + "'");
            if (i < 2) s.remove_prefix(comma + 1);
        }
        v.depth = dims[0];
        v.height = dims[1];
        v.width = dims[2];
    }
    const std::string payload = read_file(img);
    const std::size_t n = v.voxel_count();
    if (kv["dtype"] == "f32") {
        if (payload.size() != n * 4)
            throw FormatError(img.string() + ": payload is " + std::to_string(payload.size()) + " bytes, expected " +
                              std::to_string(n * 4));
        std::vector<float> f(n);
        for (std::size_t i = 0; i < n; ++i) f[i] = read_le_f32(payload.data() + 4 * i);
        v.payload = std::move(f);
    } else if (kv["dtype"] == "u8") {
        if (payload.size() != n)
            throw FormatError(img.string() + ": payload is " + std::to_string(payload.size()) + " bytes, expected " +
                              std::to_string(n));
        v.payload = std::vector<std::uint8_t>(payload.begin(), payload.end());
    } else {
        throw FormatError(hdr.string() + ": unknown dtype '" + kv["dtype"] + "'");
    }
    return v;
}

}  // namespace covit
