#include "covit/phantom.hpp"

#include "covit/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace covit {
namespace {

constexpr double kTissue = 110.0;
constexpr double kLung = 30.0;
constexpr double kHeart = 165.0;
constexpr double kBed = 200.0;
constexpr double kBorder = 255.0;

struct Ellipse {
    double cx, cy, ax, ay;
    bool contains(double x, double y) const {
        const double dx = (x - cx) / ax, dy = (y - cy) / ay;
        return dx * dx + dy * dy <= 1.0;
    }
};

struct Blob {
    double x, y, r, peak;
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// True when the whole disk lies inside the ellipse (checked on its rim).
bool disk_inside(const Ellipse& e, double x, double y, double r) {
    if (!e.contains(x, y)) return false;
    for (int k = 0; k < 32; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 32.0;
        if (!e.contains(x + (r + 1.0) * std::cos(a), y + (r + 1.0) * std::sin(a))) return false;
    }
    return true;
}

bool disk_clear_of(const Ellipse& e, double x, double y, double r) {
    if (e.contains(x, y)) return false;
    for (int k = 0; k < 32; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 32.0;
        if (e.contains(x + (r + 3.0) * std::cos(a), y + (r + 3.0) * std::sin(a))) return false;
    }
    return true;
}

}  // namespace

PhantomSubject render_subject(const PhantomSpec& spec) {
    if (spec.image_size < 32) throw DataError("phantom: image_size must be at least 32");
    if (spec.n_slices == 0) throw DataError("phantom: n_slices must be positive");
    if (spec.lungless_leading > spec.n_slices) throw DataError("phantom: more lungless slices than slices");
    if (spec.lesion_radius_min <= 0.0 || spec.lesion_radius_max < spec.lesion_radius_min)
        throw DataError("phantom: invalid lesion radius range");

    std::mt19937_64 rng(splitmix64(spec.seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const double n = static_cast<double>(spec.image_size);
    const double cx = n / 2.0 + uniform(-0.01, 0.01) * n;
    const double cy = n / 2.0 + uniform(0.0, 0.03) * n;
    const Ellipse body{cx, cy, uniform(0.39, 0.42) * n, uniform(0.29, 0.31) * n};
    const double lung_dx = uniform(0.165, 0.175) * n;
    const double lung_ax = 0.105 * n, lung_ay = 0.20 * n;
    if (lung_dx + lung_ax >= body.ax || lung_ay >= body.ay)
        throw DataError("phantom: lungs do not fit inside the body");
    const Ellipse heart{cx, cy + 0.11 * n, 0.04 * n, 0.065 * n};
    const double bed_top = body.cy + body.ay + 0.04 * n;
    const double bed_bottom = std::min(n - 4.0, bed_top + 0.03 * n);

    PhantomSubject out;
    out.label = spec.label();
    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
    const std::size_t w = spec.image_size;
    const std::size_t lung_slices = spec.n_slices - spec.lungless_leading;

    for (std::size_t z = 0; z < spec.n_slices; ++z) {
        const bool has_lungs = z >= spec.lungless_leading;
        std::vector<Ellipse> lungs;
        if (has_lungs) {
            const double t = (static_cast<double>(z - spec.lungless_leading) + 0.5) / static_cast<double>(lung_slices);
            const double f = 0.75 + 0.25 * std::sin(std::numbers::pi * t);
            lungs.push_back({cx - lung_dx, cy - 0.01 * n, lung_ax * f, lung_ay * f});
            lungs.push_back({cx + lung_dx, cy - 0.01 * n, lung_ax * f, lung_ay * f});
        }

        // Lesions inside lungs for COVID subjects, distractors outside for the rest.
        std::vector<Blob> lesions, distractors;
        auto place = [&](std::vector<Blob>& dst, std::size_t count, bool inside_lung) {
            for (std::size_t b = 0; b < count; ++b) {
                bool placed = false;
                for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
                    const double r = uniform(spec.lesion_radius_min, spec.lesion_radius_max) * n;
                    const double peak = uniform(spec.lesion_intensity_min, spec.lesion_intensity_max);
                    double x, y;
                    if (inside_lung) {
                        const Ellipse& l = lungs[static_cast<std::size_t>(unit(rng) * 2.0) % 2];
                        x = uniform(l.cx - l.ax, l.cx + l.ax);
                        y = uniform(l.cy - l.ay, l.cy + l.ay);
                        if (!disk_inside(l, x, y, r)) continue;
                    } else {
                        x = uniform(cx - 0.30 * n, cx + 0.30 * n);
                        y = uniform(cy - 0.22 * n, cy + 0.22 * n);
                        if (!disk_inside(body, x, y, r + 2.0)) continue;
                        if (!std::all_of(lungs.begin(), lungs.end(), [&](const Ellipse& l) { return disk_clear_of(l, x, y, r); }))
                            continue;
                        if (spec.heart && !disk_clear_of(heart, x, y, r)) continue;
                    }
                    const bool overlaps = std::any_of(dst.begin(), dst.end(), [&](const Blob& o) {
                        return std::hypot(o.x - x, o.y - y) <= o.r + r + 2.0;
                    });
                    if (overlaps) continue;
                    dst.push_back({x, y, r, peak});
                    placed = true;
                }
                if (!placed) throw DataError("phantom: cannot place blobs; spec geometry impossible");
            }
        };
        if (has_lungs) {
            if (spec.lesion_count > 0)
                place(lesions, spec.lesion_count, true);
            else
                place(distractors, spec.distractor_count, false);
        }

        CtSlice slice;
        slice.source_index = z;
        slice.image = GrayImage(w, w);
        PhantomTruth truth{Mask(w, w), Mask(w, w), Mask(w, w), Mask(w, w)};
        for (std::size_t py = 0; py < w; ++py)
            for (std::size_t px = 0; px < w; ++px) {
                const double x = static_cast<double>(px) + 0.5, y = static_cast<double>(py) + 0.5;
                double v = 0.0;
                if (body.contains(x, y)) {
                    truth.body.set(px, py);
                    v = kTissue;
                    if (spec.heart && has_lungs && heart.contains(x, y)) {
                        v = kHeart;
                        truth.heart.set(px, py);
                    }
                    for (const Ellipse& l : lungs)
                        if (l.contains(x, y)) {
                            v = kLung;
                            truth.lung.set(px, py);
                        }
                    for (const auto* set : {&lesions, &distractors})
                        for (const Blob& b : *set) {
                            const double d = std::hypot(x - b.x, y - b.y);
                            if (d > b.r) continue;
                            const double sigma = b.r / 2.0;
                            v += b.peak * std::exp(-d * d / (2.0 * sigma * sigma));
                            if (set == &lesions) truth.lesion.set(px, py);
                        }
                } else if (spec.bed && y >= bed_top && y < bed_bottom && x > 0.1 * n && x < 0.9 * n) {
                    v = kBed;
                }
                if (spec.border_artifact && (px < 2 || py < 2 || px + 2 >= w || py + 2 >= w)) v = kBorder;
                if (spec.noise_sigma > 0.0) v += noise(rng);
                slice.image.at(px, py) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        out.slices.push_back(std::move(slice));
        out.truth.push_back(std::move(truth));
    }
    return out;
}

GrayImage encode_truth(const PhantomTruth& t) {
    GrayImage g(t.body.width, t.body.height);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        if (t.lesion.bits[i]) g.pixels[i] = 255;
        else if (t.lung.bits[i]) g.pixels[i] = 170;
        else if (t.body.bits[i]) g.pixels[i] = 85;
    }
    return g;
}

PhantomTruth decode_truth(const GrayImage& s) {
    PhantomTruth t{Mask(s.width, s.height), Mask(s.width, s.height), Mask(s.width, s.height), Mask(s.width, s.height)};
    for (std::size_t i = 0; i < s.pixels.size(); ++i) {
        t.body.bits[i] = s.pixels[i] >= 85 ? 1 : 0;
        t.lung.bits[i] = s.pixels[i] >= 170 ? 1 : 0;
        t.lesion.bits[i] = s.pixels[i] == 255 ? 1 : 0;
    }
    return t;
}

PhantomSubject generate_subject(const PhantomSpec& spec, const std::filesystem::path& dir) {
    PhantomSubject subject = render_subject(spec);
    for (std::size_t z = 0; z < subject.slices.size(); ++z) {
        char name[32];
        std::snprintf(name, sizeof name, "slice%03zu", z);
        write_slice(dir / (std::string(name) + ".pgm"), subject.slices[z].image);
        write_slice(dir / (std::string(name) + ".mask.pgm"), encode_truth(subject.truth[z]));
    }
    return subject;
}

DatasetSummary generate_dataset(const std::filesystem::path& root, std::size_t n_covid, std::size_t n_noncovid,
                                std::uint64_t seed, Split split, const PhantomSpec& base, std::size_t covid_lesions) {
    if (covid_lesions == 0) throw DataError("phantom: COVID subjects need at least one lesion");
    const std::filesystem::path split_dir = root / std::string(to_string(split));
    std::filesystem::create_directories(split_dir);

    std::vector<Label> labels(n_covid, Label::covid);
    labels.insert(labels.end(), n_noncovid, Label::noncovid);
    std::mt19937_64 rng(splitmix64(seed ^ 0x5eedULL));
    for (std::size_t i = labels.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(labels[i - 1], labels[pick(rng)]);
    }

    DatasetSummary summary;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "subj_%04zu", i);
        PhantomSpec spec = base;
        spec.seed = splitmix64(seed * 1000003ULL + i);
        spec.lesion_count = labels[i] == Label::covid ? covid_lesions : 0;
        generate_subject(spec, split_dir / id);
        summary.subjects.emplace_back(id, labels[i]);
    }
    write_labels(split_dir / "labels.csv", summary.subjects);
    return summary;
}

}  // namespace covit
