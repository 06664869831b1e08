#include "covit/dataset_io.hpp"
#include "covit/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace covit;
using covit::test::TempDir;

namespace {

void touch_pgm(const fs::path& p, std::uint8_t value = 7) { write_slice(p, GrayImage(3, 2, value)); }

}  // namespace

TEST_CASE("PGM slices") {
    TempDir dir("pgm");
    SUBCASE("2x2 payload in row-major order") {
        const std::string bytes = std::string("P5\n2 2\n255\n") + std::string("\x00\x40\x80\xff", 4);
        write_file(dir.path() / "a.pgm", bytes);
        const CtSlice s = read_slice(dir.path() / "a.pgm");
        CHECK(s.image.width == 2);
        CHECK(s.image.height == 2);
        CHECK(s.image.pixels == std::vector<std::uint8_t>{0, 64, 128, 255});
    }
    SUBCASE("header comments are allowed") {
        write_file(dir.path() / "c.pgm", std::string("P5\n# scanner\n1 1\n255\n") + std::string(1, '\x09'));
        CHECK(read_slice(dir.path() / "c.pgm").image.pixels == std::vector<std::uint8_t>{9});
    }
    SUBCASE("16-bit maxval is rejected") {
        write_file(dir.path() / "b.pgm", std::string("P5\n1 1\n65535\n") + std::string(2, '\0'));
        CHECK_THROWS_AS(read_slice(dir.path() / "b.pgm"), FormatError);
    }
    SUBCASE("malformed inputs are rejected") {
        write_file(dir.path() / "m1.pgm", "P2\n1 1\n255\n0");
        write_file(dir.path() / "m2.pgm", std::string("P5\n2 2\n255\n") + std::string(3, '\0'));
        write_file(dir.path() / "m3.pgm", std::string("P5\n1 1\n255\n") + std::string(2, '\0'));
        write_file(dir.path() / "m4.pgm", "P5\n0 1\n255\n");
        for (const char* name : {"m1.pgm", "m2.pgm", "m3.pgm", "m4.pgm"}) {
            CAPTURE(name);
            CHECK_THROWS_AS(read_slice(dir.path() / name), FormatError);
        }
        CHECK_THROWS_AS(read_slice(dir.path() / "missing.pgm"), Error);
    }
    SUBCASE("random images round-trip") {
        std::mt19937_64 rng(1);
        for (int trial = 0; trial < 10; ++trial) {
            GrayImage img(1 + rng() % 50, 1 + rng() % 50);
            for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng());
            write_slice(dir.path() / "r.pgm", img);
            CHECK(read_slice(dir.path() / "r.pgm").image == img);
        }
    }
}

TEST_CASE("labels file") {
    TempDir dir("labels");
    write_file(dir.path() / "ok.csv", "subj_a,1\nsubj_b,0\n\n");
    const auto labels = read_labels(dir.path() / "ok.csv");
    CHECK(labels.at("subj_a") == Label::covid);
    CHECK(labels.at("subj_b") == Label::noncovid);
    write_file(dir.path() / "dup.csv", "a,1\na,0\n");
    CHECK_THROWS_AS(read_labels(dir.path() / "dup.csv"), FormatError);
    write_file(dir.path() / "bad.csv", "a,2\n");
    CHECK_THROWS_AS(read_labels(dir.path() / "bad.csv"), FormatError);
    write_file(dir.path() / "bad2.csv", "a\n");
    CHECK_THROWS_AS(read_labels(dir.path() / "bad2.csv"), FormatError);
    write_labels(dir.path() / "w.csv", {{"x", Label::covid}, {"y", Label::noncovid}});
    CHECK(read_file(dir.path() / "w.csv") == "x,1\ny,0\n");
}

TEST_CASE("dataset scan") {
    TempDir dir("scan");
    const fs::path split = dir.path() / "train";
    SUBCASE("numeric slice order") {
        for (const char* n : {"s10.pgm", "s2.pgm", "s1.pgm"}) touch_pgm(split / "subj_a" / n);
        touch_pgm(split / "subj_a" / "s2.mask.pgm");
        write_file(split / "labels.csv", "subj_a,1\n");
        const auto recs = scan_split(dir.path(), Split::train);
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].label == Label::covid);
        REQUIRE(recs[0].slice_paths.size() == 3);
        CHECK(recs[0].slice_paths[0].filename() == "s1.pgm");
        CHECK(recs[0].slice_paths[1].filename() == "s2.pgm");
        CHECK(recs[0].slice_paths[2].filename() == "s10.pgm");
    }
    SUBCASE("empty labels file marks subjects unknown") {
        touch_pgm(split / "b" / "x1.pgm");
        touch_pgm(split / "a" / "x1.pgm");
        write_file(split / "labels.csv", "");
        const auto recs = scan_split(dir.path(), Split::train);
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].subject_id == "a");
        CHECK(recs[0].label == Label::unknown);
        CHECK(recs[1].label == Label::unknown);
    }
    SUBCASE("a subject without images is an error") {
        fs::create_directories(split / "empty");
        write_file(split / "empty" / "notes.txt", "x");
        CHECK_THROWS_AS(scan_split(dir.path(), Split::train), DataError);
    }
    SUBCASE("missing root") { CHECK_THROWS_AS(scan_split(dir.path() / "nope", Split::train), DataError); }
    CHECK(slice_index_from_name("scan_0012.pgm") == 12);
    CHECK(slice_index_from_name("a7b19.pgm") == 19);
    CHECK_THROWS_AS(slice_index_from_name("abc.pgm"), DataError);
}

TEST_CASE("volume container") {
    TempDir dir("vol");
    SUBCASE("single voxel") {
        VolumeContainer v{1, 1, 1, std::vector<float>{0.5f}};
        write_volume(dir.path() / "one", v);
        CHECK(fs::file_size(dir.path() / "one.img") == 4);
        CHECK(read_file(dir.path() / "one.hdr") == "dims=1,1,1\ndtype=f32\norder=slice-major\n");
        CHECK(read_volume(dir.path() / "one") == v);
        VolumeContainer u{1, 1, 1, std::vector<std::uint8_t>{200}};
        write_volume(dir.path() / "u", u);
        CHECK(fs::file_size(dir.path() / "u.img") == 1);
        CHECK(read_volume(dir.path() / "u") == u);
    }
    SUBCASE("full-size random volumes round-trip bit-exactly") {
        std::mt19937_64 rng(2);
        std::vector<float> f(32 * 224 * 224);
        for (auto& x : f) x = std::uniform_real_distribution<float>(-1e3f, 1e3f)(rng);
        const VolumeContainer v{32, 224, 224, f};
        write_volume(dir.path() / "big", v);
        CHECK(read_volume(dir.path() / "big") == v);
        std::vector<std::uint8_t> b(5 * 7 * 3);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        const VolumeContainer w{5, 7, 3, b};
        write_volume(dir.path() / "bytes", w);
        CHECK(read_volume(dir.path() / "bytes") == w);
    }
    SUBCASE("payload truncated by one byte") {
        const VolumeContainer v{2, 2, 2, std::vector<float>(8, 1.0f)};
        write_volume(dir.path() / "t", v);
        std::string img = read_file(dir.path() / "t.img");
        img.pop_back();
        write_file(dir.path() / "t.img", img);
        CHECK_THROWS_AS(read_volume(dir.path() / "t"), FormatError);
    }
    SUBCASE("bad headers") {
        write_file(dir.path() / "h.img", std::string(4, '\0'));
        for (const char* hdr : {"dims=1,1\ndtype=f32\norder=slice-major\n", "dims=1,1,1\ndtype=f64\norder=slice-major\n",
                                "dims=1,1,1\ndtype=f32\norder=column-major\n", "dims=0,1,1\ndtype=f32\norder=slice-major\n"}) {
            write_file(dir.path() / "h.hdr", hdr);
            CAPTURE(hdr);
            CHECK_THROWS_AS(read_volume(dir.path() / "h"), FormatError);
        }
    }
    SUBCASE("payload size must match the dims on write") {
        const VolumeContainer v{2, 2, 2, std::vector<float>(7, 1.0f)};
        CHECK_THROWS(write_volume(dir.path() / "bad", v));
    }
}
