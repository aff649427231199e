#include <filesystem>
#include <random>

#include "doctest.h"
#include "slicevol/error.hpp"
#include "slicevol/io.hpp"
#include "slicevol/phantom.hpp"

using namespace slicevol;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("slicevol_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("seg3d and slice2d round trip") {
    auto dir = scratch("rt");
    std::mt19937_64 rng(1);
    std::bernoulli_distribution b(0.3);
    LabelVolume v({7, 5, 9}, {2.0, 1.0, 0.5}, "case_x");
    for (auto& x : v.data()) x = b(rng);
    io::write_seg3d(v, dir / "v.seg3d");
    auto r = io::read_seg3d(dir / "v.seg3d");
    CHECK(r == v);
    CHECK(r.case_id() == "case_x");

    SlicePair p;
    p.case_id = "case_y";
    p.coronal = Image2D(6, 6);
    p.coronal.at(2, 3) = 1;
    p.transverse = Image2D(6, 6);
    p.transverse->at(5, 0) = 1;
    io::write_slice2d(p, dir / "p.slice2d");
    CHECK(io::read_slice2d(dir / "p.slice2d") == p);
    auto single = p.single_view();
    io::write_slice2d(single, dir / "s.slice2d");
    CHECK(io::read_slice2d(dir / "s.slice2d") == single);
    CHECK_THROWS_AS(io::read_seg3d(dir / "missing.seg3d"), DataError);
}

TEST_CASE("manifest round trip and digests") {
    auto dir = scratch("man");
    std::vector<CaseRecord> recs(2);
    recs[0] = {"case_0000", 123.5, false, {80.0, 60.0, 40.0}, 2};
    recs[1] = {"case_0001", 512.25, true, {120.0, 90.5, 50.0}, std::nullopt};
    io::write_manifest(recs, dir / "m.csv");
    auto back = io::read_manifest(dir / "m.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].case_id == "case_0000");
    CHECK(back[0].volume_mL == 123.5);
    CHECK(back[0].fold == 2);
    CHECK(back[1].splenomegaly);
    CHECK_FALSE(back[1].fold.has_value());
    CHECK(back[1].measurements.max_width_mm == 90.5);

    io::write_text(dir / "a.txt", "hello");
    io::write_text(dir / "b.txt", "hello");
    io::write_text(dir / "c.txt", "hellp");
    CHECK(io::file_digest(dir / "a.txt") == io::file_digest(dir / "b.txt"));
    CHECK(io::file_digest(dir / "a.txt") != io::file_digest(dir / "c.txt"));

    io::write_text(dir / "bad.csv", "case_id,splenomegaly\ncase_0,0\n");
    CHECK_THROWS_WITH(io::read_manifest(dir / "bad.csv"), doctest::Contains("manifest has no volume_mL column"));
}

TEST_CASE("fixed formatting") {
    CHECK(io::format_fixed(1.5, 2) == "1.50");
    CHECK(io::format_fixed(-0.125, 3) == "-0.125");
    CHECK(io::split_csv_line("a,,b") == std::vector<std::string>{"a", "", "b"});
}
