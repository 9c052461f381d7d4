#include <doctest.h>

#include <fstream>

#include "fuselage/commands.hpp"
#include "fuselage/metrics.hpp"
#include "fuselage/phantom.hpp"
#include "fuselage/volume_io.hpp"

#include "test_helpers.hpp"

using namespace fuselage;

TEST_CASE("segment validation fires before any I/O") {
    SegmentOptions opt;
    opt.image_path = "x.nii";
    opt.mask_path = "m.nii";
    opt.manifest_path = "mf.json";
    opt.out_dir = "out";
    opt.k = 2;

    SUBCASE("age selection without age-days") {
        opt.select_by = "age";
        opt.age_days.reset();
        CHECK_THROWS_AS(opt.validate(), std::invalid_argument);
    }
    SUBCASE("unknown selection mode") {
        opt.select_by = "magic";
        CHECK_THROWS_AS(opt.validate(), std::invalid_argument);
    }
    SUBCASE("k must be positive") {
        opt.select_by = "mi";
        opt.k = 0;
        CHECK_THROWS_AS(opt.validate(), std::invalid_argument);
    }
    SUBCASE("valid mi options pass") {
        opt.select_by = "mi";
        CHECK_NOTHROW(opt.validate());
    }
}

TEST_CASE("segment rejects k larger than the manifest before compute") {
    testutil::TempDir tmp;
    PhantomConfig pcfg;
    pcfg.seed = 2;
    pcfg.size = 16;
    pcfg.n_atlases = 2;
    const PhantomInstance inst = write_phantom(pcfg, tmp.file("ph"));

    SegmentOptions opt;
    opt.image_path = tmp.file("ph") + "/image.nii";
    opt.mask_path = tmp.file("ph") + "/mask.nii";
    opt.manifest_path = inst.manifest_path;
    opt.out_dir = tmp.file("out");
    opt.k = 5; // only 2 atlases exist
    opt.select_by = "age";
    opt.age_days = 100.0;
    CHECK_THROWS_AS(cmd_segment(opt), std::invalid_argument);
    CHECK_FALSE(std::filesystem::exists(tmp.file("out") + "/map_labels.nii"));
}

TEST_CASE("segment end to end on a phantom reaches GenDice >= 0.95") {
    testutil::TempDir tmp;
    PhantomConfig pcfg;
    pcfg.seed = 9;
    pcfg.size = 32;
    pcfg.n_atlases = 5;
    pcfg.noise_sigma = 0.1;
    pcfg.deformation_voxels = 1.0;
    const PhantomInstance inst = write_phantom(pcfg, tmp.file("ph"));

    SegmentOptions opt;
    opt.image_path = tmp.file("ph") + "/image.nii";
    opt.mask_path = tmp.file("ph") + "/mask.nii";
    opt.manifest_path = inst.manifest_path;
    opt.out_dir = tmp.file("out");
    opt.k = 5;
    opt.select_by = "age";
    opt.age_days = 365.0;
    opt.bias_degree = 2;
    CHECK(cmd_segment(opt) == 0);

    const LabelVolume out = read_label_volume(tmp.file("out") + "/map_labels.nii");
    const OverlapReport rep = report(inst.truth, out, label_table());
    CHECK(rep.generalized >= 0.95);

    CHECK(std::filesystem::exists(tmp.file("out") + "/report.json"));
    CHECK(std::filesystem::exists(tmp.file("out") + "/params.json"));
}

TEST_CASE("metrics command on identical volumes writes GENERALIZED 1") {
    testutil::TempDir tmp;
    LabelVolume vol(GridMeta(8, 8, 8), 0);
    for (std::size_t v = 0; v < vol.data.size(); ++v)
        vol.data[v] = v % 3 == 0 ? 9 : (v % 3 == 1 ? 2 : 0);
    write_volume(vol, tmp.file("a.nii"));
    write_volume(vol, tmp.file("b.nii"));

    MetricsOptions opt;
    opt.a_path = tmp.file("a.nii");
    opt.b_path = tmp.file("b.nii");
    opt.out_path = tmp.file("rep.csv");
    CHECK(cmd_metrics(opt) == 0);

    std::ifstream in(tmp.file("rep.csv"));
    std::string generalized_line;
    for (std::string line; std::getline(in, line);)
        if (line.rfind("GENERALIZED", 0) == 0)
            generalized_line = line;
    CHECK(generalized_line.find(",1,") != std::string::npos);
    CHECK(std::filesystem::exists(tmp.file("rep.csv") + ".json"));
}

TEST_CASE("sharpness command prints 0 for a constant volume") {
    testutil::TempDir tmp;
    ScalarVolume vol(GridMeta(9, 9, 5), 3.0);
    write_volume(vol, tmp.file("c.nii"));
    SharpnessOptions opt;
    opt.image_path = tmp.file("c.nii");
    CHECK(cmd_sharpness(opt) == 0);
}

TEST_CASE("phantom + jackknife commands produce the expected CSV rows") {
    testutil::TempDir tmp;
    PhantomOptions popt;
    popt.seed = 14;
    popt.size = 16;
    popt.n_atlases = 4;
    popt.noise = 0.1;
    popt.deform = 0.5;
    popt.out_dir = tmp.file("fam");
    CHECK(cmd_phantom(popt) == 0);

    JackknifeOptions jopt;
    jopt.manifest_path = tmp.file("fam") + "/manifest.json";
    jopt.sizes_spec = "1-2";
    jopt.out_dir = tmp.file("jk");
    CHECK(cmd_jackknife(jopt) == 0);

    std::ifstream in(tmp.file("jk") + "/jackknife.csv");
    std::size_t generalized_rows = 0;
    for (std::string line; std::getline(in, line);)
        if (line.find(",GENERALIZED,") != std::string::npos)
            ++generalized_rows;
    CHECK(generalized_rows == 8); // 4 subjects x sizes {1,2}
}

TEST_CASE("select command validation") {
    SelectOptions opt;
    opt.manifest_path = "m.json";
    opt.k = 1;
    SUBCASE("mi needs an image") {
        opt.select_by = "mi";
        CHECK_THROWS_AS(opt.validate(), std::invalid_argument);
    }
    SUBCASE("age needs age-days") {
        opt.select_by = "age";
        CHECK_THROWS_AS(opt.validate(), std::invalid_argument);
    }
}

TEST_CASE("select command picks by age across a phantom manifest") {
    testutil::TempDir tmp;
    PhantomConfig pcfg;
    pcfg.seed = 6;
    pcfg.size = 16;
    pcfg.n_atlases = 5; // ages 0, 182.5, 365, 547.5, 730
    write_phantom(pcfg, tmp.file("ph"));

    SelectOptions opt;
    opt.manifest_path = tmp.file("ph") + "/manifest.json";
    opt.k = 2;
    opt.select_by = "age";
    opt.age_days = 0.0;
    opt.out_path = tmp.file("sel.json");
    CHECK(cmd_select(opt) == 0);

    std::ifstream in(tmp.file("sel.json"));
    nlohmann::json j;
    in >> j;
    REQUIRE(j.at("selected").size() == 2);
    CHECK(j.at("selected").at(0).at("id").get<std::string>() == "phantom00");
    CHECK(j.at("selected").at(1).at("id").get<std::string>() == "phantom01");
}

TEST_CASE("parse_sizes_spec handles lists and ranges") {
    CHECK(parse_sizes_spec("1-5") == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(parse_sizes_spec("2,4,6") == std::vector<int>{2, 4, 6});
    CHECK(parse_sizes_spec("1,3-5") == std::vector<int>{1, 3, 4, 5});
    CHECK_THROWS_AS(parse_sizes_spec("5-1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_sizes_spec("x"), std::invalid_argument);
}
