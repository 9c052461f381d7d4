#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fuselage/metrics.hpp"
#include "fuselage/phantom.hpp"
#include "fuselage/rng.hpp"

#include "test_helpers.hpp"

using namespace fuselage;

namespace {

LabelVolume from_flat(const std::vector<std::int32_t>& values) {
    LabelVolume vol(GridMeta(static_cast<int>(values.size()), 1, 1));
    vol.data.assign(values.begin(), values.end());
    return vol;
}

} // namespace

TEST_CASE("dice: identical supports give 1") {
    const LabelVolume a = from_flat({2, 2, 9, 0});
    CHECK(*dice(a, a, 2) == 1.0);
    CHECK(*dice(a, a, 9) == 1.0);
}

TEST_CASE("dice: disjoint supports give 0") {
    const LabelVolume a = from_flat({2, 2, 0, 0});
    const LabelVolume b = from_flat({0, 0, 2, 2});
    CHECK(*dice(a, b, 2) == 0.0);
}

TEST_CASE("dice: hand count 2*2/(4+4) = 0.5") {
    const LabelVolume a = from_flat({2, 2, 2, 2, 0, 0, 0, 0});
    const LabelVolume b = from_flat({2, 2, 0, 0, 2, 2, 0, 0});
    CHECK(*dice(a, b, 2) == 0.5); // exact
}

TEST_CASE("dice: absent label reports nullopt, not zero") {
    const LabelVolume a = from_flat({2, 2, 0, 0});
    const LabelVolume b = from_flat({0, 0, 0, 0});
    CHECK_FALSE(dice(a, b, 2).has_value());
    CHECK_FALSE(dice(a, b, 9).has_value());
}

TEST_CASE("dice: grid mismatch throws") {
    const LabelVolume a = from_flat({2, 2});
    const LabelVolume b = from_flat({2, 2, 2});
    CHECK_THROWS_AS(dice(a, b, 2), std::invalid_argument);
}

TEST_CASE("generalized dice: identical maps give 1") {
    const LabelVolume a = from_flat({2, 9, 14, 0, 2});
    CHECK(generalized_dice(a, a, {2, 9, 14}) == 1.0);
}

TEST_CASE("generalized dice: hand count 2*3/(4+4) = 0.75") {
    const LabelVolume a = from_flat({1, 1, 2, 2});
    const LabelVolume b = from_flat({1, 2, 2, 2});
    CHECK(generalized_dice(a, b, {1, 2}) == 0.75); // exact
}

TEST_CASE("generalized dice over a singleton reduces to dice") {
    Rng rng(601);
    for (int trial = 0; trial < 20; ++trial) {
        LabelVolume a(GridMeta(6, 6, 6)), b(GridMeta(6, 6, 6));
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            a.data[i] = static_cast<std::int32_t>(rng.uniform_index(3)) * 2;
            b.data[i] = static_cast<std::int32_t>(rng.uniform_index(3)) * 2;
        }
        const auto d = dice(a, b, 2);
        if (d)
            CHECK(generalized_dice(a, b, {2}) == *d);
    }
}

TEST_CASE("generalized dice: both volumes empty of S gives vacuous 1") {
    const LabelVolume a = from_flat({0, 0, 0});
    CHECK(generalized_dice(a, a, {9}) == 1.0);
}

TEST_CASE("dice and generalized dice are symmetric and relabel-invariant") {
    Rng rng(607);
    for (int trial = 0; trial < 10; ++trial) {
        LabelVolume a(GridMeta(5, 5, 5)), b(GridMeta(5, 5, 5));
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            a.data[i] = static_cast<std::int32_t>(rng.uniform_index(3));
            b.data[i] = static_cast<std::int32_t>(rng.uniform_index(3));
        }
        CHECK(generalized_dice(a, b, {1, 2}) == generalized_dice(b, a, {1, 2}));
        const auto dab = dice(a, b, 1), dba = dice(b, a, 1);
        CHECK(dab.has_value() == dba.has_value());
        if (dab)
            CHECK(*dab == *dba);

        // consistent relabeling 1->11, 2->12
        LabelVolume a2 = a, b2 = b;
        for (auto& v : a2.data)
            v = v == 0 ? 0 : v + 10;
        for (auto& v : b2.data)
            v = v == 0 ? 0 : v + 10;
        CHECK(generalized_dice(a2, b2, {11, 12}) == generalized_dice(a, b, {1, 2}));
    }
}

TEST_CASE("tenengrad: constant volume scores 0") {
    ScalarVolume vol(GridMeta(9, 9, 5), 7.0);
    CHECK(tenengrad(vol) == 0.0);
}

TEST_CASE("tenengrad: requires nz >= 3") {
    ScalarVolume vol(GridMeta(9, 9, 2), 1.0);
    CHECK_THROWS_AS(tenengrad(vol), std::invalid_argument);
}

TEST_CASE("tenengrad: unit step along x matches the direct Sobel response") {
    // oracle: direct 2D convolution over the middle slice written out here
    const int n = 9;
    ScalarVolume vol(GridMeta(n, n, 5));
    for (int z = 0; z < 5; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                vol.at(x, y, z) = x >= n / 2 ? 1.0 : 0.0;

    const int z = 2;
    const int gx_kernel[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const int gy_kernel[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    double expected = 0.0;
    int count = 0;
    for (int y = 1; y < n - 1; ++y)
        for (int x = 1; x < n - 1; ++x) {
            double gx = 0.0, gy = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double p = vol.at(x + dx, y + dy, z); // slice max is already 1
                    gx += gx_kernel[dy + 1][dx + 1] * p;
                    gy += gy_kernel[dy + 1][dx + 1] * p;
                }
            expected += gx * gx + gy * gy;
            ++count;
        }
    expected /= count;
    CHECK(tenengrad(vol) == doctest::Approx(expected).epsilon(1e-14));
    // the step's analytic Sobel response is 4 at the two columns adjacent
    // to the edge: 2 * 7 pixels * 16 / 49 interior pixels
    CHECK(expected == doctest::Approx(2.0 * 7.0 * 16.0 / 49.0).epsilon(1e-12));
}

TEST_CASE("tenengrad: invariant to global intensity scaling") {
    Rng rng(613);
    ScalarVolume vol(GridMeta(12, 12, 5));
    for (auto& v : vol.data)
        v = rng.uniform(0.0, 50.0);
    ScalarVolume scaled = vol;
    for (auto& v : scaled.data)
        v *= 37.5;
    CHECK(tenengrad(scaled) == doctest::Approx(tenengrad(vol)).epsilon(1e-12));
}

TEST_CASE("tenengrad: blurring a step strictly lowers the score") {
    ScalarVolume vol(GridMeta(17, 17, 7));
    for (int z = 0; z < 7; ++z)
        for (int y = 0; y < 17; ++y)
            for (int x = 0; x < 17; ++x)
                vol.at(x, y, z) = x >= 8 ? 100.0 : 10.0;
    const ScalarVolume blurred = gaussian_blur(vol, 2.0);
    CHECK(tenengrad(vol) > tenengrad(blurred));
}

TEST_CASE("report: identical volumes score 1 everywhere") {
    Rng rng(617);
    LabelVolume a(GridMeta(6, 6, 6));
    for (auto& v : a.data) {
        const int pick = static_cast<int>(rng.uniform_index(4));
        v = pick == 0 ? 0 : (pick == 1 ? 2 : (pick == 2 ? 9 : 51));
    }
    const OverlapReport rep = report(a, a, label_table());
    CHECK(rep.generalized == 1.0);
    for (const auto& e : rep.labels) {
        REQUIRE(e.dice.has_value());
        CHECK(*e.dice == 1.0);
    }
}

TEST_CASE("report: label present on one side only is marked absent and excluded from S") {
    const LabelVolume a = from_flat({2, 2, 9, 9});
    const LabelVolume b = from_flat({2, 2, 2, 2});
    const OverlapReport rep = report(a, b, label_table());

    bool saw_9 = false;
    for (const auto& e : rep.labels)
        if (e.id == 9) {
            saw_9 = true;
            CHECK(e.in_a);
            CHECK_FALSE(e.in_b);
            CHECK_FALSE(e.dice.has_value());
        }
    CHECK(saw_9);
    CHECK(rep.label_set == std::vector<std::int32_t>{2});
    // S = {2}: A has 2 voxels of it, B has 4, 2 agree
    CHECK(rep.generalized == 2.0 * 2.0 / 6.0);
}

TEST_CASE("report: counts match hand-computed ratios on a phantom pair") {
    PhantomConfig cfg;
    cfg.seed = 5;
    cfg.size = 16;
    cfg.n_atlases = 2;
    cfg.deformation_voxels = 1.0;
    const PhantomInstance inst = generate(cfg);

    const LabelVolume& a = inst.truth;
    const LabelVolume& b = inst.atlases[0].labels;
    const OverlapReport rep = report(a, b, label_table());
    for (const auto& e : rep.labels) {
        if (!e.dice)
            continue;
        std::size_t na = 0, nb = 0, nab = 0;
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            na += a.data[i] == e.id;
            nb += b.data[i] == e.id;
            nab += a.data[i] == e.id && b.data[i] == e.id;
        }
        CHECK(*e.dice == 2.0 * static_cast<double>(nab) / static_cast<double>(na + nb));
        CHECK(e.count_a == na);
        CHECK(e.count_b == nb);
        CHECK(e.count_both == nab);
    }
}

TEST_CASE("report CSV carries the pinned columns and a GENERALIZED row") {
    testutil::TempDir tmp;
    const LabelVolume a = from_flat({2, 2, 9, 9});
    const LabelVolume b = from_flat({2, 2, 9, 2});
    const OverlapReport rep = report(a, b, label_table());
    write_report_csv(rep, tmp.file("rep.csv"));

    std::ifstream in(tmp.file("rep.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "label_id,label_name,dice,|A|,|B|,|AnB|");
    bool saw_generalized = false;
    for (std::string line; std::getline(in, line);)
        if (line.rfind("GENERALIZED", 0) == 0)
            saw_generalized = true;
    CHECK(saw_generalized);

    const nlohmann::json j = report_to_json(rep);
    CHECK(j.at("generalized_dice").get<double>() == rep.generalized);
    CHECK(j.at("labels").size() == rep.labels.size());
}
