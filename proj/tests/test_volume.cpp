#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "fuselage/resample.hpp"
#include "fuselage/rng.hpp"
#include "fuselage/volume_io.hpp"

#include "test_helpers.hpp"

using namespace fuselage;

namespace {

// independent byte-level NIfTI-1 fixture: the test constructs the file by
// poking offsets directly, so a read through the library checks the header
// layout against a second, hand-written encoding
void poke(std::vector<unsigned char>& bytes, std::size_t off, const void* src, std::size_t n) {
    std::memcpy(bytes.data() + off, src, n);
}

std::vector<unsigned char> build_nifti_bytes_4x4x4_linear() {
    std::vector<unsigned char> bytes(352 + 64 * 4, 0);
    const std::int32_t sizeof_hdr = 348;
    poke(bytes, 0, &sizeof_hdr, 4);
    const std::int16_t dim[8] = {3, 4, 4, 4, 1, 1, 1, 1};
    poke(bytes, 40, dim, sizeof(dim));
    const std::int16_t datatype = 16, bitpix = 32; // float32
    poke(bytes, 70, &datatype, 2);
    poke(bytes, 72, &bitpix, 2);
    const float pixdim[8] = {1.f, 1.f, 1.f, 1.f, 0.f, 0.f, 0.f, 0.f};
    poke(bytes, 76, pixdim, sizeof(pixdim));
    const float vox_offset = 352.f, scl_slope = 1.f, scl_inter = 0.f;
    poke(bytes, 108, &vox_offset, 4);
    poke(bytes, 112, &scl_slope, 4);
    poke(bytes, 116, &scl_inter, 4);
    poke(bytes, 344, "n+1", 4);
    for (int i = 0; i < 64; ++i) {
        const float v = static_cast<float>(i);
        poke(bytes, 352 + 4 * static_cast<std::size_t>(i), &v, 4);
    }
    return bytes;
}

void dump(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("nifti round trip: zero volume is identical") {
    testutil::TempDir tmp;
    ScalarVolume vol(GridMeta(3, 3, 3));
    write_volume(vol, tmp.file("zeros.nii"));
    const ScalarVolume back = read_scalar_volume(tmp.file("zeros.nii"));
    CHECK(back == vol);
}

TEST_CASE("nifti header echo: spacing and origin survive") {
    testutil::TempDir tmp;
    GridMeta meta(5, 4, 3, 1.0, 1.0, 1.0);
    meta.origin = {-12.5, 3.25, 0.5};
    ScalarVolume vol(meta, 7.5);
    write_volume(vol, tmp.file("hdr.nii"));
    const ScalarVolume back = read_scalar_volume(tmp.file("hdr.nii"));
    CHECK(back.meta.spacing[0] == 1.0);
    CHECK(back.meta.spacing[1] == 1.0);
    CHECK(back.meta.spacing[2] == 1.0);
    CHECK(back.meta.origin[0] == doctest::Approx(-12.5));
    CHECK(back.meta.origin[1] == doctest::Approx(3.25));
    CHECK(back.meta.dims == meta.dims);
}

TEST_CASE("nifti byte-level fixture reads back linear values") {
    testutil::TempDir tmp;
    dump(tmp.file("linear.nii"), build_nifti_bytes_4x4x4_linear());
    const ScalarVolume vol = read_scalar_volume(tmp.file("linear.nii"));
    REQUIRE(vol.meta.dims == std::array<int, 3>{4, 4, 4});
    CHECK(vol.at(1, 0, 0) == 1.0);
    CHECK(vol.at(0, 1, 0) == 4.0); // x-fastest storage
    CHECK(vol.at(0, 0, 1) == 16.0);
    CHECK(vol.at(3, 3, 3) == 63.0);
}

TEST_CASE("nifti scl_slope/inter honored on read") {
    testutil::TempDir tmp;
    auto bytes = build_nifti_bytes_4x4x4_linear();
    const float slope = 2.f, inter = 10.f;
    poke(bytes, 112, &slope, 4);
    poke(bytes, 116, &inter, 4);
    dump(tmp.file("scaled.nii"), bytes);
    const ScalarVolume vol = read_scalar_volume(tmp.file("scaled.nii"));
    CHECK(vol.at(1, 0, 0) == 12.0); // 2*1 + 10
}

TEST_CASE("label volume with max id 175 stored losslessly") {
    testutil::TempDir tmp;
    LabelVolume vol(GridMeta(4, 4, 4), 0);
    Rng rng(7);
    for (auto& v : vol.data)
        v = static_cast<std::int32_t>(rng.uniform_index(176));
    vol.data[0] = 175;
    for (const char* name : {"labels.nii", "labels.nii.gz", "labels.raw"}) {
        write_volume(vol, tmp.file(name));
        const LabelVolume back = read_label_volume(tmp.file(name));
        CHECK(back == vol);
    }
}

TEST_CASE("zero spacing is rejected before write") {
    testutil::TempDir tmp;
    ScalarVolume vol(GridMeta(2, 2, 2));
    vol.meta.spacing[1] = 0.0;
    CHECK_THROWS_AS(write_volume(vol, tmp.file("bad.nii")), std::invalid_argument);
    CHECK_FALSE(std::filesystem::exists(tmp.file("bad.nii")));
}

TEST_CASE("gzip nifti round trip bit-exact") {
    testutil::TempDir tmp;
    ScalarVolume vol(GridMeta(6, 5, 4));
    Rng rng(3);
    for (auto& v : vol.data)
        v = static_cast<double>(static_cast<float>(rng.normal(100.0, 20.0)));
    write_volume(vol, tmp.file("v.nii.gz"));
    const ScalarVolume back = read_scalar_volume(tmp.file("v.nii.gz"));
    CHECK(back == vol); // payload was float-representable, so 0 ULP
}

TEST_CASE("raw sidecar round trip is lossless for doubles") {
    testutil::TempDir tmp;
    ScalarVolume vol(GridMeta(3, 4, 5, 0.5, 0.5, 0.5));
    Rng rng(11);
    for (auto& v : vol.data)
        v = rng.normal(0.0, 1.0);
    write_volume(vol, tmp.file("v.raw"));
    const ScalarVolume back = read_scalar_volume(tmp.file("v.raw"));
    CHECK(back == vol);
}

TEST_CASE("truncated payload is rejected") {
    testutil::TempDir tmp;
    auto bytes = build_nifti_bytes_4x4x4_linear();
    bytes.resize(bytes.size() - 16); // drop the last four voxels
    dump(tmp.file("short.nii"), bytes);
    CHECK_THROWS(read_scalar_volume(tmp.file("short.nii")));
}

TEST_CASE("unsupported datatype is rejected") {
    testutil::TempDir tmp;
    auto bytes = build_nifti_bytes_4x4x4_linear();
    const std::int16_t dt = 64; // float64 is outside the subset
    poke(bytes, 70, &dt, 2);
    dump(tmp.file("dt.nii"), bytes);
    CHECK_THROWS(read_scalar_volume(tmp.file("dt.nii")));
}

TEST_CASE("label read rejects float payloads") {
    testutil::TempDir tmp;
    ScalarVolume vol(GridMeta(2, 2, 2), 1.5);
    write_volume(vol, tmp.file("f.nii"));
    CHECK_THROWS(read_label_volume(tmp.file("f.nii")));
}

TEST_CASE("byteswapped header is read correctly") {
    testutil::TempDir tmp;
    auto bytes = build_nifti_bytes_4x4x4_linear();
    auto swap_at = [&](std::size_t off, std::size_t width, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t b = 0; b < width / 2; ++b)
                std::swap(bytes[off + i * width + b], bytes[off + i * width + width - 1 - b]);
    };
    swap_at(0, 4, 1);    // sizeof_hdr
    swap_at(40, 2, 8);   // dim
    swap_at(70, 2, 2);   // datatype, bitpix
    swap_at(76, 4, 8);   // pixdim
    swap_at(108, 4, 3);  // vox_offset, scl_slope, scl_inter
    swap_at(352, 4, 64); // payload
    dump(tmp.file("be.nii"), bytes);
    const ScalarVolume vol = read_scalar_volume(tmp.file("be.nii"));
    CHECK(vol.at(1, 0, 0) == 1.0);
    CHECK(vol.at(3, 3, 3) == 63.0);
}

TEST_CASE("resample: identity at matching spacing") {
    ScalarVolume vol(GridMeta(5, 6, 7, 1.0, 1.0, 1.0));
    Rng rng(5);
    for (auto& v : vol.data)
        v = rng.normal(50.0, 10.0);
    const ScalarVolume out = resample_isotropic(vol, 1.0);
    CHECK(out == vol);
}

TEST_CASE("resample: constant volume stays constant") {
    ScalarVolume vol(GridMeta(4, 4, 4, 2.0, 2.0, 2.0), 3.25);
    const ScalarVolume out = resample_isotropic(vol, 1.0);
    CHECK(out.meta.dims == std::array<int, 3>{8, 8, 8});
    for (double v : out.data)
        CHECK(v == 3.25);
}

TEST_CASE("resample: 2mm ramp to 1mm checked against pointwise formula") {
    // oracle: the trilinear value of affine data is the affine function at
    // the (clamped) source coordinate, evaluated here with plain scalars
    ScalarVolume vol(GridMeta(4, 4, 4, 2.0, 2.0, 2.0));
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                vol.at(x, y, z) = 1.0 * x + 10.0 * y + 100.0 * z;

    const ScalarVolume out = resample_isotropic(vol, 1.0);
    REQUIRE(out.meta.dims == std::array<int, 3>{8, 8, 8});
    CHECK(out.meta.spacing[0] == 1.0);

    auto clamp_to = [](double u, double hi) { return u < 0 ? 0 : (u > hi ? hi : u); };
    for (int z = 0; z < 8; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                const double ux = clamp_to((x + 0.5) * 0.5 - 0.5, 3.0);
                const double uy = clamp_to((y + 0.5) * 0.5 - 0.5, 3.0);
                const double uz = clamp_to((z + 0.5) * 0.5 - 0.5, 3.0);
                const double expected = 1.0 * ux + 10.0 * uy + 100.0 * uz;
                CHECK(out.at(x, y, z) == doctest::Approx(expected).epsilon(1e-12));
            }
}

TEST_CASE("resample: nearest labels never invent a label") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        LabelVolume vol(GridMeta(5, 4, 6, 1.7, 2.3, 0.9));
        for (auto& v : vol.data)
            v = static_cast<std::int32_t>(rng.uniform_index(5)) * 7;
        const auto before = vol.present_labels();
        const LabelVolume out = resample_isotropic(vol, 1.0);
        for (auto id : out.present_labels())
            CHECK(std::find(before.begin(), before.end(), id) != before.end());
    }
}

TEST_CASE("resample: output dims follow ceil(dim*spacing/target)") {
    ScalarVolume vol(GridMeta(5, 3, 2, 0.7, 1.3, 2.5));
    const ScalarVolume out = resample_isotropic(vol, 1.0);
    CHECK(out.meta.dims == std::array<int, 3>{4, 4, 5}); // ceil(3.5), ceil(3.9), ceil(5)
}

TEST_CASE("resample: trilinear keeps the intensity range") {
    Rng rng(23);
    ScalarVolume vol(GridMeta(6, 6, 6, 1.6, 1.6, 1.6));
    for (auto& v : vol.data)
        v = rng.uniform(10.0, 90.0);
    const ScalarVolume out = resample_isotropic(vol, 1.0);
    CHECK(out.min_value() >= vol.min_value());
    CHECK(out.max_value() <= vol.max_value());
}
