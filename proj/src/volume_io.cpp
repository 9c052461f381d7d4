#include "fuselage/volume_io.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <zlib.h>

#include <nlohmann/json.hpp>

namespace fuselage {

namespace {

// NIfTI-1 header, 348 bytes. Only the subset of fields this engine uses is
// given meaningful values on write; everything else stays zero.
#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;   // 0: must be 348
    char data_type[10];        // 4
    char db_name[18];          // 14
    std::int32_t extents;      // 32
    std::int16_t session_error;// 36
    char regular;              // 38
    char dim_info;             // 39
    std::int16_t dim[8];       // 40
    float intent_p1;           // 56
    float intent_p2;           // 60
    float intent_p3;           // 64
    std::int16_t intent_code;  // 68
    std::int16_t datatype;     // 70
    std::int16_t bitpix;       // 72
    std::int16_t slice_start;  // 74
    float pixdim[8];           // 76
    float vox_offset;          // 108
    float scl_slope;           // 112
    float scl_inter;           // 116
    std::int16_t slice_end;    // 120
    char slice_code;           // 122
    char xyzt_units;           // 123
    float cal_max;             // 124
    float cal_min;             // 128
    float slice_duration;      // 132
    float toffset;             // 136
    std::int32_t glmax;        // 140
    std::int32_t glmin;        // 144
    char descrip[80];          // 148
    char aux_file[24];         // 228
    std::int16_t qform_code;   // 252
    std::int16_t sform_code;   // 254
    float quatern_b;           // 256
    float quatern_c;           // 260
    float quatern_d;           // 264
    float qoffset_x;           // 268
    float qoffset_y;           // 272
    float qoffset_z;           // 276
    float srow_x[4];           // 280
    float srow_y[4];           // 296
    float srow_z[4];           // 312
    char intent_name[16];      // 328
    char magic[4];             // 344
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtInt32 = 8;
constexpr std::int16_t kDtFloat32 = 16;

template <typename T>
void byteswap_inplace(T& v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(p[i], p[sizeof(T) - 1 - i]);
}

void swap_header(Nifti1Header& h) {
    byteswap_inplace(h.sizeof_hdr);
    byteswap_inplace(h.extents);
    byteswap_inplace(h.session_error);
    for (auto& d : h.dim) byteswap_inplace(d);
    byteswap_inplace(h.intent_p1);
    byteswap_inplace(h.intent_p2);
    byteswap_inplace(h.intent_p3);
    byteswap_inplace(h.intent_code);
    byteswap_inplace(h.datatype);
    byteswap_inplace(h.bitpix);
    byteswap_inplace(h.slice_start);
    for (auto& p : h.pixdim) byteswap_inplace(p);
    byteswap_inplace(h.vox_offset);
    byteswap_inplace(h.scl_slope);
    byteswap_inplace(h.scl_inter);
    byteswap_inplace(h.slice_end);
    byteswap_inplace(h.cal_max);
    byteswap_inplace(h.cal_min);
    byteswap_inplace(h.slice_duration);
    byteswap_inplace(h.toffset);
    byteswap_inplace(h.glmax);
    byteswap_inplace(h.glmin);
    byteswap_inplace(h.qform_code);
    byteswap_inplace(h.sform_code);
    byteswap_inplace(h.quatern_b);
    byteswap_inplace(h.quatern_c);
    byteswap_inplace(h.quatern_d);
    byteswap_inplace(h.qoffset_x);
    byteswap_inplace(h.qoffset_y);
    byteswap_inplace(h.qoffset_z);
    for (auto& v : h.srow_x) byteswap_inplace(v);
    for (auto& v : h.srow_y) byteswap_inplace(v);
    for (auto& v : h.srow_z) byteswap_inplace(v);
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_raw_path(const std::string& path) { return ends_with(path, ".raw"); }

std::string sidecar_path(const std::string& raw_path) {
    return raw_path.substr(0, raw_path.size() - 4) + ".json";
}

// gzread also transparently handles uncompressed files, so all NIfTI reads
// go through one code path.
struct GzReader {
    gzFile f = nullptr;
    explicit GzReader(const std::string& path) {
        f = gzopen(path.c_str(), "rb");
        if (!f)
            throw std::runtime_error("cannot open volume file: " + path);
    }
    ~GzReader() {
        if (f)
            gzclose(f);
    }
    void read_exact(void* dst, std::size_t n, const std::string& path) {
        std::size_t done = 0;
        auto* out = static_cast<unsigned char*>(dst);
        while (done < n) {
            const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 28));
            const int got = gzread(f, out + done, chunk);
            if (got <= 0)
                throw std::runtime_error("truncated or unreadable volume payload: " + path);
            done += static_cast<std::size_t>(got);
        }
    }
    void skip(std::size_t n, const std::string& path) {
        std::vector<unsigned char> sink(std::min<std::size_t>(n, 4096));
        std::size_t left = n;
        while (left > 0) {
            const std::size_t take = std::min(left, sink.size());
            read_exact(sink.data(), take, path);
            left -= take;
        }
    }
};

struct RawNifti {
    GridMeta meta;
    std::int16_t datatype = 0;
    float scl_slope = 0.f;
    float scl_inter = 0.f;
    std::vector<unsigned char> payload;
};

RawNifti read_nifti_raw(const std::string& path) {
    GzReader in(path);
    Nifti1Header h{};
    in.read_exact(&h, sizeof(h), path);

    bool swapped = false;
    if (h.sizeof_hdr != 348) {
        swap_header(h);
        swapped = true;
        if (h.sizeof_hdr != 348)
            throw std::runtime_error("not a NIfTI-1 file (bad sizeof_hdr): " + path);
    }
    if (std::strncmp(h.magic, "n+1", 3) != 0 && std::strncmp(h.magic, "ni1", 3) != 0)
        throw std::runtime_error("not a NIfTI-1 file (bad magic): " + path);
    if (h.dim[0] != 3)
        throw std::runtime_error("unsupported NIfTI dimensionality (need dim[0]=3): " + path);

    RawNifti r;
    r.meta.dims = {h.dim[1], h.dim[2], h.dim[3]};
    r.meta.spacing = {h.pixdim[1], h.pixdim[2], h.pixdim[3]};
    if (h.sform_code > 0) {
        r.meta.origin = {h.srow_x[3], h.srow_y[3], h.srow_z[3]};
    } else if (h.qform_code > 0) {
        r.meta.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
    }
    r.meta.validate();
    r.datatype = h.datatype;
    r.scl_slope = h.scl_slope;
    r.scl_inter = h.scl_inter;

    std::size_t elem = 0;
    switch (h.datatype) {
        case kDtUint8: elem = 1; break;
        case kDtInt16: elem = 2; break;
        case kDtInt32: elem = 4; break;
        case kDtFloat32: elem = 4; break;
        default:
            throw std::runtime_error("unsupported NIfTI datatype " + std::to_string(h.datatype) +
                                     ": " + path);
    }

    const std::size_t offset = static_cast<std::size_t>(h.vox_offset);
    if (offset < sizeof(Nifti1Header))
        throw std::runtime_error("invalid vox_offset in " + path);
    in.skip(offset - sizeof(Nifti1Header), path);

    r.payload.resize(r.meta.voxel_count() * elem);
    in.read_exact(r.payload.data(), r.payload.size(), path);

    if (swapped) {
        if (elem == 2)
            for (std::size_t i = 0; i < r.payload.size(); i += 2)
                std::swap(r.payload[i], r.payload[i + 1]);
        else if (elem == 4)
            for (std::size_t i = 0; i < r.payload.size(); i += 4) {
                std::swap(r.payload[i], r.payload[i + 3]);
                std::swap(r.payload[i + 1], r.payload[i + 2]);
            }
    }
    return r;
}

template <typename T, typename Out>
void widen_payload(const std::vector<unsigned char>& bytes, std::vector<Out>& out) {
    const std::size_t n = bytes.size() / sizeof(T);
    out.resize(n);
    const T* src = reinterpret_cast<const T*>(bytes.data());
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<Out>(src[i]);
}

void write_bytes(const std::string& path, const void* header, std::size_t header_len,
                 const void* body, std::size_t body_len) {
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f)
            throw std::runtime_error("cannot open for writing: " + path);
        bool ok = gzwrite(f, header, static_cast<unsigned>(header_len)) ==
                  static_cast<int>(header_len);
        std::size_t done = 0;
        const auto* b = static_cast<const unsigned char*>(body);
        while (ok && done < body_len) {
            const unsigned chunk =
                static_cast<unsigned>(std::min<std::size_t>(body_len - done, 1u << 28));
            ok = gzwrite(f, b + done, chunk) == static_cast<int>(chunk);
            done += chunk;
        }
        const bool closed_ok = gzclose(f) == Z_OK;
        if (!ok || !closed_ok)
            throw std::runtime_error("I/O failure writing " + path);
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out.write(static_cast<const char*>(header), static_cast<std::streamsize>(header_len));
    out.write(static_cast<const char*>(body), static_cast<std::streamsize>(body_len));
    if (!out)
        throw std::runtime_error("I/O failure writing " + path);
}

Nifti1Header make_header(const GridMeta& meta, std::int16_t datatype, std::int16_t bitpix) {
    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(meta.dims[0]);
    h.dim[2] = static_cast<std::int16_t>(meta.dims[1]);
    h.dim[3] = static_cast<std::int16_t>(meta.dims[2]);
    for (int i = 4; i < 8; ++i)
        h.dim[i] = 1;
    h.datatype = datatype;
    h.bitpix = bitpix;
    h.pixdim[0] = 1.f;
    h.pixdim[1] = static_cast<float>(meta.spacing[0]);
    h.pixdim[2] = static_cast<float>(meta.spacing[1]);
    h.pixdim[3] = static_cast<float>(meta.spacing[2]);
    h.vox_offset = 352.f;
    h.scl_slope = 1.f;
    h.scl_inter = 0.f;
    h.xyzt_units = 2; // mm
    h.sform_code = 1;
    h.qform_code = 0;
    h.srow_x[0] = static_cast<float>(meta.spacing[0]);
    h.srow_x[3] = static_cast<float>(meta.origin[0]);
    h.srow_y[1] = static_cast<float>(meta.spacing[1]);
    h.srow_y[3] = static_cast<float>(meta.origin[1]);
    h.srow_z[2] = static_cast<float>(meta.spacing[2]);
    h.srow_z[3] = static_cast<float>(meta.origin[2]);
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

void write_nifti(const GridMeta& meta, std::int16_t datatype, std::int16_t bitpix,
                 const void* body, std::size_t body_len, const std::string& path) {
    const Nifti1Header h = make_header(meta, datatype, bitpix);
    // header + 4-byte extension flag (all zero), payload at 352
    std::vector<unsigned char> head(352, 0);
    std::memcpy(head.data(), &h, sizeof(h));
    write_bytes(path, head.data(), head.size(), body, body_len);
}

nlohmann::json read_sidecar(const std::string& raw_path) {
    std::ifstream in(sidecar_path(raw_path));
    if (!in)
        throw std::runtime_error("missing sidecar for raw volume: " + sidecar_path(raw_path));
    nlohmann::json j;
    in >> j;
    return j;
}

GridMeta meta_from_sidecar(const nlohmann::json& j) {
    GridMeta meta;
    const auto& dims = j.at("dims");
    const auto& spacing = j.at("spacing");
    const auto& origin = j.at("origin");
    for (int a = 0; a < 3; ++a) {
        meta.dims[a] = dims.at(a).get<int>();
        meta.spacing[a] = spacing.at(a).get<double>();
        meta.origin[a] = origin.at(a).get<double>();
    }
    meta.validate();
    return meta;
}

std::vector<unsigned char> read_raw_payload(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open volume file: " + path);
    std::vector<unsigned char> bytes(expected);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(in.gcount()) != expected)
        throw std::runtime_error("raw payload size does not match sidecar dims: " + path);
    return bytes;
}

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "uint8") return 1;
    if (dtype == "int16") return 2;
    if (dtype == "int32" || dtype == "float32") return 4;
    if (dtype == "float64") return 8;
    throw std::runtime_error("unsupported raw dtype: " + dtype);
}

} // namespace

ScalarVolume read_scalar_volume(const std::string& path) {
    ScalarVolume vol;
    if (is_raw_path(path)) {
        const auto j = read_sidecar(path);
        vol.meta = meta_from_sidecar(j);
        const std::string dtype = j.at("dtype").get<std::string>();
        const auto bytes = read_raw_payload(path, vol.meta.voxel_count() * dtype_size(dtype));
        if (dtype == "uint8") widen_payload<std::uint8_t>(bytes, vol.data);
        else if (dtype == "int16") widen_payload<std::int16_t>(bytes, vol.data);
        else if (dtype == "int32") widen_payload<std::int32_t>(bytes, vol.data);
        else if (dtype == "float32") widen_payload<float>(bytes, vol.data);
        else widen_payload<double>(bytes, vol.data);
    } else {
        const RawNifti r = read_nifti_raw(path);
        vol.meta = r.meta;
        switch (r.datatype) {
            case kDtUint8: widen_payload<std::uint8_t>(r.payload, vol.data); break;
            case kDtInt16: widen_payload<std::int16_t>(r.payload, vol.data); break;
            case kDtInt32: widen_payload<std::int32_t>(r.payload, vol.data); break;
            default: widen_payload<float>(r.payload, vol.data); break;
        }
        const bool has_scaling = r.scl_slope != 0.f && (r.scl_slope != 1.f || r.scl_inter != 0.f);
        if (has_scaling)
            for (auto& v : vol.data)
                v = static_cast<double>(r.scl_slope) * v + static_cast<double>(r.scl_inter);
    }
    vol.validate();
    return vol;
}

LabelVolume read_label_volume(const std::string& path) {
    LabelVolume vol;
    if (is_raw_path(path)) {
        const auto j = read_sidecar(path);
        vol.meta = meta_from_sidecar(j);
        const std::string dtype = j.at("dtype").get<std::string>();
        if (dtype != "uint8" && dtype != "int16" && dtype != "int32")
            throw std::runtime_error("label volume requires integer dtype, got " + dtype + ": " + path);
        const auto bytes = read_raw_payload(path, vol.meta.voxel_count() * dtype_size(dtype));
        if (dtype == "uint8") widen_payload<std::uint8_t>(bytes, vol.data);
        else if (dtype == "int16") widen_payload<std::int16_t>(bytes, vol.data);
        else widen_payload<std::int32_t>(bytes, vol.data);
    } else {
        const RawNifti r = read_nifti_raw(path);
        vol.meta = r.meta;
        if (r.datatype != kDtUint8 && r.datatype != kDtInt16 && r.datatype != kDtInt32)
            throw std::runtime_error("label volume requires integer datatype: " + path);
        if (r.scl_slope != 0.f && (r.scl_slope != 1.f || r.scl_inter != 0.f))
            throw std::runtime_error("label volume must not carry intensity scaling: " + path);
        switch (r.datatype) {
            case kDtUint8: widen_payload<std::uint8_t>(r.payload, vol.data); break;
            case kDtInt16: widen_payload<std::int16_t>(r.payload, vol.data); break;
            default: widen_payload<std::int32_t>(r.payload, vol.data); break;
        }
    }
    vol.validate();
    return vol;
}

void write_volume(const ScalarVolume& vol, const std::string& path) {
    vol.validate();
    if (is_raw_path(path)) {
        nlohmann::json j{{"dims", vol.meta.dims},
                         {"spacing", vol.meta.spacing},
                         {"origin", vol.meta.origin},
                         {"dtype", "float64"}};
        std::ofstream side(sidecar_path(path), std::ios::trunc);
        if (!side)
            throw std::runtime_error("cannot write sidecar: " + sidecar_path(path));
        side << j.dump(2) << "\n";
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot open for writing: " + path);
        out.write(reinterpret_cast<const char*>(vol.data.data()),
                  static_cast<std::streamsize>(vol.data.size() * sizeof(double)));
        if (!out)
            throw std::runtime_error("I/O failure writing " + path);
        return;
    }
    std::vector<float> body(vol.data.begin(), vol.data.end());
    write_nifti(vol.meta, kDtFloat32, 32, body.data(), body.size() * sizeof(float), path);
}

void write_volume(const LabelVolume& vol, const std::string& path) {
    vol.validate();
    if (is_raw_path(path)) {
        nlohmann::json j{{"dims", vol.meta.dims},
                         {"spacing", vol.meta.spacing},
                         {"origin", vol.meta.origin},
                         {"dtype", "int32"}};
        std::ofstream side(sidecar_path(path), std::ios::trunc);
        if (!side)
            throw std::runtime_error("cannot write sidecar: " + sidecar_path(path));
        side << j.dump(2) << "\n";
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot open for writing: " + path);
        out.write(reinterpret_cast<const char*>(vol.data.data()),
                  static_cast<std::streamsize>(vol.data.size() * sizeof(std::int32_t)));
        if (!out)
            throw std::runtime_error("I/O failure writing " + path);
        return;
    }
    write_nifti(vol.meta, kDtInt32, 32, vol.data.data(), vol.data.size() * sizeof(std::int32_t),
                path);
}

} // namespace fuselage
