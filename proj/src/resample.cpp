#include "fuselage/resample.hpp"

#include <cmath>
#include <stdexcept>

namespace fuselage {

namespace {

GridMeta target_grid(const GridMeta& in, double target_mm) {
    if (!(target_mm > 0.0))
        throw std::invalid_argument("resample_isotropic: target spacing must be > 0");
    in.validate();
    GridMeta out;
    for (int a = 0; a < 3; ++a) {
        out.dims[a] =
            static_cast<int>(std::ceil(in.dims[a] * in.spacing[a] / target_mm - 1e-9));
        if (out.dims[a] < 1)
            out.dims[a] = 1;
        out.spacing[a] = target_mm;
        out.origin[a] = in.origin[a] + 0.5 * (target_mm - in.spacing[a]);
    }
    return out;
}

inline double source_coord(int j, double target, double spacing) {
    return (j + 0.5) * target / spacing - 0.5;
}

inline double clampd(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

} // namespace

double sample_trilinear(const ScalarVolume& vol, double x, double y, double z) {
    const auto& m = vol.meta;
    x = clampd(x, 0.0, m.dims[0] - 1.0);
    y = clampd(y, 0.0, m.dims[1] - 1.0);
    z = clampd(z, 0.0, m.dims[2] - 1.0);
    const int x0 = std::min(static_cast<int>(std::floor(x)), m.dims[0] - 1);
    const int y0 = std::min(static_cast<int>(std::floor(y)), m.dims[1] - 1);
    const int z0 = std::min(static_cast<int>(std::floor(z)), m.dims[2] - 1);
    const int x1 = std::min(x0 + 1, m.dims[0] - 1);
    const int y1 = std::min(y0 + 1, m.dims[1] - 1);
    const int z1 = std::min(z0 + 1, m.dims[2] - 1);
    const double fx = x - x0, fy = y - y0, fz = z - z0;

    const double c000 = vol.at(x0, y0, z0), c100 = vol.at(x1, y0, z0);
    const double c010 = vol.at(x0, y1, z0), c110 = vol.at(x1, y1, z0);
    const double c001 = vol.at(x0, y0, z1), c101 = vol.at(x1, y0, z1);
    const double c011 = vol.at(x0, y1, z1), c111 = vol.at(x1, y1, z1);

    const double c00 = c000 + fx * (c100 - c000);
    const double c10 = c010 + fx * (c110 - c010);
    const double c01 = c001 + fx * (c101 - c001);
    const double c11 = c011 + fx * (c111 - c011);
    const double c0 = c00 + fy * (c10 - c00);
    const double c1 = c01 + fy * (c11 - c01);
    return c0 + fz * (c1 - c0);
}

ScalarVolume resample_isotropic(const ScalarVolume& vol, double target_mm) {
    const GridMeta out_meta = target_grid(vol.meta, target_mm);
    ScalarVolume out(out_meta);
    std::size_t idx = 0;
    for (int z = 0; z < out_meta.dims[2]; ++z) {
        const double sz = source_coord(z, target_mm, vol.meta.spacing[2]);
        for (int y = 0; y < out_meta.dims[1]; ++y) {
            const double sy = source_coord(y, target_mm, vol.meta.spacing[1]);
            for (int x = 0; x < out_meta.dims[0]; ++x, ++idx) {
                const double sx = source_coord(x, target_mm, vol.meta.spacing[0]);
                out.data[idx] = sample_trilinear(vol, sx, sy, sz);
            }
        }
    }
    return out;
}

LabelVolume resample_isotropic(const LabelVolume& vol, double target_mm) {
    const GridMeta out_meta = target_grid(vol.meta, target_mm);
    LabelVolume out(out_meta);
    auto nearest = [](double u, int n) {
        int i = static_cast<int>(std::floor(u + 0.5));
        return i < 0 ? 0 : (i >= n ? n - 1 : i);
    };
    std::size_t idx = 0;
    for (int z = 0; z < out_meta.dims[2]; ++z) {
        const int sz = nearest(source_coord(z, target_mm, vol.meta.spacing[2]), vol.meta.dims[2]);
        for (int y = 0; y < out_meta.dims[1]; ++y) {
            const int sy =
                nearest(source_coord(y, target_mm, vol.meta.spacing[1]), vol.meta.dims[1]);
            for (int x = 0; x < out_meta.dims[0]; ++x, ++idx) {
                const int sx =
                    nearest(source_coord(x, target_mm, vol.meta.spacing[0]), vol.meta.dims[0]);
                out.data[idx] = vol.at(sx, sy, sz);
            }
        }
    }
    return out;
}

} // namespace fuselage
