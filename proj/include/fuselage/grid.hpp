#ifndef FUSELAGE_GRID_HPP
#define FUSELAGE_GRID_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>

namespace fuselage {

// Regular 3D voxel grid. Storage order is row-major x-fastest:
// linear index = x + nx*(y + ny*z). Orientation is reduced to
// spacing+origin (RAS assumed); origin is the world position of the
// center of voxel (0,0,0), in mm.
struct GridMeta {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    GridMeta() = default;
    GridMeta(int nx, int ny, int nz, double sx = 1.0, double sy = 1.0, double sz = 1.0)
        : dims{nx, ny, nz}, spacing{sx, sy, sz} {}

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }

    std::array<int, 3> coords(std::size_t idx) const {
        const int x = static_cast<int>(idx % dims[0]);
        const int y = static_cast<int>((idx / dims[0]) % dims[1]);
        const int z = static_cast<int>(idx / (static_cast<std::size_t>(dims[0]) * dims[1]));
        return {x, y, z};
    }

    bool contains(int x, int y, int z) const {
        return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 1)
                throw std::invalid_argument("GridMeta: all dims must be >= 1");
            if (!(spacing[a] > 0.0))
                throw std::invalid_argument("GridMeta: all spacings must be > 0");
        }
    }

    bool operator==(const GridMeta& o) const {
        return dims == o.dims && spacing == o.spacing && origin == o.origin;
    }
    bool operator!=(const GridMeta& o) const { return !(*this == o); }
};

// Grids are "compatible" when dims and spacing agree; origin is allowed to
// drift by sub-voxel registration residue in some call sites, but the
// default check is strict equality.
inline bool same_grid(const GridMeta& a, const GridMeta& b) { return a == b; }

} // namespace fuselage

#endif
