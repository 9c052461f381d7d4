#ifndef FUSELAGE_MEMBERSHIP_HPP
#define FUSELAGE_MEMBERSHIP_HPP

#include <cstddef>
#include <vector>

#include "fuselage/grid.hpp"

namespace fuselage {

// Mean-field posterior over atlas membership: one categorical q_x(n) per
// voxel, stored voxel-major. Voxels outside the active domain carry all
// zeros and are never touched by sweeps.
struct MembershipPosterior {
    GridMeta grid;
    std::size_t n_atlases = 0;
    std::vector<double> data;          // [voxel * n_atlases + n]
    std::vector<unsigned char> active; // 1 inside the brain-mask domain

    MembershipPosterior() = default;
    MembershipPosterior(const GridMeta& g, std::size_t n)
        : grid(g), n_atlases(n), data(g.voxel_count() * n, 0.0),
          active(g.voxel_count(), 1) {}

    double q(std::size_t voxel, std::size_t n) const { return data[voxel * n_atlases + n]; }
    double& q(std::size_t voxel, std::size_t n) { return data[voxel * n_atlases + n]; }
};

} // namespace fuselage

#endif
