#ifndef FUSELAGE_VOLUME_HPP
#define FUSELAGE_VOLUME_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fuselage/grid.hpp"

namespace fuselage {

// Real-valued volume. Values are kept as double in memory; on-disk
// representation is float32 (see volume_io). Immutable by convention once
// constructed and handed to the engine.
struct ScalarVolume {
    GridMeta meta;
    std::vector<double> data;

    ScalarVolume() = default;
    ScalarVolume(const GridMeta& m, double fill = 0.0) : meta(m), data(m.voxel_count(), fill) {
        meta.validate();
    }

    double& at(int x, int y, int z) { return data[meta.index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[meta.index(x, y, z)]; }

    void validate() const {
        meta.validate();
        if (data.size() != meta.voxel_count())
            throw std::invalid_argument("ScalarVolume: payload size does not match dims");
        for (double v : data)
            if (!std::isfinite(v))
                throw std::invalid_argument("ScalarVolume: non-finite value");
    }

    double min_value() const { return *std::min_element(data.begin(), data.end()); }
    double max_value() const { return *std::max_element(data.begin(), data.end()); }

    bool operator==(const ScalarVolume& o) const { return meta == o.meta && data == o.data; }
    bool operator!=(const ScalarVolume& o) const { return !(*this == o); }
};

// Discrete label map over the same grids. IDs follow the FreeSurfer-style
// label table (see label_table.hpp); 0 is background.
struct LabelVolume {
    GridMeta meta;
    std::vector<std::int32_t> data;

    LabelVolume() = default;
    LabelVolume(const GridMeta& m, std::int32_t fill = 0) : meta(m), data(m.voxel_count(), fill) {
        meta.validate();
    }

    std::int32_t& at(int x, int y, int z) { return data[meta.index(x, y, z)]; }
    std::int32_t at(int x, int y, int z) const { return data[meta.index(x, y, z)]; }

    void validate() const {
        meta.validate();
        if (data.size() != meta.voxel_count())
            throw std::invalid_argument("LabelVolume: payload size does not match dims");
        for (auto v : data)
            if (v < 0)
                throw std::invalid_argument("LabelVolume: negative label id");
    }

    std::vector<std::int32_t> present_labels() const {
        std::vector<std::int32_t> ids(data.begin(), data.end());
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }

    bool operator==(const LabelVolume& o) const { return meta == o.meta && data == o.data; }
    bool operator!=(const LabelVolume& o) const { return !(*this == o); }
};

} // namespace fuselage

#endif
