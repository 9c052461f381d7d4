#ifndef FUSELAGE_DISTANCE_HPP
#define FUSELAGE_DISTANCE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fuselage/atlas.hpp"
#include "fuselage/volume.hpp"

namespace fuselage {

// Signed Euclidean distance transform of one label's support, in mm.
// Sign convention: negative inside the label, positive outside; the
// magnitude is the exact Euclidean distance between voxel centers to the
// nearest center of the opposite set. Output clipped to [-d_max, +d_max].
// A label absent from the volume yields an all-(+d_max) field and sets
// *label_absent; a label covering the whole volume yields all -d_max.
// Anisotropic spacing is honored. Exact (lower-envelope algorithm).
ScalarVolume signed_edt(const LabelVolume& labels, std::int32_t label_id, double d_max = 20.0,
                        bool* label_absent = nullptr);

// Squared-distance transform building block: for each voxel, the minimum
// over source voxels (f finite) of f[src] + dist^2(voxel, src). Exposed for
// the metric-consistency property tests.
void squared_edt_inplace(std::vector<double>& f, const GridMeta& meta);

// Distance fields for every (selected atlas, label) pair, stored at
// float32 precision so that cache round trips are bit-exact. Persistable
// to a directory of volumes named {atlas_id}_{label_id}.nii.
class DistanceFieldSet {
public:
    // label_set must be sorted ascending; cache_dir may be empty (no cache)
    DistanceFieldSet(const AtlasSet& atlases, const std::vector<std::int32_t>& label_set,
                     double d_max, const std::string& cache_dir, int workers);

    std::size_t n_atlases() const { return n_atlases_; }
    std::size_t n_labels() const { return labels_.size(); }
    const std::vector<std::int32_t>& label_set() const { return labels_; }
    double d_max() const { return d_max_; }
    const GridMeta& grid() const { return grid_; }

    const std::vector<float>& field(std::size_t atlas, std::size_t label_index) const {
        return fields_[atlas * labels_.size() + label_index];
    }
    float value(std::size_t atlas, std::size_t label_index, std::size_t voxel) const {
        return fields_[atlas * labels_.size() + label_index][voxel];
    }

private:
    std::size_t n_atlases_;
    std::vector<std::int32_t> labels_;
    double d_max_;
    GridMeta grid_;
    std::vector<std::vector<float>> fields_;
};

} // namespace fuselage

#endif
