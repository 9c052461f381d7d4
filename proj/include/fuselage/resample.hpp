#ifndef FUSELAGE_RESAMPLE_HPP
#define FUSELAGE_RESAMPLE_HPP

#include "fuselage/volume.hpp"

namespace fuselage {

// Resampling to an isotropic grid. The output grid is extent-aligned with
// the input: per axis, out dims = ceil(dim*spacing/target) and the output
// origin shifts by (target - spacing)/2 so that the physical bounding box
// of voxel extents is preserved. An input already at the target spacing
// maps voxel-for-voxel (u = j exactly).
//
// Continuous input index per axis: u = (j + 0.5)*target/spacing - 0.5,
// clamped to [0, n-1]. Trilinear interpolation for intensities; nearest
// neighbor (floor(u+0.5)) for labels, which never invents a label id.

ScalarVolume resample_isotropic(const ScalarVolume& vol, double target_mm);
LabelVolume resample_isotropic(const LabelVolume& vol, double target_mm);

// Pointwise trilinear evaluation at a continuous voxel coordinate
// (clamped); exposed for the resampling oracle checks.
double sample_trilinear(const ScalarVolume& vol, double x, double y, double z);

} // namespace fuselage

#endif
