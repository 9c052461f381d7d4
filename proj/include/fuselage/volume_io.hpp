#ifndef FUSELAGE_VOLUME_IO_HPP
#define FUSELAGE_VOLUME_IO_HPP

#include <string>

#include "fuselage/volume.hpp"

namespace fuselage {

// Supported formats, chosen by extension:
//   .nii / .nii.gz   NIfTI-1 subset: dim[0]=3, datatypes uint8/int16/int32/
//                    float32, scl_slope/inter honored on read (written 1/0),
//                    either endianness on read, gzip variant accepted.
//   .raw             little-endian payload + JSON sidecar (same stem, .json)
//                    {dims, spacing, origin, dtype}; dtype additionally
//                    allows float64 for lossless round trips.
//
// Scalar volumes are written as float32 (.nii) or float64 (.raw); label
// volumes as int32 in both. Label reads require an integer datatype with
// identity scaling and round-trip integer-exactly.

ScalarVolume read_scalar_volume(const std::string& path);
LabelVolume read_label_volume(const std::string& path);

void write_volume(const ScalarVolume& vol, const std::string& path);
void write_volume(const LabelVolume& vol, const std::string& path);

} // namespace fuselage

#endif
