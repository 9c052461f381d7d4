#ifndef FUSELAGE_ATLAS_HPP
#define FUSELAGE_ATLAS_HPP

#include <optional>
#include <string>
#include <vector>

#include "fuselage/volume.hpp"

namespace fuselage {

// One training example registered to the test space: intensity volume plus
// its manual label map, the subject's age, and whether the labels include
// the GM/WM boundary. Atlases without GM/WM contrast (has_wm=false) are
// barred from explaining white-matter/cortex voxels by the membership
// masking rule.
struct Atlas {
    std::string id;
    ScalarVolume intensity;
    LabelVolume labels;
    double age_days = 0.0;
    bool has_wm = true;
};

struct AtlasSet {
    std::vector<Atlas> atlases;

    std::size_t size() const { return atlases.size(); }
    const Atlas& operator[](std::size_t i) const { return atlases[i]; }

    void validate() const;
    const GridMeta& grid() const;
};

// Manifest JSON:
// {"atlases":[{"id","intensity_path","labels_path","age_days","has_wm"}]}
// Relative paths resolve against the manifest's directory.
AtlasSet load_manifest(const std::string& path);

// k atlases minimizing |age_n - test_age|; ties by ascending id; result
// ordered by ascending distance.
AtlasSet select_by_age(const AtlasSet& set, double test_age_days, int k);

// k atlases maximizing mutual information against the test image; ties by
// ascending id; result ordered by descending MI. MI is estimated from a
// joint histogram with `bins` equal-width bins per axis over each image's
// [min,max], restricted to the test image's nonzero foreground.
AtlasSet select_by_mi(const AtlasSet& set, const ScalarVolume& test_image, int k, int bins = 32);

// Plug-in MI estimate (natural log) between two images on one grid. An
// optional voxel inclusion mask restricts the histogram; a degenerate
// image (min==max) yields 0.
double mutual_information(const ScalarVolume& a, const ScalarVolume& b, int bins,
                          const std::vector<unsigned char>* include = nullptr);

// Plug-in entropy of one image under the same binning (used by the MI
// bound checks).
double histogram_entropy(const ScalarVolume& a, int bins,
                         const std::vector<unsigned char>* include = nullptr);

} // namespace fuselage

#endif
