#ifndef FUSELAGE_METRICS_HPP
#define FUSELAGE_METRICS_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselage/label_table.hpp"
#include "fuselage/volume.hpp"

namespace fuselage {

// 2|A n B| / (|A| + |B|) over voxels carrying `label`; nullopt when the
// label is empty in either volume (overlap is only reported when both
// solutions delineate the structure).
std::optional<double> dice(const LabelVolume& a, const LabelVolume& b, std::int32_t label);

// 2 |{x: A(x)=B(x) in S}| / (|[A in S]| + |[B in S]|); 1.0 when both
// volumes are empty of S (vacuous agreement).
double generalized_dice(const LabelVolume& a, const LabelVolume& b,
                        const std::set<std::int32_t>& s);

// Reference-free sharpness: mean Sobel gradient energy (Gx^2+Gy^2) over the
// interior of the middle axial slice, after normalizing the slice to [0,1]
// by its max. Scale-free by construction; a constant slice scores 0.
double tenengrad(const ScalarVolume& vol);

struct LabelOverlap {
    std::int32_t id = 0;
    std::string name;
    bool in_a = false;
    bool in_b = false;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
    std::size_t count_both = 0;
    std::optional<double> dice; // absent unless the label exists in both volumes
};

struct OverlapReport {
    std::vector<LabelOverlap> labels;        // table structures present in a or b
    std::vector<std::int32_t> label_set;     // S: present in both
    double generalized = 0.0;
    std::size_t in_s_a = 0, in_s_b = 0, agree = 0;
};

// Per-label Dice for every table structure present in both volumes, plus
// the Generalized Dice over their set S. Labels present on only one side
// are reported absent and excluded from S.
OverlapReport report(const LabelVolume& a, const LabelVolume& b, const LabelTable& table);

// CSV columns: label_id,label_name,dice,|A|,|B|,|AnB|; one final row with
// label_id=GENERALIZED. The JSON mirror carries the same content.
void write_report_csv(const OverlapReport& rep, const std::string& path);
nlohmann::json report_to_json(const OverlapReport& rep);

} // namespace fuselage

#endif
