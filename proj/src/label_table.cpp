#include "fuselage/label_table.hpp"

#include <stdexcept>

namespace fuselage {

LabelTable::LabelTable() {
    entries_ = {
        {"Background", 0},
        {"L-CerebralWhiteMatter", 2},
        {"R-CerebralWhiteMatter", 41},
        {"L-CerebralCortex", 3},
        {"R-CerebralCortex", 42},
        {"L-LateralVentricle", 4},
        {"R-LateralVentricle", 43},
        {"L-CerebellarWhiteMatter", 7},
        {"R-CerebellarWhiteMatter", 46},
        {"L-CerebellarCortex", 8},
        {"R-CerebellarCortex", 47},
        {"L-Thalamus", 9},
        {"R-Thalamus", 48},
        {"L-Caudate", 11},
        {"R-Caudate", 50},
        {"L-Putamen", 12},
        {"R-Putamen", 51},
        {"L-Pallidum", 13},
        {"R-Pallidum", 52},
        {"3rd-Ventricle", 14},
        {"4th-Ventricle", 15},
        {"L-Hippocampus", 17},
        {"R-Hippocampus", 53},
        {"L-Amygdala", 18},
        {"R-Amygdala", 54},
        {"L-Accumbens", 26},
        {"R-Accumbens", 58},
        {"L-VentralDC", 28},
        {"R-VentralDC", 60},
        {"Vermis", 172},
        {"Midbrain", 173},
        {"Pons", 174},
        {"Medulla", 175},
    };
    wm_cortex_ids_ = {2, 41, 3, 42};
}

bool LabelTable::contains(std::int32_t id) const {
    for (const auto& e : entries_)
        if (e.id == id)
            return true;
    return false;
}

const std::string& LabelTable::name_of(std::int32_t id) const {
    for (const auto& e : entries_)
        if (e.id == id)
            return e.name;
    throw std::out_of_range("unknown label id " + std::to_string(id));
}

std::int32_t LabelTable::id_of(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name)
            return e.id;
    throw std::out_of_range("unknown label name " + name);
}

std::pair<std::int32_t, std::int32_t> LabelTable::pair_ids(const std::string& base_name) const {
    return {id_of("L-" + base_name), id_of("R-" + base_name)};
}

std::vector<std::int32_t> LabelTable::structure_ids() const {
    std::vector<std::int32_t> ids;
    for (const auto& e : entries_)
        if (is_structure(e.id))
            ids.push_back(e.id);
    return ids;
}

const LabelTable& label_table() {
    static const LabelTable table;
    return table;
}

} // namespace fuselage
