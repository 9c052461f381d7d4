#ifndef FUSELAGE_LABEL_TABLE_HPP
#define FUSELAGE_LABEL_TABLE_HPP

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace fuselage {

struct LabelEntry {
    std::string name;
    std::int32_t id;
};

// The segmentation label taxonomy: 13 left/right structure pairs and 6
// midline structures with their FreeSurfer ids, plus Background (0) as the
// 33rd entry. Background is not a structure: overlap metrics and the
// masking rule only ever see is_structure(id) labels.
class LabelTable {
public:
    LabelTable();

    const std::vector<LabelEntry>& entries() const { return entries_; }

    bool contains(std::int32_t id) const;
    const std::string& name_of(std::int32_t id) const;
    std::int32_t id_of(const std::string& name) const;

    // ids of the L/R pair for a paired structure base name, e.g.
    // pair_ids("Thalamus") == {9, 48}
    std::pair<std::int32_t, std::int32_t> pair_ids(const std::string& base_name) const;

    static bool is_structure(std::int32_t id) { return id != 0; }

    // cerebral white matter + cerebral cortex, both sides; the region set
    // of the membership masking rule
    const std::set<std::int32_t>& wm_cortex_ids() const { return wm_cortex_ids_; }

    std::vector<std::int32_t> structure_ids() const;

private:
    std::vector<LabelEntry> entries_;
    std::set<std::int32_t> wm_cortex_ids_;
};

const LabelTable& label_table();

} // namespace fuselage

#endif
