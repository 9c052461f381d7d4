#include "fuselage/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fuselage/volume_io.hpp"

namespace fuselage {

void AtlasSet::validate() const {
    if (atlases.empty())
        throw std::invalid_argument("AtlasSet: need at least one atlas");
    std::set<std::string> ids;
    const GridMeta& g = atlases.front().intensity.meta;
    for (const auto& a : atlases) {
        if (!ids.insert(a.id).second)
            throw std::invalid_argument("AtlasSet: duplicate atlas id '" + a.id + "'");
        if (a.intensity.meta != a.labels.meta)
            throw std::invalid_argument("Atlas '" + a.id +
                                        "': intensity and label grids differ");
        if (a.intensity.meta != g)
            throw std::invalid_argument("AtlasSet: atlas '" + a.id +
                                        "' is not on the shared grid");
        if (a.age_days < 0.0)
            throw std::invalid_argument("Atlas '" + a.id + "': negative age");
    }
}

const GridMeta& AtlasSet::grid() const {
    if (atlases.empty())
        throw std::logic_error("AtlasSet::grid on empty set");
    return atlases.front().intensity.meta;
}

AtlasSet load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open manifest: " + path);
    nlohmann::json j;
    in >> j;

    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    AtlasSet set;
    for (const auto& ja : j.at("atlases")) {
        Atlas a;
        a.id = ja.at("id").get<std::string>();
        a.intensity = read_scalar_volume(resolve(ja.at("intensity_path").get<std::string>()));
        a.labels = read_label_volume(resolve(ja.at("labels_path").get<std::string>()));
        a.age_days = ja.at("age_days").get<double>();
        a.has_wm = ja.at("has_wm").get<bool>();
        set.atlases.push_back(std::move(a));
    }
    set.validate();
    return set;
}

namespace {

void check_k(const AtlasSet& set, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > set.size())
        throw std::invalid_argument("selection k=" + std::to_string(k) +
                                    " out of range [1, " + std::to_string(set.size()) + "]");
}

} // namespace

AtlasSet select_by_age(const AtlasSet& set, double test_age_days, int k) {
    check_k(set, k);
    std::vector<std::size_t> order(set.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const double di = std::abs(set[i].age_days - test_age_days);
        const double dj = std::abs(set[j].age_days - test_age_days);
        if (di != dj)
            return di < dj;
        return set[i].id < set[j].id;
    });
    AtlasSet out;
    for (int i = 0; i < k; ++i)
        out.atlases.push_back(set[order[i]]);
    return out;
}

namespace {

struct JointHistogram {
    int bins;
    std::vector<double> joint; // bins x bins, row = image a
    std::vector<double> marg_a;
    std::vector<double> marg_b;
    double total = 0.0;
};

// Equal-width bins over each image's own [min,max]; top edge maps into the
// last bin.
int bin_of(double v, double lo, double hi, int bins) {
    if (hi <= lo)
        return 0;
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    if (b < 0)
        b = 0;
    if (b >= bins)
        b = bins - 1;
    return b;
}

std::optional<JointHistogram> build_joint(const ScalarVolume& a, const ScalarVolume& b, int bins,
                                          const std::vector<unsigned char>* include) {
    if (a.meta != b.meta)
        throw std::invalid_argument("mutual_information: grids differ");
    if (bins < 2)
        throw std::invalid_argument("mutual_information: bins must be >= 2");
    double alo = 0, ahi = 0, blo = 0, bhi = 0;
    bool first = true;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (include && !(*include)[i])
            continue;
        if (first) {
            alo = ahi = a.data[i];
            blo = bhi = b.data[i];
            first = false;
        } else {
            alo = std::min(alo, a.data[i]);
            ahi = std::max(ahi, a.data[i]);
            blo = std::min(blo, b.data[i]);
            bhi = std::max(bhi, b.data[i]);
        }
    }
    if (first || ahi <= alo || bhi <= blo)
        return std::nullopt; // degenerate image: MI defined as 0

    JointHistogram h;
    h.bins = bins;
    h.joint.assign(static_cast<std::size_t>(bins) * bins, 0.0);
    h.marg_a.assign(bins, 0.0);
    h.marg_b.assign(bins, 0.0);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (include && !(*include)[i])
            continue;
        const int ba = bin_of(a.data[i], alo, ahi, bins);
        const int bb = bin_of(b.data[i], blo, bhi, bins);
        h.joint[static_cast<std::size_t>(ba) * bins + bb] += 1.0;
        h.marg_a[ba] += 1.0;
        h.marg_b[bb] += 1.0;
        h.total += 1.0;
    }
    return h;
}

} // namespace

double mutual_information(const ScalarVolume& a, const ScalarVolume& b, int bins,
                          const std::vector<unsigned char>* include) {
    const auto h = build_joint(a, b, bins, include);
    if (!h)
        return 0.0;
    double mi = 0.0;
    for (int i = 0; i < h->bins; ++i) {
        for (int j = 0; j < h->bins; ++j) {
            const double pij = h->joint[static_cast<std::size_t>(i) * h->bins + j] / h->total;
            if (pij <= 0.0)
                continue;
            const double pi = h->marg_a[i] / h->total;
            const double pj = h->marg_b[j] / h->total;
            mi += pij * std::log(pij / (pi * pj));
        }
    }
    return std::max(mi, 0.0);
}

double histogram_entropy(const ScalarVolume& a, int bins,
                         const std::vector<unsigned char>* include) {
    const auto h = build_joint(a, a, bins, include);
    if (!h)
        return 0.0;
    double ent = 0.0;
    for (int i = 0; i < h->bins; ++i) {
        const double pi = h->marg_a[i] / h->total;
        if (pi > 0.0)
            ent -= pi * std::log(pi);
    }
    return ent;
}

AtlasSet select_by_mi(const AtlasSet& set, const ScalarVolume& test_image, int k, int bins) {
    check_k(set, k);
    if (test_image.meta != set.grid())
        throw std::invalid_argument("select_by_mi: test image grid differs from atlas grid");

    // foreground = nonzero voxels of the test image
    std::vector<unsigned char> fg(test_image.data.size());
    for (std::size_t i = 0; i < fg.size(); ++i)
        fg[i] = test_image.data[i] != 0.0 ? 1 : 0;

    std::vector<double> mi(set.size());
    for (std::size_t i = 0; i < set.size(); ++i)
        mi[i] = mutual_information(test_image, set[i].intensity, bins, &fg);

    std::vector<std::size_t> order(set.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (mi[i] != mi[j])
            return mi[i] > mi[j];
        return set[i].id < set[j].id;
    });
    AtlasSet out;
    for (int i = 0; i < k; ++i)
        out.atlases.push_back(set[order[i]]);
    return out;
}

} // namespace fuselage
