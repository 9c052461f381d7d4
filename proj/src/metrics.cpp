#include "fuselage/metrics.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace fuselage {

namespace {

void check_grids(const LabelVolume& a, const LabelVolume& b) {
    if (a.meta != b.meta)
        throw std::invalid_argument("overlap metrics: grid mismatch");
}

} // namespace

std::optional<double> dice(const LabelVolume& a, const LabelVolume& b, std::int32_t label) {
    check_grids(a, b);
    std::size_t na = 0, nb = 0, nab = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool ia = a.data[i] == label;
        const bool ib = b.data[i] == label;
        na += ia;
        nb += ib;
        nab += ia && ib;
    }
    if (na == 0 || nb == 0)
        return std::nullopt;
    return 2.0 * static_cast<double>(nab) / static_cast<double>(na + nb);
}

double generalized_dice(const LabelVolume& a, const LabelVolume& b,
                        const std::set<std::int32_t>& s) {
    check_grids(a, b);
    if (s.empty())
        throw std::invalid_argument("generalized_dice: empty label set");
    std::size_t in_a = 0, in_b = 0, agree = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool ia = s.count(a.data[i]) > 0;
        const bool ib = s.count(b.data[i]) > 0;
        in_a += ia;
        in_b += ib;
        agree += ia && ib && a.data[i] == b.data[i];
    }
    if (in_a + in_b == 0)
        return 1.0; // both empty of S: vacuous agreement
    return 2.0 * static_cast<double>(agree) / static_cast<double>(in_a + in_b);
}

double tenengrad(const ScalarVolume& vol) {
    const auto& m = vol.meta;
    if (m.dims[2] < 3)
        throw std::invalid_argument("tenengrad: need nz >= 3");
    const int z = m.dims[2] / 2;
    const int nx = m.dims[0], ny = m.dims[1];
    if (nx < 3 || ny < 3)
        return 0.0;

    double mx = 0.0;
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            mx = std::max(mx, vol.at(x, y, z));
    if (mx <= 0.0)
        return 0.0;

    auto px = [&](int x, int y) { return vol.at(x, y, z) / mx; };
    double energy = 0.0;
    std::size_t count = 0;
    for (int y = 1; y < ny - 1; ++y) {
        for (int x = 1; x < nx - 1; ++x) {
            const double gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            energy += gx * gx + gy * gy;
            ++count;
        }
    }
    return count > 0 ? energy / static_cast<double>(count) : 0.0;
}

OverlapReport report(const LabelVolume& a, const LabelVolume& b, const LabelTable& table) {
    check_grids(a, b);

    std::map<std::int32_t, LabelOverlap> found;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const std::int32_t la = a.data[i];
        const std::int32_t lb = b.data[i];
        if (LabelTable::is_structure(la) && table.contains(la)) {
            auto& e = found[la];
            e.id = la;
            e.in_a = true;
            ++e.count_a;
        }
        if (LabelTable::is_structure(lb) && table.contains(lb)) {
            auto& e = found[lb];
            e.id = lb;
            e.in_b = true;
            ++e.count_b;
        }
        if (la == lb && LabelTable::is_structure(la) && table.contains(la))
            ++found[la].count_both;
    }

    OverlapReport rep;
    std::set<std::int32_t> s;
    for (auto& [id, e] : found) {
        e.name = table.name_of(id);
        if (e.in_a && e.in_b) {
            e.dice = 2.0 * static_cast<double>(e.count_both) /
                     static_cast<double>(e.count_a + e.count_b);
            s.insert(id);
        }
        rep.labels.push_back(e);
    }
    rep.label_set.assign(s.begin(), s.end());

    if (s.empty()) {
        rep.generalized = 1.0;
        return rep;
    }
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool ia = s.count(a.data[i]) > 0;
        const bool ib = s.count(b.data[i]) > 0;
        rep.in_s_a += ia;
        rep.in_s_b += ib;
        rep.agree += ia && ib && a.data[i] == b.data[i];
    }
    rep.generalized =
        2.0 * static_cast<double>(rep.agree) / static_cast<double>(rep.in_s_a + rep.in_s_b);
    return rep;
}

void write_report_csv(const OverlapReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write report: " + path);
    out << "label_id,label_name,dice,|A|,|B|,|AnB|\n";
    for (const auto& e : rep.labels) {
        out << e.id << "," << e.name << ",";
        if (e.dice)
            out << *e.dice;
        else
            out << "NA";
        out << "," << e.count_a << "," << e.count_b << "," << e.count_both << "\n";
    }
    out << "GENERALIZED,," << rep.generalized << "," << rep.in_s_a << "," << rep.in_s_b << ","
        << rep.agree << "\n";
    if (!out)
        throw std::runtime_error("I/O failure writing " + path);
}

nlohmann::json report_to_json(const OverlapReport& rep) {
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& e : rep.labels) {
        nlohmann::json j{{"label_id", e.id},      {"label_name", e.name},
                         {"in_a", e.in_a},        {"in_b", e.in_b},
                         {"count_a", e.count_a},  {"count_b", e.count_b},
                         {"count_both", e.count_both}};
        if (e.dice)
            j["dice"] = *e.dice;
        else
            j["dice"] = nullptr;
        labels.push_back(j);
    }
    return {{"labels", labels},
            {"label_set", rep.label_set},
            {"generalized_dice", rep.generalized},
            {"in_s_a", rep.in_s_a},
            {"in_s_b", rep.in_s_b},
            {"agree", rep.agree}};
}

} // namespace fuselage
