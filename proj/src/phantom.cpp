#include "fuselage/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fuselage/metrics.hpp"
#include "fuselage/rng.hpp"
#include "fuselage/volume_io.hpp"

namespace fuselage {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// class means: L/R pairs share a mean (tissue property, not side); the
// smallest gap between distinct means defines the noise unit
const std::map<std::int32_t, double> kClassMeans = {
    {2, 150.0},  {41, 150.0}, // cerebral white matter
    {3, 90.0},   {42, 90.0},  // cerebral cortex
    {14, 40.0},               // 3rd ventricle
    {9, 120.0},  {48, 120.0}, // thalamus
    {12, 60.0},  {51, 60.0},  // putamen
};

double min_mean_gap() {
    std::vector<double> means;
    for (const auto& [id, mu] : kClassMeans)
        means.push_back(mu);
    std::sort(means.begin(), means.end());
    means.erase(std::unique(means.begin(), means.end()), means.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < means.size(); ++i)
        gap = std::min(gap, means[i] - means[i - 1]);
    return gap;
}

struct Ellipsoid {
    double cx, cy, cz; // center, voxel units
    double ax, ay, az; // semi-axes, voxel units
    bool contains(double x, double y, double z) const {
        const double dx = (x - cx) / ax, dy = (y - cy) / ay, dz = (z - cz) / az;
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
};

LabelVolume build_truth(int n, int n_blobs) {
    GridMeta meta(n, n, n);
    LabelVolume truth(meta, 0);
    const double c = 0.5 * (n - 1);

    const Ellipsoid brain{c, c, c, 0.42 * n, 0.38 * n, 0.40 * n};
    const Ellipsoid wm{c, c, c, 0.42 * 0.78 * n, 0.38 * 0.78 * n, 0.40 * 0.78 * n};
    const Ellipsoid ventricle{c, c, c, 0.13 * n, 0.085 * n, 0.105 * n};
    // thalamus pair then putamen pair; n_blobs in [2,4] takes a prefix
    const Ellipsoid blob_shapes[4] = {
        {c - 0.16 * n, c + 0.04 * n, c, 0.085 * n, 0.065 * n, 0.075 * n},
        {c + 0.16 * n, c + 0.04 * n, c, 0.085 * n, 0.065 * n, 0.075 * n},
        {c - 0.26 * n, c - 0.03 * n, c + 0.02 * n, 0.065 * n, 0.05 * n, 0.055 * n},
        {c + 0.26 * n, c - 0.03 * n, c + 0.02 * n, 0.065 * n, 0.05 * n, 0.055 * n},
    };
    const std::int32_t blob_ids[4] = {9, 48, 12, 51};

    std::size_t v = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x, ++v) {
                if (!brain.contains(x, y, z))
                    continue;
                const bool left = x < c;
                if (!wm.contains(x, y, z)) {
                    truth.data[v] = left ? 3 : 42;
                    continue;
                }
                truth.data[v] = left ? 2 : 41;
                if (ventricle.contains(x, y, z)) {
                    truth.data[v] = 14;
                    continue;
                }
                for (int b = 0; b < n_blobs; ++b)
                    if (blob_shapes[b].contains(x, y, z)) {
                        truth.data[v] = blob_ids[b];
                        break;
                    }
            }
    return truth;
}

// smooth periodic displacement field, normalized to a max magnitude
struct WarpField {
    struct Wave {
        double amp;
        double kx, ky, kz;
        double phase;
    };
    std::array<std::vector<Wave>, 3> waves;
    double scale = 0.0;

    static WarpField make(Rng& rng, int n, double max_magnitude) {
        WarpField w;
        if (max_magnitude <= 0.0)
            return w;
        for (int d = 0; d < 3; ++d)
            for (int m = 0; m < 2; ++m) {
                Wave wave;
                wave.amp = rng.uniform(-1.0, 1.0);
                wave.kx = static_cast<double>(1 + rng.uniform_index(2)) / n;
                wave.ky = static_cast<double>(1 + rng.uniform_index(2)) / n;
                wave.kz = static_cast<double>(1 + rng.uniform_index(2)) / n;
                wave.phase = rng.uniform(0.0, kTwoPi);
                w.waves[d].push_back(wave);
            }
        // normalize so the largest displacement norm over the grid equals
        // max_magnitude
        double worst = 0.0;
        for (int z = 0; z < n; ++z)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    double norm2 = 0.0;
                    for (int d = 0; d < 3; ++d) {
                        const double u = w.raw_component(d, x, y, z);
                        norm2 += u * u;
                    }
                    worst = std::max(worst, norm2);
                }
        w.scale = worst > 0.0 ? max_magnitude / std::sqrt(worst) : 0.0;
        return w;
    }

    double raw_component(int d, double x, double y, double z) const {
        double u = 0.0;
        for (const auto& wave : waves[d])
            u += wave.amp * std::sin(kTwoPi * (wave.kx * x + wave.ky * y + wave.kz * z) +
                                     wave.phase);
        return u;
    }

    void displacement(double x, double y, double z, double out[3]) const {
        for (int d = 0; d < 3; ++d)
            out[d] = scale * raw_component(d, x, y, z);
    }
};

LabelVolume warp_labels(const LabelVolume& truth, const WarpField& warp) {
    LabelVolume out(truth.meta, 0);
    const int n0 = truth.meta.dims[0], n1 = truth.meta.dims[1], n2 = truth.meta.dims[2];
    auto clampi = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
    std::size_t v = 0;
    double d[3];
    for (int z = 0; z < n2; ++z)
        for (int y = 0; y < n1; ++y)
            for (int x = 0; x < n0; ++x, ++v) {
                warp.displacement(x, y, z, d);
                const int sx = clampi(static_cast<int>(std::floor(x + d[0] + 0.5)), n0);
                const int sy = clampi(static_cast<int>(std::floor(y + d[1] + 0.5)), n1);
                const int sz = clampi(static_cast<int>(std::floor(z + d[2] + 0.5)), n2);
                out.data[v] = truth.at(sx, sy, sz);
            }
    return out;
}

ScalarVolume sample_intensities(const LabelVolume& labels, const LabelMixture& mix, Rng& rng) {
    ScalarVolume img(labels.meta, 0.0);
    for (std::size_t v = 0; v < labels.data.size(); ++v) {
        const std::int32_t id = labels.data[v];
        if (id == 0)
            continue;
        const auto& comps = mix.components(id);
        // single-component model; the generator keeps Eq-form sampling exact
        img.data[v] = rng.normal(comps[0].mean, std::sqrt(comps[0].variance));
    }
    return img;
}

} // namespace

PhantomInstance generate(const PhantomConfig& cfg) {
    if (cfg.size < 16)
        throw std::invalid_argument("phantom: grid too small for the geometry (< 16^3)");
    if (cfg.n_atlases < 1)
        throw std::invalid_argument("phantom: need at least one atlas");
    if (cfg.noise_sigma < 0.0)
        throw std::invalid_argument("phantom: negative noise");

    PhantomInstance inst;
    Rng geom_rng(derive_seed(cfg.seed, 0));
    const int n_blobs = 2 + static_cast<int>(geom_rng.uniform_index(3));
    inst.truth = build_truth(cfg.size, n_blobs);

    // ground-truth mixture: sigma never exactly zero (the model keeps a
    // variance floor), but small enough that noiseless phantoms are crisp
    const double gap = min_mean_gap();
    const double sigma = std::max(cfg.noise_sigma * gap, 1e-6);
    inst.truth_params = LabelMixture(1e-12);
    for (const auto& [id, mu] : kClassMeans)
        inst.truth_params.set_components(id, {{1.0, mu, sigma * sigma}});

    // truth bias on the degree-2 basis
    inst.truth_bias = BiasModel(inst.truth.meta, 2);
    if (!cfg.bias_coeffs.empty()) {
        if (cfg.bias_coeffs.size() > inst.truth_bias.n_basis())
            throw std::invalid_argument("phantom: more bias coefficients than basis functions");
        std::vector<double> c(inst.truth_bias.n_basis(), 0.0);
        std::copy(cfg.bias_coeffs.begin(), cfg.bias_coeffs.end(), c.begin());
        inst.truth_bias.set_coeffs(c);
    }

    Rng image_rng(derive_seed(cfg.seed, 1));
    inst.istar = sample_intensities(inst.truth, inst.truth_params, image_rng);
    inst.image = apply_bias(inst.istar, inst.truth_bias);

    inst.mask = LabelVolume(inst.truth.meta, 0);
    for (std::size_t v = 0; v < inst.truth.data.size(); ++v)
        inst.mask.data[v] = inst.truth.data[v] != 0 ? 1 : 0;

    // generator's own record of the Eq-3 log-density at each foreground voxel
    inst.record_loglik.assign(inst.truth.data.size(), 0.0);
    const double log_norm = -0.5 * std::log(kTwoPi * sigma * sigma);
    for (std::size_t v = 0; v < inst.truth.data.size(); ++v) {
        if (inst.truth.data[v] == 0)
            continue;
        const double mu = kClassMeans.at(inst.truth.data[v]);
        const double d = inst.istar.data[v] - mu;
        inst.record_loglik[v] = log_norm - 0.5 * d * d / (sigma * sigma);
    }

    // atlases: warped truth labels with per-atlas regenerated intensities
    const int N = cfg.n_atlases;
    const int n_flagged = static_cast<int>(std::llround(cfg.no_wm_fraction * N));
    for (int a = 0; a < N; ++a) {
        Rng rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(a)));
        const double age =
            N > 1 ? 730.0 * static_cast<double>(a) / static_cast<double>(N - 1) : 365.0;
        double magnitude = cfg.deformation_voxels;
        if (cfg.age_scaled_deformation && N > 1)
            magnitude *= 0.25 + 1.5 * std::abs(age - 365.0) / 365.0;
        const WarpField warp = WarpField::make(rng, cfg.size, magnitude);

        Atlas atlas;
        atlas.id = "phantom" + std::string(a < 10 ? "0" : "") + std::to_string(a);
        atlas.labels = warp_labels(inst.truth, warp);
        atlas.intensity = sample_intensities(atlas.labels, inst.truth_params, rng);
        atlas.age_days = age;
        atlas.has_wm = a >= n_flagged;
        inst.atlases.atlases.push_back(std::move(atlas));
    }
    inst.atlases.validate();
    return inst;
}

PhantomInstance write_phantom(const PhantomConfig& cfg, const std::string& out_dir) {
    PhantomInstance inst = generate(cfg);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    write_volume(inst.truth, (dir / "truth.nii").string());
    write_volume(inst.image, (dir / "image.nii").string());
    write_volume(inst.mask, (dir / "mask.nii").string());

    nlohmann::json atlases = nlohmann::json::array();
    for (const auto& a : inst.atlases.atlases) {
        const std::string ipath = a.id + "_intensity.nii";
        const std::string lpath = a.id + "_labels.nii";
        write_volume(a.intensity, (dir / ipath).string());
        write_volume(a.labels, (dir / lpath).string());
        atlases.push_back({{"id", a.id},
                           {"intensity_path", ipath},
                           {"labels_path", lpath},
                           {"age_days", a.age_days},
                           {"has_wm", a.has_wm}});
    }
    const nlohmann::json manifest{{"atlases", atlases}};
    inst.manifest_path = (dir / "manifest.json").string();
    std::ofstream mf(inst.manifest_path, std::ios::trunc);
    mf << manifest.dump(2) << "\n";

    const nlohmann::json truth_json{{"mixture", inst.truth_params.to_json()},
                                    {"bias", inst.truth_bias.to_json()},
                                    {"seed", cfg.seed},
                                    {"noise_sigma", cfg.noise_sigma},
                                    {"deformation_voxels", cfg.deformation_voxels}};
    std::ofstream tf((dir / "truth_params.json").string(), std::ios::trunc);
    tf << truth_json.dump(2) << "\n";
    if (!mf || !tf)
        throw std::runtime_error("I/O failure writing phantom to " + out_dir);
    return inst;
}

ScalarVolume brute_force_edt(const LabelVolume& labels, std::int32_t label_id, double d_max) {
    const std::size_t V = labels.meta.voxel_count();
    if (V > 16u * 16u * 16u)
        throw std::invalid_argument("brute_force_edt: volume exceeds the 16^3 size guard");
    const auto& m = labels.meta;
    const double sx2 = m.spacing[0] * m.spacing[0];
    const double sy2 = m.spacing[1] * m.spacing[1];
    const double sz2 = m.spacing[2] * m.spacing[2];

    ScalarVolume out(m);
    for (std::size_t v = 0; v < V; ++v) {
        const bool inside = labels.data[v] == label_id;
        const auto cv = m.coords(v);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t w = 0; w < V; ++w) {
            const bool w_inside = labels.data[w] == label_id;
            if (w_inside == inside)
                continue;
            const auto cw = m.coords(w);
            const double dx = static_cast<double>(cv[0] - cw[0]);
            const double dy = static_cast<double>(cv[1] - cw[1]);
            const double dz = static_cast<double>(cv[2] - cw[2]);
            // same association order as the separable transform
            const double d2 = dz * dz * sz2 + (dy * dy * sy2 + dx * dx * sx2);
            best = std::min(best, d2);
        }
        const double d = best == std::numeric_limits<double>::infinity()
                             ? d_max
                             : std::min(std::sqrt(best), d_max);
        out.data[v] = inside ? -d : d;
    }
    return out;
}

ExactMembership exact_membership_posterior(const TinyModelView& model) {
    const std::size_t V = model.grid.voxel_count();
    const std::size_t N = model.n_atlases;
    if (!model.log_evidence)
        throw std::invalid_argument("exact_membership_posterior: missing evidence");

    std::vector<std::size_t> active;
    for (std::size_t v = 0; v < V; ++v)
        if (model.active.empty() || model.active[v])
            active.push_back(v);
    const std::size_t Va = active.size();

    double log_configs = Va * std::log2(static_cast<double>(N));
    if (log_configs > 20.0 + 1e-9)
        throw std::invalid_argument("exact_membership_posterior: instance too large (N^|V| > 2^20)");
    std::size_t n_configs = 1;
    for (std::size_t i = 0; i < Va; ++i)
        n_configs *= N;

    // unordered neighbor pairs among active voxels
    std::vector<std::pair<std::size_t, std::size_t>> edges; // indices into `active`
    {
        std::vector<std::size_t> pos(V, SIZE_MAX);
        for (std::size_t i = 0; i < Va; ++i)
            pos[active[i]] = i;
        for (std::size_t i = 0; i < Va; ++i) {
            const auto c = model.grid.coords(active[i]);
            const int d[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
            for (const auto& dir : d) {
                const int x = c[0] + dir[0], y = c[1] + dir[1], z = c[2] + dir[2];
                if (!model.grid.contains(x, y, z))
                    continue;
                const std::size_t w = model.grid.index(x, y, z);
                if (pos[w] != SIZE_MAX)
                    edges.emplace_back(i, pos[w]);
            }
        }
    }

    const auto& log_ev = *model.log_evidence;
    auto is_allowed = [&](std::size_t voxel, std::size_t n) {
        return !model.allowed || (*model.allowed)[voxel * N + n] != 0;
    };

    std::vector<double> log_w(n_configs, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> config(Va, 0);
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < n_configs; ++ci) {
        // decode mixed-radix configuration
        std::size_t rest = ci;
        bool ok = true;
        for (std::size_t i = 0; i < Va; ++i) {
            config[i] = rest % N;
            rest /= N;
            if (!is_allowed(active[i], config[i]))
                ok = false;
        }
        if (!ok)
            continue;
        double lw = 0.0;
        for (std::size_t i = 0; i < Va; ++i)
            lw += log_ev[config[i] * V + active[i]];
        for (const auto& [i, j] : edges)
            if (config[i] == config[j])
                lw += model.beta;
        log_w[ci] = lw;
        max_lw = std::max(max_lw, lw);
    }
    if (!std::isfinite(max_lw))
        throw std::runtime_error("exact_membership_posterior: no admissible configuration");

    double z = 0.0;
    for (double lw : log_w)
        if (std::isfinite(lw))
            z += std::exp(lw - max_lw);

    ExactMembership out;
    out.log_evidence = max_lw + std::log(z);
    out.marginals.assign(V * N, 0.0);
    for (std::size_t ci = 0; ci < n_configs; ++ci) {
        if (!std::isfinite(log_w[ci]))
            continue;
        const double p = std::exp(log_w[ci] - max_lw) / z;
        std::size_t rest = ci;
        for (std::size_t i = 0; i < Va; ++i) {
            out.marginals[active[i] * N + (rest % N)] += p;
            rest /= N;
        }
    }
    return out;
}

std::vector<double> exact_label_marginal(const ExactMembership& exact, std::size_t voxel,
                                         const std::vector<double>& conditional,
                                         std::size_t n_atlases, std::size_t n_labels) {
    std::vector<double> p(n_labels, 0.0);
    for (std::size_t n = 0; n < n_atlases; ++n) {
        const double qn = exact.marginals[voxel * n_atlases + n];
        if (qn <= 0.0)
            continue;
        for (std::size_t l = 0; l < n_labels; ++l)
            p[l] += qn * conditional[n * n_labels + l];
    }
    return p;
}

JackknifeResult jackknife(const AtlasSet& family, const std::vector<int>& sizes,
                          const VemConfig& cfg) {
    family.validate();
    if (sizes.empty())
        throw std::invalid_argument("jackknife: no training sizes given");
    const int max_k = *std::max_element(sizes.begin(), sizes.end());
    if (static_cast<std::size_t>(max_k) + 1 > family.size())
        throw std::invalid_argument("jackknife: family too small for requested sizes");

    JackknifeResult result;
    for (std::size_t held = 0; held < family.size(); ++held) {
        const Atlas& test = family[held];
        result.subject_age[test.id] = test.age_days;

        AtlasSet remaining;
        for (std::size_t i = 0; i < family.size(); ++i)
            if (i != held)
                remaining.atlases.push_back(family[i]);

        LabelVolume mask(test.labels.meta, 0);
        for (std::size_t v = 0; v < test.labels.data.size(); ++v)
            mask.data[v] = test.labels.data[v] != 0 ? 1 : 0;

        double best_gd = -1.0;
        int best_k = 0;
        for (int k : sizes) {
            const AtlasSet selected = select_by_age(remaining, test.age_days, k);
            const SegmentationResult seg = run_vem(selected, test.intensity, mask, cfg);
            const OverlapReport rep = report(test.labels, seg.map_labels, label_table());

            result.rows.push_back({test.id, k, -1, rep.generalized, rep.generalized});
            for (const auto& e : rep.labels)
                if (e.dice)
                    result.rows.push_back({test.id, k, e.id, *e.dice, rep.generalized});

            if (rep.generalized > best_gd) {
                best_gd = rep.generalized;
                best_k = k;
            }
        }
        result.winning_k[test.id] = best_k;
        result.winning_k_histogram[best_k] += 1;
    }
    return result;
}

void write_jackknife_outputs(const JackknifeResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::ofstream csv((fs::path(out_dir) / "jackknife.csv").string(), std::ios::trunc);
    csv << "subject_id,k,label_id,dice,gen_dice\n";
    for (const auto& r : result.rows) {
        csv << r.subject_id << "," << r.k << ",";
        if (r.label_id < 0)
            csv << "GENERALIZED";
        else
            csv << r.label_id;
        csv << "," << r.dice << "," << r.gen_dice << "\n";
    }

    std::ofstream wk((fs::path(out_dir) / "winning_k.csv").string(), std::ios::trunc);
    wk << "subject_id,age_days,winning_k\n";
    for (const auto& [id, k] : result.winning_k)
        wk << id << "," << result.subject_age.at(id) << "," << k << "\n";
    wk << "\nk,count\n";
    for (const auto& [k, count] : result.winning_k_histogram)
        wk << k << "," << count << "\n";

    // age bins mirroring the family groups: newborn, 2-4mo, 5-8mo, 9-14mo, 15mo+
    const double edges[5] = {60.0, 150.0, 270.0, 450.0,
                             std::numeric_limits<double>::infinity()};
    const char* names[5] = {"newborn", "2-4mo", "5-8mo", "9-14mo", "15mo+"};
    std::map<std::pair<int, int>, std::pair<double, double>> acc; // (group,k) -> (sum, max)
    std::map<std::pair<int, int>, int> counts;
    for (const auto& r : result.rows) {
        if (r.label_id >= 0)
            continue;
        const double age = result.subject_age.at(r.subject_id);
        int g = 0;
        while (age >= edges[g])
            ++g;
        auto key = std::make_pair(g, r.k);
        auto& a = acc[key];
        a.first += r.gen_dice;
        a.second = std::max(a.second, r.gen_dice);
        counts[key] += 1;
    }
    std::ofstream ag((fs::path(out_dir) / "age_group_summary.csv").string(), std::ios::trunc);
    ag << "age_group,k,mean_gen_dice,max_gen_dice,n\n";
    for (const auto& [key, a] : acc)
        ag << names[key.first] << "," << key.second << "," << a.first / counts[key] << ","
           << a.second << "," << counts[key] << "\n";
    if (!csv || !wk || !ag)
        throw std::runtime_error("I/O failure writing jackknife outputs to " + out_dir);
}

ScalarVolume gaussian_blur(const ScalarVolume& vol, double sigma_voxels) {
    if (sigma_voxels <= 0.0)
        return vol;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma_voxels));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma_voxels * sigma_voxels));
        ksum += kernel[i + radius];
    }
    for (auto& k : kernel)
        k /= ksum;

    ScalarVolume cur = vol;
    for (int axis = 0; axis < 3; ++axis) {
        ScalarVolume next(vol.meta);
        const auto& m = vol.meta;
        for (int z = 0; z < m.dims[2]; ++z)
            for (int y = 0; y < m.dims[1]; ++y)
                for (int x = 0; x < m.dims[0]; ++x) {
                    double s = 0.0;
                    for (int i = -radius; i <= radius; ++i) {
                        int xx = x, yy = y, zz = z;
                        if (axis == 0) xx = std::clamp(x + i, 0, m.dims[0] - 1);
                        if (axis == 1) yy = std::clamp(y + i, 0, m.dims[1] - 1);
                        if (axis == 2) zz = std::clamp(z + i, 0, m.dims[2] - 1);
                        s += kernel[i + radius] * cur.at(xx, yy, zz);
                    }
                    next.at(x, y, z) = s;
                }
        cur = std::move(next);
    }
    return cur;
}

} // namespace fuselage
