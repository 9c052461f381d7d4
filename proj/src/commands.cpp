#include "fuselage/commands.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fuselage/atlas.hpp"
#include "fuselage/metrics.hpp"
#include "fuselage/phantom.hpp"
#include "fuselage/resample.hpp"
#include "fuselage/vem.hpp"
#include "fuselage/volume_io.hpp"

namespace fuselage {

namespace fs = std::filesystem;

std::string cache_dir_from_env() {
    const char* env = std::getenv("FUSELAGE_CACHE");
    return env ? std::string(env) : std::string();
}

std::vector<int> parse_sizes_spec(const std::string& spec) {
    std::vector<int> sizes;
    std::size_t pos = 0;
    while (pos < spec.size()) {
        std::size_t comma = spec.find(',', pos);
        if (comma == std::string::npos)
            comma = spec.size();
        const std::string token = spec.substr(pos, comma - pos);
        const std::size_t dash = token.find('-');
        try {
            if (dash == std::string::npos) {
                sizes.push_back(std::stoi(token));
            } else {
                const int lo = std::stoi(token.substr(0, dash));
                const int hi = std::stoi(token.substr(dash + 1));
                if (hi < lo)
                    throw std::invalid_argument("range");
                for (int v = lo; v <= hi; ++v)
                    sizes.push_back(v);
            }
        } catch (const std::exception&) {
            throw std::invalid_argument("bad sizes spec token '" + token + "'");
        }
        pos = comma + 1;
    }
    if (sizes.empty())
        throw std::invalid_argument("empty sizes spec");
    return sizes;
}

namespace {

void require(bool ok, const std::string& message) {
    if (!ok)
        throw std::invalid_argument(message);
}

nlohmann::json vem_config_json(const VemConfig& cfg) {
    return {{"beta", cfg.beta},
            {"rho", cfg.rho},
            {"max_outer_iters", cfg.max_outer_iters},
            {"meanfield_sweeps_per_estep", cfg.meanfield_sweeps_per_estep},
            {"convergence_tol", cfg.convergence_tol},
            {"seed", cfg.seed},
            {"bias_degree", cfg.bias_degree},
            {"components_per_label", cfg.components_per_label},
            {"d_max", cfg.d_max},
            {"checkerboard", cfg.checkerboard},
            {"workers", cfg.workers}};
}

} // namespace

void SegmentOptions::validate() const {
    require(!image_path.empty(), "segment: --image is required");
    require(!mask_path.empty(), "segment: --mask is required");
    require(!manifest_path.empty(), "segment: --manifest is required");
    require(!out_dir.empty(), "segment: --out-dir is required");
    require(k >= 1, "segment: --k must be >= 1");
    require(select_by == "age" || select_by == "mi",
            "segment: --select-by must be 'age' or 'mi'");
    require(select_by != "age" || age_days.has_value(),
            "segment: --select-by age requires --age-days");
    require(!age_days || *age_days >= 0.0, "segment: --age-days must be >= 0");
    require(mi_bins >= 2, "segment: --bins must be >= 2");
    require(beta >= 0.0, "segment: --beta must be >= 0");
    require(rho > 0.0, "segment: --rho must be > 0");
    require(bias_degree >= 0, "segment: --bias-degree must be >= 0");
    require(components >= 1 && components <= 3, "segment: --components must be in [1,3]");
    require(workers >= 1, "segment: --workers must be >= 1");
    require(target_mm > 0.0, "segment: --target-mm must be > 0");
}

int cmd_segment(const SegmentOptions& opt) {
    opt.validate();
    const auto t0 = std::chrono::steady_clock::now();

    AtlasSet set = load_manifest(opt.manifest_path);
    require(static_cast<std::size_t>(opt.k) <= set.size(),
            "segment: --k exceeds the manifest's atlas count");

    ScalarVolume image = read_scalar_volume(opt.image_path);
    LabelVolume mask = read_label_volume(opt.mask_path);

    // the whole problem is solved on an isotropic grid
    image = resample_isotropic(image, opt.target_mm);
    mask = resample_isotropic(mask, opt.target_mm);
    for (auto& a : set.atlases) {
        a.intensity = resample_isotropic(a.intensity, opt.target_mm);
        a.labels = resample_isotropic(a.labels, opt.target_mm);
    }
    set.validate();

    const AtlasSet selected = opt.select_by == "age"
                                  ? select_by_age(set, *opt.age_days, opt.k)
                                  : select_by_mi(set, image, opt.k, opt.mi_bins);

    VemConfig cfg;
    cfg.beta = opt.beta;
    cfg.rho = opt.rho;
    cfg.bias_degree = opt.bias_degree;
    cfg.components_per_label = opt.components;
    cfg.seed = opt.seed;
    cfg.workers = opt.workers;
    cfg.checkerboard = !opt.synchronous_sweeps;
    cfg.distance_cache_dir = cache_dir_from_env();

    const SegmentationResult result = run_vem(selected, image, mask, cfg);

    fs::create_directories(opt.out_dir);
    const fs::path dir(opt.out_dir);
    write_volume(result.map_labels, (dir / "map_labels.nii").string());
    if (opt.write_posteriors)
        for (std::size_t l = 0; l < result.label_order.size(); ++l)
            write_volume(result.label_posterior[l],
                         (dir / ("posterior_" + std::to_string(result.label_order[l]) + ".nii"))
                             .string());

    nlohmann::json params{{"mixture", result.params.to_json()},
                          {"bias", result.bias.to_json()}};
    std::ofstream pf((dir / "params.json").string(), std::ios::trunc);
    pf << params.dump(2) << "\n";

    const double wallclock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json selected_ids = nlohmann::json::array();
    for (const auto& a : selected.atlases)
        selected_ids.push_back(a.id);
    nlohmann::json report{{"config", vem_config_json(cfg)},
                          {"select_by", opt.select_by},
                          {"selected_atlases", selected_ids},
                          {"elbo_trace", result.free_energy_trace},
                          {"iters", result.iterations},
                          {"wallclock", wallclock}};
    std::ofstream rf((dir / "report.json").string(), std::ios::trunc);
    rf << report.dump(2) << "\n";
    if (!pf || !rf)
        throw std::runtime_error("I/O failure writing outputs to " + opt.out_dir);

    std::cout << "segment: " << result.iterations << " outer iterations, final free energy "
              << result.free_energy_trace.back() << ", outputs in " << opt.out_dir << "\n";
    return 0;
}

void MetricsOptions::validate() const {
    require(!a_path.empty(), "metrics: --a is required");
    require(!b_path.empty(), "metrics: --b is required");
    require(!out_path.empty(), "metrics: --out is required");
}

int cmd_metrics(const MetricsOptions& opt) {
    opt.validate();
    const LabelVolume a = read_label_volume(opt.a_path);
    const LabelVolume b = read_label_volume(opt.b_path);

    OverlapReport rep = report(a, b, label_table());
    if (!opt.labels.empty()) {
        // restrict to the requested ids
        const std::set<std::int32_t> keep(opt.labels.begin(), opt.labels.end());
        OverlapReport filtered;
        std::set<std::int32_t> s;
        for (const auto& e : rep.labels)
            if (keep.count(e.id)) {
                filtered.labels.push_back(e);
                if (e.dice)
                    s.insert(e.id);
            }
        if (!s.empty()) {
            filtered.generalized = generalized_dice(a, b, s);
            for (std::size_t i = 0; i < a.data.size(); ++i) {
                const bool ia = s.count(a.data[i]) > 0;
                const bool ib = s.count(b.data[i]) > 0;
                filtered.in_s_a += ia;
                filtered.in_s_b += ib;
                filtered.agree += ia && ib && a.data[i] == b.data[i];
            }
        } else {
            filtered.generalized = 1.0;
        }
        filtered.label_set.assign(s.begin(), s.end());
        rep = std::move(filtered);
    }

    write_report_csv(rep, opt.out_path);
    std::ofstream jf(opt.out_path + ".json", std::ios::trunc);
    jf << report_to_json(rep).dump(2) << "\n";
    if (!jf)
        throw std::runtime_error("I/O failure writing " + opt.out_path + ".json");

    std::cout << "metrics: GENERALIZED " << rep.generalized << " over " << rep.label_set.size()
              << " labels -> " << opt.out_path << "\n";
    return 0;
}

void PhantomOptions::validate() const {
    require(!out_dir.empty(), "phantom: --out-dir is required");
    require(size >= 16, "phantom: --size must be >= 16");
    require(n_atlases >= 1, "phantom: --n-atlases must be >= 1");
    require(noise >= 0.0, "phantom: --noise must be >= 0");
    require(deform >= 0.0, "phantom: --deform must be >= 0");
    require(no_wm_fraction >= 0.0 && no_wm_fraction <= 1.0,
            "phantom: --no-wm-fraction must be in [0,1]");
}

int cmd_phantom(const PhantomOptions& opt) {
    opt.validate();
    PhantomConfig cfg;
    cfg.seed = opt.seed;
    cfg.size = opt.size;
    cfg.n_atlases = opt.n_atlases;
    cfg.noise_sigma = opt.noise;
    cfg.deformation_voxels = opt.deform;
    cfg.no_wm_fraction = opt.no_wm_fraction;
    if (!opt.bias_coeffs.empty()) {
        cfg.bias_coeffs = opt.bias_coeffs;
    } else if (opt.bias != 0.0) {
        // fixed smooth degree-2 pattern scaled by --bias
        cfg.bias_coeffs = {0.0,         opt.bias,         -0.6 * opt.bias, 0.8 * opt.bias,
                           0.3 * opt.bias, -0.2 * opt.bias, 0.25 * opt.bias, 0.2 * opt.bias,
                           -0.15 * opt.bias, 0.1 * opt.bias};
    }
    const PhantomInstance inst = write_phantom(cfg, opt.out_dir);
    std::cout << "phantom: seed " << opt.seed << ", " << inst.atlases.size() << " atlases, "
              << opt.size << "^3 grid -> " << inst.manifest_path << "\n";
    return 0;
}

void JackknifeOptions::validate() const {
    require(!manifest_path.empty(), "jackknife: --manifest is required");
    require(!out_dir.empty(), "jackknife: --out is required");
    require(workers >= 1, "jackknife: --workers must be >= 1");
    parse_sizes_spec(sizes_spec);
}

int cmd_jackknife(const JackknifeOptions& opt) {
    opt.validate();
    const AtlasSet family = load_manifest(opt.manifest_path);
    const std::vector<int> sizes = parse_sizes_spec(opt.sizes_spec);

    VemConfig cfg;
    cfg.beta = opt.beta;
    cfg.rho = opt.rho;
    cfg.bias_degree = opt.bias_degree;
    cfg.seed = opt.seed;
    cfg.workers = opt.workers;
    cfg.distance_cache_dir = cache_dir_from_env();

    const JackknifeResult result = jackknife(family, sizes, cfg);
    write_jackknife_outputs(result, opt.out_dir);

    std::size_t runs = 0;
    for (const auto& r : result.rows)
        runs += r.label_id < 0 ? 1 : 0;
    std::cout << "jackknife: " << runs << " runs over " << family.size()
              << " subjects -> " << opt.out_dir << "/jackknife.csv\n";
    return 0;
}

void SelectOptions::validate() const {
    require(!manifest_path.empty(), "select: --manifest is required");
    require(k >= 1, "select: --k must be >= 1");
    require(select_by == "age" || select_by == "mi", "select: --select-by must be 'age' or 'mi'");
    require(select_by != "age" || age_days.has_value(),
            "select: --select-by age requires --age-days");
    require(select_by != "mi" || !image_path.empty(), "select: --select-by mi requires --image");
    require(mi_bins >= 2, "select: --bins must be >= 2");
}

int cmd_select(const SelectOptions& opt) {
    opt.validate();
    const AtlasSet set = load_manifest(opt.manifest_path);
    require(static_cast<std::size_t>(opt.k) <= set.size(),
            "select: --k exceeds the manifest's atlas count");

    AtlasSet chosen;
    if (opt.select_by == "age") {
        chosen = select_by_age(set, *opt.age_days, opt.k);
    } else {
        const ScalarVolume image = read_scalar_volume(opt.image_path);
        chosen = select_by_mi(set, image, opt.k, opt.mi_bins);
    }

    nlohmann::json ids = nlohmann::json::array();
    for (const auto& a : chosen.atlases) {
        std::cout << a.id << " (age " << a.age_days << " d)\n";
        ids.push_back({{"id", a.id}, {"age_days", a.age_days}, {"has_wm", a.has_wm}});
    }
    if (!opt.out_path.empty()) {
        std::ofstream out(opt.out_path, std::ios::trunc);
        out << nlohmann::json{{"selected", ids}}.dump(2) << "\n";
        if (!out)
            throw std::runtime_error("I/O failure writing " + opt.out_path);
    }
    return 0;
}

void SharpnessOptions::validate() const {
    require(!image_path.empty(), "sharpness: --image is required");
}

int cmd_sharpness(const SharpnessOptions& opt) {
    opt.validate();
    const ScalarVolume image = read_scalar_volume(opt.image_path);
    std::cout << tenengrad(image) << "\n";
    return 0;
}

} // namespace fuselage
