// fuselage: multi-atlas label-fusion segmentation engine.
//
// Subcommands: segment, metrics, phantom, jackknife, select, sharpness.
// Errors are reported as a JSON object on stderr with a nonzero exit.

#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fuselage/commands.hpp"

namespace {

void add_segment(CLI::App& app, fuselage::SegmentOptions& opt, int& rc) {
    auto* cmd = app.add_subcommand("segment", "Segment a test image against a trained atlas set");
    cmd->add_option("--image", opt.image_path, "test intensity volume")->required();
    cmd->add_option("--mask", opt.mask_path, "brain mask volume (defines the domain)")->required();
    cmd->add_option("--manifest", opt.manifest_path, "atlas manifest JSON")->required();
    cmd->add_option("--k", opt.k, "training neighborhood size")->required();
    cmd->add_option("--select-by", opt.select_by, "atlas selection mode: age | mi");
    cmd->add_option("--age-days", opt.age_days, "test subject age in days (for --select-by age)");
    cmd->add_option("--bins", opt.mi_bins, "histogram bins for MI selection");
    cmd->add_option("--beta", opt.beta, "membership MRF smoothness");
    cmd->add_option("--rho", opt.rho, "logOdds slope (1/mm)");
    cmd->add_option("--bias-degree", opt.bias_degree, "bias polynomial degree");
    cmd->add_option("--components", opt.components, "mixture components per label");
    cmd->add_option("--seed", opt.seed, "rng seed recorded in the report");
    cmd->add_option("--workers", opt.workers, "worker threads");
    cmd->add_option("--target-mm", opt.target_mm, "isotropic working resolution, mm");
    cmd->add_flag("--posteriors", opt.write_posteriors, "also write per-label posterior volumes");
    cmd->add_flag("--synchronous", opt.synchronous_sweeps,
                  "synchronous mean-field sweeps instead of checkerboard");
    cmd->add_option("--out-dir", opt.out_dir, "output directory")->required();
    cmd->callback([&] { rc = fuselage::cmd_segment(opt); });
}

void add_metrics(CLI::App& app, fuselage::MetricsOptions& opt, int& rc) {
    auto* cmd = app.add_subcommand("metrics", "Overlap metrics between two label volumes");
    cmd->add_option("--a", opt.a_path, "label volume A")->required();
    cmd->add_option("--b", opt.b_path, "label volume B")->required();
    cmd->add_option("--labels", opt.labels, "restrict to these label ids");
    cmd->add_option("--out", opt.out_path, "CSV output path (JSON mirror alongside)")->required();
    cmd->callback([&] { rc = fuselage::cmd_metrics(opt); });
}

void add_phantom(CLI::App& app, fuselage::PhantomOptions& opt, int& rc) {
    auto* cmd = app.add_subcommand("phantom", "Generate a synthetic ground-truth instance");
    cmd->add_option("--seed", opt.seed, "rng seed");
    cmd->add_option("--size", opt.size, "cubic grid size (>= 16)");
    cmd->add_option("--n-atlases", opt.n_atlases, "number of atlases");
    cmd->add_option("--noise", opt.noise, "mixture sigma as a fraction of class contrast");
    cmd->add_option("--bias", opt.bias, "scale of the built-in degree-2 bias pattern");
    cmd->add_option("--bias-coeffs", opt.bias_coeffs, "explicit degree-2 bias coefficients");
    cmd->add_option("--deform", opt.deform, "max atlas warp displacement, voxels");
    cmd->add_option("--no-wm-fraction", opt.no_wm_fraction,
                    "fraction of atlases without GM/WM delineation");
    cmd->add_option("--out-dir", opt.out_dir, "output directory")->required();
    cmd->callback([&] { rc = fuselage::cmd_phantom(opt); });
}

void add_jackknife(CLI::App& app, fuselage::JackknifeOptions& opt, int& rc) {
    auto* cmd = app.add_subcommand("jackknife", "Leave-one-out evaluation over an atlas family");
    cmd->add_option("--manifest", opt.manifest_path, "family manifest JSON")->required();
    cmd->add_option("--sizes", opt.sizes_spec, "training sizes, e.g. 1-5 or 1,3,5");
    cmd->add_option("--beta", opt.beta, "membership MRF smoothness");
    cmd->add_option("--rho", opt.rho, "logOdds slope (1/mm)");
    cmd->add_option("--bias-degree", opt.bias_degree, "bias polynomial degree");
    cmd->add_option("--seed", opt.seed, "rng seed recorded in the report");
    cmd->add_option("--workers", opt.workers, "worker threads");
    cmd->add_option("--out", opt.out_dir, "output directory")->required();
    cmd->callback([&] { rc = fuselage::cmd_jackknife(opt); });
}

void add_select(CLI::App& app, fuselage::SelectOptions& opt, int& rc) {
    auto* cmd = app.add_subcommand("select", "Preview the training neighborhood selection");
    cmd->add_option("--manifest", opt.manifest_path, "atlas manifest JSON")->required();
    cmd->add_option("--k", opt.k, "neighborhood size")->required();
    cmd->add_option("--select-by", opt.select_by, "age | mi");
    cmd->add_option("--age-days", opt.age_days, "test subject age in days");
    cmd->add_option("--image", opt.image_path, "test image (for MI selection)");
    cmd->add_option("--bins", opt.mi_bins, "histogram bins for MI");
    cmd->add_option("--out", opt.out_path, "optional JSON output");
    cmd->callback([&] { rc = fuselage::cmd_select(opt); });
}

void add_sharpness(CLI::App& app, fuselage::SharpnessOptions& opt, int& rc) {
    auto* cmd = app.add_subcommand("sharpness", "Tenengrad sharpness of the middle slice");
    cmd->add_option("--image", opt.image_path, "intensity volume")->required();
    cmd->callback([&] { rc = fuselage::cmd_sharpness(opt); });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fuselage: Bayesian multi-atlas label fusion"};
    app.require_subcommand(1);

    fuselage::SegmentOptions segment_opt;
    fuselage::MetricsOptions metrics_opt;
    fuselage::PhantomOptions phantom_opt;
    fuselage::JackknifeOptions jackknife_opt;
    fuselage::SelectOptions select_opt;
    fuselage::SharpnessOptions sharpness_opt;
    int rc = 0;

    add_segment(app, segment_opt, rc);
    add_metrics(app, metrics_opt, rc);
    add_phantom(app, phantom_opt, rc);
    add_jackknife(app, jackknife_opt, rc);
    add_select(app, select_opt, rc);
    add_sharpness(app, sharpness_opt, rc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e); // --help
        std::cerr << nlohmann::json{{"error", e.what()}, {"type", "usage"}}.dump() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"type", "validation"}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}, {"type", "runtime"}}.dump() << "\n";
        return 1;
    }
    return rc;
}
