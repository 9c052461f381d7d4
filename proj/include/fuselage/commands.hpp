#ifndef FUSELAGE_COMMANDS_HPP
#define FUSELAGE_COMMANDS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fuselage {

// Subcommand option structs and entry points. Every cmd_* validates its
// flags before touching any input, writes machine-readable outputs under
// the configured paths, prints a short human summary to stdout, and
// returns 0 on success. Failures throw; the CLI main converts them into a
// JSON error on stderr and a nonzero exit.

struct SegmentOptions {
    std::string image_path;
    std::string mask_path;
    std::string manifest_path;
    std::string out_dir;
    int k = 0;
    std::string select_by = "age"; // age | mi
    std::optional<double> age_days;
    int mi_bins = 32;
    double beta = 0.5;
    double rho = 1.0;
    int bias_degree = 4;
    int components = 1;
    std::uint64_t seed = 0;
    int workers = 1;
    bool write_posteriors = false;
    bool synchronous_sweeps = false;
    double target_mm = 1.0; // inputs are resampled to this isotropic spacing

    void validate() const;
};

struct MetricsOptions {
    std::string a_path;
    std::string b_path;
    std::vector<std::int32_t> labels; // empty = every table structure
    std::string out_path;             // CSV; JSON mirror at out_path + ".json"

    void validate() const;
};

struct PhantomOptions {
    std::uint64_t seed = 1;
    int size = 32;
    int n_atlases = 5;
    double noise = 0.1;
    double bias = 0.0;                // scales a fixed smooth degree-2 pattern
    std::vector<double> bias_coeffs;  // explicit coefficients override --bias
    double deform = 0.0;
    double no_wm_fraction = 0.0;
    std::string out_dir;

    void validate() const;
};

struct JackknifeOptions {
    std::string manifest_path;
    std::string sizes_spec = "1-5"; // comma list and a-b ranges
    std::string out_dir;
    double beta = 0.5;
    double rho = 1.0;
    int bias_degree = 2;
    std::uint64_t seed = 0;
    int workers = 1;

    void validate() const;
};

struct SelectOptions {
    std::string manifest_path;
    int k = 0;
    std::string select_by = "age";
    std::optional<double> age_days;
    std::string image_path; // required for mi
    int mi_bins = 32;
    std::string out_path; // optional JSON

    void validate() const;
};

struct SharpnessOptions {
    std::string image_path;

    void validate() const;
};

int cmd_segment(const SegmentOptions& opt);
int cmd_metrics(const MetricsOptions& opt);
int cmd_phantom(const PhantomOptions& opt);
int cmd_jackknife(const JackknifeOptions& opt);
int cmd_select(const SelectOptions& opt);
int cmd_sharpness(const SharpnessOptions& opt);

std::vector<int> parse_sizes_spec(const std::string& spec);

// distance-field cache directory from FUSELAGE_CACHE ("" when unset)
std::string cache_dir_from_env();

} // namespace fuselage

#endif
