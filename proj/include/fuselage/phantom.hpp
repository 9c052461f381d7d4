#ifndef FUSELAGE_PHANTOM_HPP
#define FUSELAGE_PHANTOM_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fuselage/atlas.hpp"
#include "fuselage/bias.hpp"
#include "fuselage/mixture.hpp"
#include "fuselage/vem.hpp"
#include "fuselage/volume.hpp"

namespace fuselage {

// Synthetic ground truth: nested ellipsoids (cortex shell, white-matter
// interior, 2-4 subcortical blobs, a central ventricle) carrying the
// standard label ids, imaged exactly under the generative model. The same
// seed always reproduces the same instance bit for bit.
struct PhantomConfig {
    std::uint64_t seed = 1;
    int size = 32;    // cubic grid, >= 16
    int n_atlases = 5;
    // mixture sigma as a fraction of the smallest gap between distinct
    // class means; the image noise enters through the model's own
    // per-label variance
    double noise_sigma = 0.1;
    // ground-truth bias coefficients on the degree-2 basis (c_0 first,
    // zero-padded); empty = no bias
    std::vector<double> bias_coeffs;
    double deformation_voxels = 0.0; // max displacement of atlas warps
    double no_wm_fraction = 0.0;     // leading fraction of atlases flagged has_wm=false
    // scales each atlas's warp amplitude by its age distance to the family
    // midpoint, so closer-in-age members look more alike (family studies)
    bool age_scaled_deformation = false;
};

struct PhantomInstance {
    LabelVolume truth;
    ScalarVolume istar; // clean mixture sample, before bias
    ScalarVolume image; // istar with the ground-truth bias applied
    LabelVolume mask;   // truth > 0
    AtlasSet atlases;
    LabelMixture truth_params;
    BiasModel truth_bias;
    std::vector<double> record_loglik; // generator's own log-density per voxel (0 outside)
    std::string manifest_path;         // populated by write_phantom
};

PhantomInstance generate(const PhantomConfig& cfg);

// Writes truth/image/mask/atlas volumes plus manifest.json and
// truth_params.json under out_dir; returns the instance with
// manifest_path set.
PhantomInstance write_phantom(const PhantomConfig& cfg, const std::string& out_dir);

// ---- brute-force oracles -------------------------------------------------

// Exhaustive O(V^2) signed distance scan with the same sign and clip
// conventions as signed_edt. Guarded to volumes of at most 16^3 voxels.
ScalarVolume brute_force_edt(const LabelVolume& labels, std::int32_t label_id,
                             double d_max = 20.0);

// Exact posterior of the membership field by enumeration. Consumes the
// same per-voxel evidence the engine uses, so the two inference routes
// share identical inputs. Guarded to N^|active| <= 2^20 configurations.
struct TinyModelView {
    GridMeta grid;
    std::vector<unsigned char> active;          // inclusion mask
    std::size_t n_atlases = 0;
    const std::vector<double>* log_evidence = nullptr;   // [n*V + v]
    const std::vector<unsigned char>* allowed = nullptr; // [v*N + n], optional
    double beta = 0.0;
};

struct ExactMembership {
    std::vector<double> marginals; // [v*N + n]; rows of active voxels sum to 1
    double log_evidence = 0.0;     // log of the summed unnormalized weight
};

ExactMembership exact_membership_posterior(const TinyModelView& model);

// Exact label marginal at one voxel: combines the exact membership
// marginal with p(l | M(x)=n, I(x)) (conditional laid out [n*L + l]).
std::vector<double> exact_label_marginal(const ExactMembership& exact, std::size_t voxel,
                                         const std::vector<double>& conditional, std::size_t n_atlases,
                                         std::size_t n_labels);

// ---- jackknife harness ----------------------------------------------------

struct JackknifeRow {
    std::string subject_id;
    int k = 0;
    std::int32_t label_id = 0; // -1 encodes the GENERALIZED row
    double dice = 0.0;
    double gen_dice = 0.0;
};

struct JackknifeResult {
    std::vector<JackknifeRow> rows;              // fixed (subject, k, label) order
    std::map<std::string, int> winning_k;        // per subject: best size by GenDice
    std::map<int, int> winning_k_histogram;
    std::map<std::string, double> subject_age;
};

// Leave-one-out over the family: every member serves as the test subject
// once per requested size k; training atlases are chosen by age from the
// remaining members. One GENERALIZED row plus per-label rows per run.
JackknifeResult jackknife(const AtlasSet& family, const std::vector<int>& sizes,
                          const VemConfig& cfg);

// jackknife.csv (subject_id,k,label_id,dice,gen_dice), winning_k.csv and
// age_group_summary.csv under out_dir
void write_jackknife_outputs(const JackknifeResult& result, const std::string& out_dir);

// ---- misc helpers ----------------------------------------------------------

// Separable Gaussian blur, sigma in voxels (used by the sharpness checks).
ScalarVolume gaussian_blur(const ScalarVolume& vol, double sigma_voxels);

} // namespace fuselage

#endif
