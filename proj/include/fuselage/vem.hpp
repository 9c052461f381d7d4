#ifndef FUSELAGE_VEM_HPP
#define FUSELAGE_VEM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fuselage/atlas.hpp"
#include "fuselage/bias.hpp"
#include "fuselage/distance.hpp"
#include "fuselage/label_table.hpp"
#include "fuselage/membership.hpp"
#include "fuselage/mixture.hpp"
#include "fuselage/prior.hpp"
#include "fuselage/volume.hpp"

namespace fuselage {

struct VemConfig {
    double beta = 0.5;
    double rho = 1.0; // 1/mm
    int max_outer_iters = 30;
    int meanfield_sweeps_per_estep = 5;
    double convergence_tol = 1e-5; // relative free-energy change
    std::uint64_t seed = 0;
    int bias_degree = 4;
    int components_per_label = 1;
    double d_max = 20.0; // distance-transform clip, mm
    // Two-color (checkerboard) sweeps are exact coordinate ascent and keep
    // the free-energy trace non-decreasing; synchronous sweeps are faster
    // per pass but carry only an empirical non-decrease guarantee.
    bool checkerboard = true;
    int workers = 1;
    std::string distance_cache_dir; // "" disables the field cache

    void validate() const;
};

struct SegmentationResult {
    LabelVolume map_labels;                    // argmax posterior, ties -> lower id
    std::vector<std::int32_t> label_order;     // ids of the posterior channels
    std::vector<ScalarVolume> label_posterior; // one volume per label in label_order
    BiasModel bias;
    LabelMixture params;
    std::vector<double> free_energy_trace; // trace[0] = after initialization
    int iterations = 0;
};

// Variational EM for the membership-field label-fusion model.
//
// The reported free energy is (log Z(beta) omitted, constant in q and
// theta):
//
//   F(q, theta, c) =   sum_{x in Omega} sum_n q_x(n) log ev_n(x)
//                    + sum_{x in Omega} sum_p c_p psi_p(x)
//                    + beta sum_{unordered 6-neighbor pairs (x,y) in Omega}
//                           sum_n q_x(n) q_y(n)
//                    + sum_{x in Omega} H(q_x)
//
// with ev_n(x) = sum_l pi_{n,l}(x) * GMM_l(I*(x)), pi the logOdds prior of
// atlas n, I*(x) = I(x) exp(+sum_p c_p psi_p(x)) the bias-corrected image,
// and the second line the log-Jacobian of the bias correction (it makes F
// a bound on the evidence of the *observed* image, so bias updates are
// comparable). The Potts energy counts each unordered neighbor pair once,
// which is the convention under which the mean-field cavity term for site
// x is exactly beta * sum_{y in N_x} q_y(n).
class VemEngine {
public:
    VemEngine(const AtlasSet& atlases, const ScalarVolume& image, const LabelVolume& mask,
              const VemConfig& cfg);

    // runs mean-field sweeps; masking is enforced within every update
    void mean_field_sweeps(int n_sweeps);
    void e_step() { mean_field_sweeps(cfg_.meanfield_sweeps_per_estep); }

    // mixture update from the expected-complete-data responsibilities,
    // then the guarded log-domain WLS bias refit
    void m_step();

    double free_energy() const;

    // full loop; also records the trace and builds the result
    SegmentationResult run();

    // emitted posterior: p_x(l) proportional to
    // [sum_n q_x(n) pi_{n,l}(x)] * GMM_l(I*(x))
    void label_posterior(std::vector<double>& out) const; // [voxel*L + l], 0 outside Omega

    // accessors (tests and the enumeration oracle consume these)
    const MembershipPosterior& membership() const { return q_; }
    const std::vector<std::int32_t>& label_order() const { return label_order_; }
    const std::vector<double>& log_evidence() const { return log_ev_; } // [n*V + v]
    const std::vector<unsigned char>& allowed() const { return allowed_; } // [v*N + n]
    const std::vector<unsigned char>& active() const { return q_.active; }
    const std::vector<std::size_t>& fallback_voxels() const { return fallback_voxels_; }
    const LabelMixture& mixture() const { return mixture_; }
    const BiasModel& bias() const { return bias_; }
    const std::vector<double>& corrected_image() const { return istar_; }
    const VemConfig& config() const { return cfg_; }

    // p(l | M(x)=n, I(x)) matrix for one voxel, label order as label_order()
    std::vector<double> label_conditional(std::size_t voxel) const; // [n*L + l]

    void set_mixture(const LabelMixture& mix); // refreshes evidence
    void set_bias_coeffs(const std::vector<double>& coeffs);

private:
    struct Prepared {
        std::vector<unsigned char> active;
        std::vector<std::int32_t> label_order;
    };
    static Prepared prepare(const AtlasSet& atlases, const ScalarVolume& image,
                            const LabelVolume& mask, const VemConfig& cfg);
    VemEngine(const AtlasSet& atlases, const ScalarVolume& image, const VemConfig& cfg,
              Prepared prepared);

    void build_masking(const AtlasSet& atlases);
    void initialize(const AtlasSet& atlases);
    void refresh_likelihood();
    void refresh_evidence();
    void refresh_istar();
    void sweep_color(int color);
    void sweep_synchronous();
    // reads neighbor memberships from src (the live field for checkerboard
    // passes, a snapshot for synchronous ones), writes q_
    void update_voxel(std::size_t v, const std::vector<double>& src,
                      std::vector<double>& scratch);
    void responsibilities(std::vector<double>& out) const; // EM weights [v*L + l]

    VemConfig cfg_;
    GridMeta grid_;
    std::vector<double> image_;  // observed I
    std::vector<double> istar_;  // bias-corrected I*
    std::vector<std::int32_t> label_order_;
    DistanceFieldSet fields_;
    std::vector<float> log_prior_; // [(n*L + l)*V + v]
    std::vector<double> log_lik_;  // [l*V + v]
    std::vector<double> log_ev_;   // [n*V + v]
    MembershipPosterior q_;
    std::vector<unsigned char> allowed_; // [v*N + n]; 0 where the mask rule applies
    std::vector<unsigned char> frozen_;  // per voxel: every atlas barred, q fixed uniform
    std::vector<std::size_t> fallback_voxels_;
    std::vector<std::size_t> color_index_[2];  // active voxels by parity
    std::vector<std::size_t> active_index_;
    LabelMixture mixture_;
    BiasModel bias_;
    double jacobian_term_ = 0.0; // sum over Omega of log bias field
    std::vector<double> trace_;
};

// The membership masking rule as a standalone transform: for every atlas n
// with has_wm=false and voxel x where L_n(x) is cerebral white matter or
// cortex, q_x(n) := 0, then renormalize; voxels losing every atlas fall
// back to uniform over all atlases and are reported.
MembershipPosterior apply_mask_rule(const MembershipPosterior& q, const AtlasSet& atlases,
                                    const LabelTable& table,
                                    std::vector<std::size_t>* fallback = nullptr);

SegmentationResult run_vem(const AtlasSet& atlases, const ScalarVolume& image,
                           const LabelVolume& mask, const VemConfig& cfg);

} // namespace fuselage

#endif
