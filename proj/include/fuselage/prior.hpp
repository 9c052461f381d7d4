#ifndef FUSELAGE_PRIOR_HPP
#define FUSELAGE_PRIOR_HPP

#include <cstddef>
#include <vector>

#include "fuselage/distance.hpp"
#include "fuselage/membership.hpp"

namespace fuselage {

// Potts smoothness prior over the membership field. The joint log-density
// is beta * sum over unordered 6-neighbor pairs of [M(x) == M(y)]; the
// partition function Z(beta) is never evaluated (mean-field inference only
// needs unnormalized couplings).
struct MrfConfig {
    double beta = 0.5;
};

// logOdds label prior: softmax over labels of rho * (-D), where D is the
// signed distance (negative inside). The minus sign makes an atlas's own
// label the most probable one on and inside its support.
struct LogOddsConfig {
    double rho = 1.0; // 1/mm
};

// Per-label prior probabilities for one atlas at one voxel, over the field
// set's label order. Computed in the log domain; sums to 1 within 1e-12.
std::vector<double> logodds_prior(const DistanceFieldSet& fields, std::size_t atlas,
                                  std::size_t voxel, const LogOddsConfig& cfg);

// Same softmax on caller-supplied signed distances (one per label).
std::vector<double> logodds_prior_from_distances(const std::vector<double>& signed_distances,
                                                 const LogOddsConfig& cfg);

// Mean-field expectation of the Potts coupling for membership n at voxel x:
// beta * sum over in-domain 6-neighbors y of q_y(n). Boundary and masked-out
// neighbors truncate the sum.
double mrf_meanfield_logterm(const MembershipPosterior& q, std::size_t voxel, std::size_t n,
                             const MrfConfig& cfg);

} // namespace fuselage

#endif
