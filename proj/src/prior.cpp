#include "fuselage/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fuselage {

std::vector<double> logodds_prior_from_distances(const std::vector<double>& signed_distances,
                                                 const LogOddsConfig& cfg) {
    if (signed_distances.empty())
        throw std::invalid_argument("logodds_prior: empty label set");
    if (!(cfg.rho > 0.0))
        throw std::invalid_argument("logodds_prior: rho must be > 0");

    std::vector<double> p(signed_distances.size());
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < p.size(); ++l) {
        p[l] = -cfg.rho * signed_distances[l];
        max_logit = std::max(max_logit, p[l]);
    }
    double sum = 0.0;
    for (auto& v : p) {
        v = std::exp(v - max_logit);
        sum += v;
    }
    for (auto& v : p)
        v /= sum;
    return p;
}

std::vector<double> logodds_prior(const DistanceFieldSet& fields, std::size_t atlas,
                                  std::size_t voxel, const LogOddsConfig& cfg) {
    std::vector<double> d(fields.n_labels());
    for (std::size_t l = 0; l < d.size(); ++l)
        d[l] = fields.value(atlas, l, voxel);
    return logodds_prior_from_distances(d, cfg);
}

double mrf_meanfield_logterm(const MembershipPosterior& q, std::size_t voxel, std::size_t n,
                             const MrfConfig& cfg) {
    if (cfg.beta < 0.0)
        throw std::invalid_argument("mrf_meanfield_logterm: beta must be >= 0");
    const auto [x, y, z] = q.grid.coords(voxel);
    double s = 0.0;
    auto accumulate = [&](int xx, int yy, int zz) {
        if (!q.grid.contains(xx, yy, zz))
            return;
        const std::size_t v = q.grid.index(xx, yy, zz);
        if (!q.active[v])
            return;
        s += q.q(v, n);
    };
    accumulate(x - 1, y, z);
    accumulate(x + 1, y, z);
    accumulate(x, y - 1, z);
    accumulate(x, y + 1, z);
    accumulate(x, y, z - 1);
    accumulate(x, y, z + 1);
    return cfg.beta * s;
}

} // namespace fuselage
