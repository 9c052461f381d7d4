#ifndef FUSELAGE_MIXTURE_HPP
#define FUSELAGE_MIXTURE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fuselage {

struct MixtureComponent {
    double weight = 1.0;
    double mean = 0.0;
    double variance = 1.0;
};

// Per-label Gaussian mixture over bias-corrected intensities. One
// component per label by default; up to three are supported. Variances are
// floored to keep crisp phantoms from collapsing a component.
class LabelMixture {
public:
    LabelMixture() = default;
    explicit LabelMixture(double variance_floor) : variance_floor_(variance_floor) {}

    double variance_floor() const { return variance_floor_; }
    void set_variance_floor(double f) { variance_floor_ = f; }

    bool has_label(std::int32_t label) const { return params_.count(label) > 0; }
    const std::vector<MixtureComponent>& components(std::int32_t label) const;
    void set_components(std::int32_t label, std::vector<MixtureComponent> comps);

    std::vector<std::int32_t> labels() const;

    // mixture density at intensity (log-sum-exp internally); strictly > 0
    double likelihood(std::int32_t label, double intensity) const;
    double log_likelihood(std::int32_t label, double intensity) const;

    // mixture mean of one label (used as its predicted intensity)
    double label_mean(std::int32_t label) const;

    nlohmann::json to_json() const;
    static LabelMixture from_json(const nlohmann::json& j);

private:
    std::map<std::int32_t, std::vector<MixtureComponent>> params_;
    double variance_floor_ = 1e-4;
};

// One weighted-EM update of every label's mixture. responsibilities[v*L+l]
// are per-voxel weights over labels of `label_order` (>= 0, per-voxel sums
// <= 1); voxels with zero total weight contribute nothing. Labels whose
// total weight falls below `min_mass` keep their previous parameters and
// are reported in *frozen_labels. Throws if every label is starved.
LabelMixture m_step_mixture(const std::vector<double>& responsibilities,
                            const std::vector<std::int32_t>& label_order,
                            const std::vector<double>& intensities, const LabelMixture& current,
                            int workers = 1, double min_mass = 1e-8,
                            std::vector<std::int32_t>* frozen_labels = nullptr);

} // namespace fuselage

#endif
