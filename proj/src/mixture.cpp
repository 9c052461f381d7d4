#include "fuselage/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fuselage/parallel.hpp"

namespace fuselage {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_gaussian(double x, double mean, double variance) {
    const double d = x - mean;
    return -0.5 * (kLog2Pi + std::log(variance) + d * d / variance);
}
} // namespace

const std::vector<MixtureComponent>& LabelMixture::components(std::int32_t label) const {
    auto it = params_.find(label);
    if (it == params_.end())
        throw std::out_of_range("LabelMixture: unknown label " + std::to_string(label));
    return it->second;
}

void LabelMixture::set_components(std::int32_t label, std::vector<MixtureComponent> comps) {
    if (comps.empty())
        throw std::invalid_argument("LabelMixture: empty component list");
    if (comps.size() > 8)
        throw std::invalid_argument("LabelMixture: at most 8 components per label");
    double wsum = 0.0;
    for (auto& c : comps) {
        if (!(c.weight > 0.0))
            throw std::invalid_argument("LabelMixture: component weight must be > 0");
        c.variance = std::max(c.variance, variance_floor_);
        wsum += c.weight;
    }
    for (auto& c : comps)
        c.weight /= wsum;
    params_[label] = std::move(comps);
}

std::vector<std::int32_t> LabelMixture::labels() const {
    std::vector<std::int32_t> ids;
    ids.reserve(params_.size());
    for (const auto& [id, _] : params_)
        ids.push_back(id);
    return ids;
}

double LabelMixture::log_likelihood(std::int32_t label, double intensity) const {
    const auto& comps = components(label);
    double max_term = -std::numeric_limits<double>::infinity();
    double terms[8];
    const std::size_t k = comps.size();
    for (std::size_t i = 0; i < k; ++i) {
        terms[i] = std::log(comps[i].weight) +
                   log_gaussian(intensity, comps[i].mean, comps[i].variance);
        max_term = std::max(max_term, terms[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        s += std::exp(terms[i] - max_term);
    return max_term + std::log(s);
}

double LabelMixture::likelihood(std::int32_t label, double intensity) const {
    return std::exp(log_likelihood(label, intensity));
}

double LabelMixture::label_mean(std::int32_t label) const {
    const auto& comps = components(label);
    double m = 0.0;
    for (const auto& c : comps)
        m += c.weight * c.mean;
    return m;
}

nlohmann::json LabelMixture::to_json() const {
    nlohmann::json j;
    j["variance_floor"] = variance_floor_;
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [id, comps] : params_) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : comps)
            arr.push_back({{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
        labels[std::to_string(id)] = arr;
    }
    j["labels"] = labels;
    return j;
}

LabelMixture LabelMixture::from_json(const nlohmann::json& j) {
    LabelMixture mix(j.at("variance_floor").get<double>());
    for (const auto& [key, arr] : j.at("labels").items()) {
        std::vector<MixtureComponent> comps;
        for (const auto& c : arr)
            comps.push_back({c.at("weight").get<double>(), c.at("mean").get<double>(),
                             c.at("variance").get<double>()});
        mix.set_components(std::stoi(key), std::move(comps));
    }
    return mix;
}

LabelMixture m_step_mixture(const std::vector<double>& responsibilities,
                            const std::vector<std::int32_t>& label_order,
                            const std::vector<double>& intensities, const LabelMixture& current,
                            int workers, double min_mass,
                            std::vector<std::int32_t>* frozen_labels) {
    const std::size_t n_labels = label_order.size();
    const std::size_t n_voxels = intensities.size();
    if (responsibilities.size() != n_labels * n_voxels)
        throw std::invalid_argument("m_step_mixture: responsibility matrix shape mismatch");

    std::size_t max_comps = 1;
    for (auto id : label_order)
        max_comps = std::max(max_comps, current.components(id).size());

    // moments per (label, component): mass, sum x, sum x^2 relative to the
    // current mean (shifted for accuracy); accumulated per fixed chunk and
    // merged in chunk order for worker-count determinism
    const std::size_t n_slots = n_labels * max_comps;
    const std::size_t nchunks = chunk_count(n_voxels);
    std::vector<double> part_mass(nchunks * n_slots, 0.0);
    std::vector<double> part_sx(nchunks * n_slots, 0.0);
    std::vector<double> part_sxx(nchunks * n_slots, 0.0);

    std::vector<std::vector<MixtureComponent>> cur(n_labels);
    for (std::size_t l = 0; l < n_labels; ++l)
        cur[l] = current.components(label_order[l]);

    parallel_chunks(n_voxels, workers, [&](std::size_t c, std::size_t begin, std::size_t end) {
        double* mass = &part_mass[c * n_slots];
        double* sx = &part_sx[c * n_slots];
        double* sxx = &part_sxx[c * n_slots];
        std::vector<double> gamma(max_comps);
        for (std::size_t v = begin; v < end; ++v) {
            const double x = intensities[v];
            for (std::size_t l = 0; l < n_labels; ++l) {
                const double r = responsibilities[v * n_labels + l];
                if (r <= 0.0)
                    continue;
                const auto& comps = cur[l];
                if (comps.size() == 1) {
                    const double d = x - comps[0].mean;
                    mass[l * max_comps] += r;
                    sx[l * max_comps] += r * d;
                    sxx[l * max_comps] += r * d * d;
                    continue;
                }
                // within-label component responsibilities from the current mixture
                double max_t = -std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < comps.size(); ++k) {
                    gamma[k] = std::log(comps[k].weight) +
                               log_gaussian(x, comps[k].mean, comps[k].variance);
                    max_t = std::max(max_t, gamma[k]);
                }
                double gsum = 0.0;
                for (std::size_t k = 0; k < comps.size(); ++k) {
                    gamma[k] = std::exp(gamma[k] - max_t);
                    gsum += gamma[k];
                }
                for (std::size_t k = 0; k < comps.size(); ++k) {
                    const double rk = r * gamma[k] / gsum;
                    const double d = x - comps[k].mean;
                    mass[l * max_comps + k] += rk;
                    sx[l * max_comps + k] += rk * d;
                    sxx[l * max_comps + k] += rk * d * d;
                }
            }
        }
    });

    std::vector<double> mass(n_slots, 0.0), sx(n_slots, 0.0), sxx(n_slots, 0.0);
    for (std::size_t c = 0; c < nchunks; ++c)
        for (std::size_t s = 0; s < n_slots; ++s) {
            mass[s] += part_mass[c * n_slots + s];
            sx[s] += part_sx[c * n_slots + s];
            sxx[s] += part_sxx[c * n_slots + s];
        }

    LabelMixture next(current.variance_floor());
    std::size_t n_frozen = 0;
    for (std::size_t l = 0; l < n_labels; ++l) {
        const auto& comps = cur[l];
        double label_mass = 0.0;
        for (std::size_t k = 0; k < comps.size(); ++k)
            label_mass += mass[l * max_comps + k];
        if (label_mass < min_mass) {
            next.set_components(label_order[l], comps);
            if (frozen_labels)
                frozen_labels->push_back(label_order[l]);
            ++n_frozen;
            continue;
        }
        std::vector<MixtureComponent> updated(comps.size());
        for (std::size_t k = 0; k < comps.size(); ++k) {
            const std::size_t s = l * max_comps + k;
            if (mass[s] < min_mass) {
                updated[k] = comps[k];
                updated[k].weight = mass[s] / label_mass;
                if (updated[k].weight <= 0.0)
                    updated[k].weight = std::numeric_limits<double>::min();
                continue;
            }
            const double dmean = sx[s] / mass[s];
            const double var = std::max(sxx[s] / mass[s] - dmean * dmean, 0.0);
            updated[k].weight = mass[s] / label_mass;
            updated[k].mean = comps[k].mean + dmean;
            updated[k].variance = var; // floored by set_components
        }
        next.set_components(label_order[l], std::move(updated));
    }
    if (n_frozen == n_labels)
        throw std::runtime_error("m_step_mixture: zero responsibility mass for every label");
    return next;
}

} // namespace fuselage
