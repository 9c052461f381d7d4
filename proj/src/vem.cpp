#include "fuselage/vem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fuselage/parallel.hpp"

namespace fuselage {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void VemConfig::validate() const {
    if (beta < 0.0)
        throw std::invalid_argument("VemConfig: beta must be >= 0");
    if (!(rho > 0.0))
        throw std::invalid_argument("VemConfig: rho must be > 0");
    if (max_outer_iters < 1 || meanfield_sweeps_per_estep < 1)
        throw std::invalid_argument("VemConfig: iteration counts must be >= 1");
    if (!(convergence_tol > 0.0))
        throw std::invalid_argument("VemConfig: convergence tolerance must be > 0");
    if (bias_degree < 0)
        throw std::invalid_argument("VemConfig: bias degree must be >= 0");
    if (components_per_label < 1 || components_per_label > 3)
        throw std::invalid_argument("VemConfig: components per label must be in [1,3]");
    if (!(d_max > 0.0))
        throw std::invalid_argument("VemConfig: d_max must be > 0");
    if (workers < 1)
        throw std::invalid_argument("VemConfig: workers must be >= 1");
}

namespace {

std::vector<std::int32_t> collect_label_order(const AtlasSet& atlases,
                                              const std::vector<unsigned char>& active) {
    std::vector<std::int32_t> ids;
    for (const auto& a : atlases.atlases)
        for (std::size_t v = 0; v < active.size(); ++v)
            if (active[v])
                ids.push_back(a.labels.data[v]);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

} // namespace

VemEngine::Prepared VemEngine::prepare(const AtlasSet& atlases, const ScalarVolume& image,
                                       const LabelVolume& mask, const VemConfig& cfg) {
    cfg.validate();
    atlases.validate();
    if (image.meta != atlases.grid() || mask.meta != image.meta)
        throw std::invalid_argument("VemEngine: image/mask/atlas grids differ");
    Prepared p;
    p.active.resize(mask.data.size());
    bool any = false;
    for (std::size_t v = 0; v < p.active.size(); ++v) {
        p.active[v] = mask.data[v] != 0 ? 1 : 0;
        any = any || p.active[v];
    }
    if (!any)
        throw std::invalid_argument("VemEngine: empty brain mask");
    p.label_order = collect_label_order(atlases, p.active);
    return p;
}

VemEngine::VemEngine(const AtlasSet& atlases, const ScalarVolume& image, const LabelVolume& mask,
                     const VemConfig& cfg)
    : VemEngine(atlases, image, cfg, prepare(atlases, image, mask, cfg)) {}

VemEngine::VemEngine(const AtlasSet& atlases, const ScalarVolume& image, const VemConfig& cfg,
                     Prepared prepared)
    : cfg_(cfg), grid_(image.meta),
      fields_(atlases, prepared.label_order, cfg.d_max, cfg.distance_cache_dir, cfg.workers),
      q_(image.meta, atlases.size()), bias_(image.meta, cfg.bias_degree) {
    image_ = image.data;
    label_order_ = fields_.label_set();
    q_.active = std::move(prepared.active);

    const std::size_t V = grid_.voxel_count();
    for (std::size_t v = 0; v < V; ++v) {
        if (!q_.active[v])
            continue;
        active_index_.push_back(v);
        const auto c = grid_.coords(v);
        color_index_[(c[0] + c[1] + c[2]) & 1].push_back(v);
    }

    // fixed logOdds prior per (atlas, label, voxel); float storage keeps the
    // footprint workable and cache round trips exact
    const std::size_t N = q_.n_atlases;
    const std::size_t L = label_order_.size();
    log_prior_.assign(N * L * V, 0.0f);
    const LogOddsConfig lcfg{cfg_.rho};
    parallel_chunks(active_index_.size(), cfg_.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        std::vector<double> logits(L);
                        for (std::size_t i = begin; i < end; ++i) {
                            const std::size_t v = active_index_[i];
                            for (std::size_t n = 0; n < N; ++n) {
                                double mx = kNegInf;
                                for (std::size_t l = 0; l < L; ++l) {
                                    logits[l] = -lcfg.rho *
                                                static_cast<double>(fields_.value(n, l, v));
                                    mx = std::max(mx, logits[l]);
                                }
                                double s = 0.0;
                                for (std::size_t l = 0; l < L; ++l)
                                    s += std::exp(logits[l] - mx);
                                const double lse = mx + std::log(s);
                                for (std::size_t l = 0; l < L; ++l)
                                    log_prior_[(n * L + l) * V + v] =
                                        static_cast<float>(logits[l] - lse);
                            }
                        }
                    });

    build_masking(atlases);
    initialize(atlases);
}

void VemEngine::build_masking(const AtlasSet& atlases) {
    const std::size_t N = q_.n_atlases;
    const auto& wm_ids = label_table().wm_cortex_ids();
    allowed_.assign(grid_.voxel_count() * N, 1);
    for (std::size_t n = 0; n < N; ++n) {
        if (atlases[n].has_wm)
            continue;
        const auto& labels = atlases[n].labels.data;
        for (std::size_t v : active_index_)
            if (wm_ids.count(labels[v]))
                allowed_[v * N + n] = 0;
    }
    frozen_.assign(grid_.voxel_count(), 0);
    for (std::size_t v : active_index_) {
        bool any = false;
        for (std::size_t n = 0; n < N; ++n)
            any = any || allowed_[v * N + n];
        if (!any) {
            frozen_[v] = 1;
            fallback_voxels_.push_back(v);
        }
    }
}

void VemEngine::initialize(const AtlasSet& atlases) {
    const std::size_t N = q_.n_atlases;
    const std::size_t L = label_order_.size();
    const std::size_t V = grid_.voxel_count();

    // uniform over unmasked; voxels with every atlas barred fall back to
    // uniform over all atlases and stay frozen
    for (std::size_t v : active_index_) {
        std::size_t n_allowed = 0;
        for (std::size_t n = 0; n < N; ++n)
            n_allowed += allowed_[v * N + n];
        if (n_allowed == 0) {
            for (std::size_t n = 0; n < N; ++n)
                q_.q(v, n) = 1.0 / static_cast<double>(N);
        } else {
            for (std::size_t n = 0; n < N; ++n)
                q_.q(v, n) = allowed_[v * N + n] ? 1.0 / static_cast<double>(n_allowed) : 0.0;
        }
    }

    // majority-vote fusion of the propagated labels, weighted by the
    // initial membership; per-label moments of that vote seed the mixture
    std::vector<double> mass(L, 0.0), mean(L, 0.0), m2(L, 0.0);
    double glob_min = std::numeric_limits<double>::infinity();
    double glob_max = -std::numeric_limits<double>::infinity();
    double glob_sum = 0.0, glob_sum2 = 0.0;
    std::vector<std::size_t> lut; // label id -> index
    {
        std::int32_t max_id = label_order_.back();
        lut.assign(static_cast<std::size_t>(max_id) + 1, 0);
        for (std::size_t l = 0; l < L; ++l)
            lut[label_order_[l]] = l;
    }
    for (std::size_t v : active_index_) {
        const double x = image_[v];
        glob_min = std::min(glob_min, x);
        glob_max = std::max(glob_max, x);
        glob_sum += x;
        glob_sum2 += x * x;
        for (std::size_t n = 0; n < N; ++n) {
            const double w = q_.q(v, n);
            if (w <= 0.0)
                continue;
            const std::size_t l = lut[atlases[n].labels.data[v]];
            mass[l] += w;
            mean[l] += w * x;
            m2[l] += w * x * x;
        }
    }
    const double n_act = static_cast<double>(active_index_.size());
    const double glob_mean = glob_sum / n_act;
    const double glob_var = std::max(glob_sum2 / n_act - glob_mean * glob_mean, 0.0);
    const double range = std::max(glob_max - glob_min, 1e-6);
    mixture_ = LabelMixture(1e-4 * range * range);

    const int C = cfg_.components_per_label;
    for (std::size_t l = 0; l < L; ++l) {
        double mu, var;
        if (mass[l] > 1e-12) {
            mu = mean[l] / mass[l];
            var = std::max(m2[l] / mass[l] - mu * mu, 0.0);
        } else {
            mu = glob_mean;
            var = glob_var;
        }
        std::vector<MixtureComponent> comps(C);
        const double sigma = std::sqrt(std::max(var, mixture_.variance_floor()));
        for (int k = 0; k < C; ++k) {
            comps[k].weight = 1.0 / C;
            comps[k].mean = mu + sigma * (k - 0.5 * (C - 1));
            comps[k].variance = var;
        }
        mixture_.set_components(label_order_[l], std::move(comps));
    }

    istar_ = image_;
    jacobian_term_ = 0.0;
    refresh_likelihood();
    refresh_evidence();
}

void VemEngine::refresh_likelihood() {
    const std::size_t L = label_order_.size();
    const std::size_t V = grid_.voxel_count();
    log_lik_.assign(L * V, 0.0);
    parallel_chunks(active_index_.size(), cfg_.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) {
                            const std::size_t v = active_index_[i];
                            for (std::size_t l = 0; l < L; ++l)
                                log_lik_[l * V + v] =
                                    mixture_.log_likelihood(label_order_[l], istar_[v]);
                        }
                    });
}

void VemEngine::refresh_evidence() {
    const std::size_t N = q_.n_atlases;
    const std::size_t L = label_order_.size();
    const std::size_t V = grid_.voxel_count();
    log_ev_.assign(N * V, 0.0);
    parallel_chunks(active_index_.size(), cfg_.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        std::vector<double> terms(L);
                        for (std::size_t i = begin; i < end; ++i) {
                            const std::size_t v = active_index_[i];
                            for (std::size_t n = 0; n < N; ++n) {
                                double mx = kNegInf;
                                for (std::size_t l = 0; l < L; ++l) {
                                    terms[l] = static_cast<double>(log_prior_[(n * L + l) * V + v]) +
                                               log_lik_[l * V + v];
                                    mx = std::max(mx, terms[l]);
                                }
                                double s = 0.0;
                                for (std::size_t l = 0; l < L; ++l)
                                    s += std::exp(terms[l] - mx);
                                log_ev_[n * V + v] = mx + std::log(s);
                                if (!std::isfinite(log_ev_[n * V + v]))
                                    throw std::runtime_error(
                                        "VemEngine: non-finite evidence term");
                            }
                        }
                    });
}

void VemEngine::refresh_istar() {
    const std::size_t V = grid_.voxel_count();
    KahanSum jac;
    istar_ = image_;
    for (std::size_t v = 0; v < V; ++v) {
        const double lf = bias_.log_field(v);
        istar_[v] = image_[v] * std::exp(lf);
        if (q_.active[v])
            jac.add(lf);
    }
    jacobian_term_ = jac.value();
}

void VemEngine::update_voxel(std::size_t v, const std::vector<double>& src,
                             std::vector<double>& s) {
    const std::size_t N = q_.n_atlases;
    const auto c = grid_.coords(v);
    const int x = c[0], y = c[1], z = c[2];

    // cavity term: beta * sum over in-domain neighbors of q_y(n)
    std::fill(s.begin(), s.end(), 0.0);
    auto add_neighbor = [&](int xx, int yy, int zz) {
        if (!grid_.contains(xx, yy, zz))
            return;
        const std::size_t w = grid_.index(xx, yy, zz);
        if (!q_.active[w])
            return;
        for (std::size_t n = 0; n < N; ++n)
            s[n] += src[w * N + n];
    };
    add_neighbor(x - 1, y, z);
    add_neighbor(x + 1, y, z);
    add_neighbor(x, y - 1, z);
    add_neighbor(x, y + 1, z);
    add_neighbor(x, y, z - 1);
    add_neighbor(x, y, z + 1);

    const std::size_t V = grid_.voxel_count();
    double mx = kNegInf;
    for (std::size_t n = 0; n < N; ++n) {
        if (!allowed_[v * N + n]) {
            s[n] = kNegInf;
            continue;
        }
        s[n] = cfg_.beta * s[n] + log_ev_[n * V + v];
        mx = std::max(mx, s[n]);
    }
    double sum = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        s[n] = s[n] == kNegInf ? 0.0 : std::exp(s[n] - mx);
        sum += s[n];
    }
    for (std::size_t n = 0; n < N; ++n)
        q_.q(v, n) = s[n] / sum;
}

void VemEngine::sweep_color(int color) {
    const auto& index = color_index_[color];
    parallel_chunks(index.size(), cfg_.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        std::vector<double> s(q_.n_atlases);
                        for (std::size_t i = begin; i < end; ++i) {
                            const std::size_t v = index[i];
                            if (frozen_[v])
                                continue;
                            update_voxel(v, q_.data, s);
                        }
                    });
}

void VemEngine::sweep_synchronous() {
    const std::vector<double> snapshot = q_.data;
    parallel_chunks(active_index_.size(), cfg_.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        std::vector<double> s(q_.n_atlases);
                        for (std::size_t i = begin; i < end; ++i) {
                            const std::size_t v = active_index_[i];
                            if (frozen_[v])
                                continue;
                            update_voxel(v, snapshot, s);
                        }
                    });
}

void VemEngine::mean_field_sweeps(int n_sweeps) {
    for (int s = 0; s < n_sweeps; ++s) {
        if (cfg_.checkerboard) {
            sweep_color(0);
            sweep_color(1);
        } else {
            sweep_synchronous();
        }
    }
}

double VemEngine::free_energy() const {
    const std::size_t N = q_.n_atlases;
    const std::size_t V = grid_.voxel_count();
    const std::size_t nchunks = chunk_count(active_index_.size());
    std::vector<KahanSum> partial(nchunks);

    parallel_chunks(active_index_.size(), cfg_.workers,
                    [&](std::size_t c, std::size_t begin, std::size_t end) {
                        KahanSum& acc = partial[c];
                        for (std::size_t i = begin; i < end; ++i) {
                            const std::size_t v = active_index_[i];
                            const auto co = grid_.coords(v);
                            for (std::size_t n = 0; n < N; ++n) {
                                const double qv = q_.q(v, n);
                                if (qv <= 0.0)
                                    continue;
                                acc.add(qv * log_ev_[n * V + v]);
                                acc.add(-qv * std::log(qv));
                            }
                            if (cfg_.beta > 0.0) {
                                // each unordered pair visited once via the
                                // positive-direction neighbors
                                auto pair_term = [&](int xx, int yy, int zz) {
                                    if (!grid_.contains(xx, yy, zz))
                                        return;
                                    const std::size_t w = grid_.index(xx, yy, zz);
                                    if (!q_.active[w])
                                        return;
                                    double dot = 0.0;
                                    for (std::size_t n = 0; n < N; ++n)
                                        dot += q_.q(v, n) * q_.q(w, n);
                                    acc.add(cfg_.beta * dot);
                                };
                                pair_term(co[0] + 1, co[1], co[2]);
                                pair_term(co[0], co[1] + 1, co[2]);
                                pair_term(co[0], co[1], co[2] + 1);
                            }
                        }
                    });

    KahanSum total;
    for (const auto& p : partial)
        total.merge(p);
    total.add(jacobian_term_);
    return total.value();
}

std::vector<double> VemEngine::label_conditional(std::size_t voxel) const {
    const std::size_t N = q_.n_atlases;
    const std::size_t L = label_order_.size();
    const std::size_t V = grid_.voxel_count();
    std::vector<double> out(N * L, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t l = 0; l < L; ++l)
            out[n * L + l] = std::exp(static_cast<double>(log_prior_[(n * L + l) * V + voxel]) +
                                      log_lik_[l * V + voxel] - log_ev_[n * V + voxel]);
    return out;
}

void VemEngine::responsibilities(std::vector<double>& out) const {
    const std::size_t N = q_.n_atlases;
    const std::size_t L = label_order_.size();
    const std::size_t V = grid_.voxel_count();
    out.assign(V * L, 0.0);
    parallel_chunks(active_index_.size(), cfg_.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) {
                            const std::size_t v = active_index_[i];
                            for (std::size_t n = 0; n < N; ++n) {
                                const double qv = q_.q(v, n);
                                if (qv <= 0.0)
                                    continue;
                                const double ev = log_ev_[n * V + v];
                                for (std::size_t l = 0; l < L; ++l)
                                    out[v * L + l] +=
                                        qv * std::exp(static_cast<double>(
                                                          log_prior_[(n * L + l) * V + v]) +
                                                      log_lik_[l * V + v] - ev);
                            }
                        }
                    });
}

void VemEngine::label_posterior(std::vector<double>& out) const {
    const std::size_t N = q_.n_atlases;
    const std::size_t L = label_order_.size();
    const std::size_t V = grid_.voxel_count();
    out.assign(V * L, 0.0);
    parallel_chunks(active_index_.size(), cfg_.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i) {
                            const std::size_t v = active_index_[i];
                            // shift by the largest exponent over (n,l) before
                            // exponentiating
                            double mx = kNegInf;
                            for (std::size_t n = 0; n < N; ++n) {
                                if (q_.q(v, n) <= 0.0)
                                    continue;
                                for (std::size_t l = 0; l < L; ++l)
                                    mx = std::max(
                                        mx, static_cast<double>(log_prior_[(n * L + l) * V + v]) +
                                                log_lik_[l * V + v]);
                            }
                            double sum = 0.0;
                            for (std::size_t l = 0; l < L; ++l) {
                                double p = 0.0;
                                for (std::size_t n = 0; n < N; ++n) {
                                    const double qv = q_.q(v, n);
                                    if (qv <= 0.0)
                                        continue;
                                    p += qv * std::exp(static_cast<double>(
                                                           log_prior_[(n * L + l) * V + v]) +
                                                       log_lik_[l * V + v] - mx);
                                }
                                out[v * L + l] = p;
                                sum += p;
                            }
                            for (std::size_t l = 0; l < L; ++l)
                                out[v * L + l] /= sum;
                        }
                    });
}

void VemEngine::m_step() {
    const std::size_t V = grid_.voxel_count();
    const std::size_t L = label_order_.size();

    std::vector<double> rho;
    responsibilities(rho);

    mixture_ = m_step_mixture(rho, label_order_, istar_, mixture_, cfg_.workers);
    refresh_likelihood();
    refresh_evidence();
    const double f_mixture = free_energy();

    // guarded bias refit: the WLS estimate is a heuristic ascent direction,
    // so step toward it only as far as the free energy allows (generalized
    // EM acceptance)
    std::vector<double> predicted(V, 1.0), weights(V, 0.0);
    for (std::size_t v : active_index_) {
        double pred = 0.0, w = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            const double r = rho[v * L + l];
            pred += r * mixture_.label_mean(label_order_[l]);
            w += r;
        }
        if (pred > 0.0 && w > 0.0) {
            predicted[v] = pred;
            weights[v] = w;
        }
    }
    const BiasModel candidate = fit_bias(image_, predicted, weights, bias_);
    const std::vector<double> c_old = bias_.coeffs();
    const std::vector<double>& c_new = candidate.coeffs();

    double step = 1.0;
    bool accepted = false;
    for (int attempt = 0; attempt < 4 && !accepted; ++attempt, step *= 0.5) {
        std::vector<double> c_try(c_old.size());
        for (std::size_t p = 0; p < c_try.size(); ++p)
            c_try[p] = c_old[p] + step * (c_new[p] - c_old[p]);
        bias_.set_coeffs(std::move(c_try));
        refresh_istar();
        refresh_likelihood();
        refresh_evidence();
        accepted = free_energy() >= f_mixture;
    }
    if (!accepted) {
        bias_.set_coeffs(c_old);
        refresh_istar();
        refresh_likelihood();
        refresh_evidence();
    }
}

SegmentationResult VemEngine::run() {
    trace_.clear();
    trace_.push_back(free_energy());
    int iters = 0;
    for (int t = 0; t < cfg_.max_outer_iters; ++t) {
        e_step();
        m_step();
        const double f = free_energy();
        if (!std::isfinite(f))
            throw std::runtime_error(
                "VemEngine: non-finite free energy at outer iteration " + std::to_string(t + 1) +
                " (previous " + std::to_string(trace_.back()) + "); aborting");
        const double prev = trace_.back();
        trace_.push_back(f);
        iters = t + 1;
        if (std::abs(f - prev) < cfg_.convergence_tol * std::abs(prev))
            break;
    }

    SegmentationResult result;
    result.label_order = label_order_;
    result.params = mixture_;
    result.bias = bias_;
    result.free_energy_trace = trace_;
    result.iterations = iters;

    const std::size_t L = label_order_.size();
    std::vector<double> post;
    label_posterior(post);

    result.map_labels = LabelVolume(grid_, 0);
    result.label_posterior.assign(L, ScalarVolume(grid_, 0.0));
    for (std::size_t v : active_index_) {
        std::size_t best = 0;
        double best_p = -1.0;
        for (std::size_t l = 0; l < L; ++l) {
            const double p = post[v * L + l];
            result.label_posterior[l].data[v] = p;
            if (p > best_p) { // strict: ties keep the lower label id
                best_p = p;
                best = l;
            }
        }
        result.map_labels.data[v] = label_order_[best];
    }
    return result;
}

void VemEngine::set_mixture(const LabelMixture& mix) {
    for (auto id : label_order_)
        mix.components(id); // throws on missing label
    mixture_ = mix;
    refresh_likelihood();
    refresh_evidence();
}

void VemEngine::set_bias_coeffs(const std::vector<double>& coeffs) {
    bias_.set_coeffs(coeffs);
    refresh_istar();
    refresh_likelihood();
    refresh_evidence();
}

MembershipPosterior apply_mask_rule(const MembershipPosterior& q, const AtlasSet& atlases,
                                    const LabelTable& table,
                                    std::vector<std::size_t>* fallback) {
    atlases.validate();
    if (atlases.grid() != q.grid || atlases.size() != q.n_atlases)
        throw std::invalid_argument("apply_mask_rule: posterior does not match atlas set");
    const auto& wm_ids = table.wm_cortex_ids();
    MembershipPosterior out = q;
    const std::size_t N = q.n_atlases;
    for (std::size_t v = 0; v < q.grid.voxel_count(); ++v) {
        if (!q.active[v])
            continue;
        bool fired = false;
        double sum = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            if (!atlases[n].has_wm && wm_ids.count(atlases[n].labels.data[v])) {
                fired = fired || out.q(v, n) != 0.0;
                out.q(v, n) = 0.0;
            }
            sum += out.q(v, n);
        }
        if (!fired)
            continue; // untouched voxels stay bit-identical
        if (sum <= 0.0) {
            for (std::size_t n = 0; n < N; ++n)
                out.q(v, n) = 1.0 / static_cast<double>(N);
            if (fallback)
                fallback->push_back(v);
        } else {
            for (std::size_t n = 0; n < N; ++n)
                out.q(v, n) /= sum;
        }
    }
    return out;
}

SegmentationResult run_vem(const AtlasSet& atlases, const ScalarVolume& image,
                           const LabelVolume& mask, const VemConfig& cfg) {
    VemEngine engine(atlases, image, mask, cfg);
    return engine.run();
}

} // namespace fuselage
