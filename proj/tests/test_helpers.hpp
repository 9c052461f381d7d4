#ifndef FUSELAGE_TEST_HELPERS_HPP
#define FUSELAGE_TEST_HELPERS_HPP

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "fuselage/atlas.hpp"
#include "fuselage/phantom.hpp"
#include "fuselage/rng.hpp"
#include "fuselage/vem.hpp"
#include "fuselage/volume.hpp"

namespace testutil {

// unique scratch directory, removed on destruction
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const int id = counter++;
        path_ = std::filesystem::temp_directory_path() /
                ("fuselage_test_" + std::to_string(::getpid()) + "_" + std::to_string(id));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline fuselage::LabelVolume random_blob(fuselage::Rng& rng, int n, double fill = 0.4) {
    fuselage::LabelVolume vol(fuselage::GridMeta(n, n, n), 0);
    for (auto& v : vol.data)
        v = rng.uniform() < fill ? 1 : 0;
    return vol;
}

// small atlas set over one grid with the given per-atlas label payloads
inline fuselage::AtlasSet
make_atlas_set(const fuselage::GridMeta& meta,
               const std::vector<std::vector<std::int32_t>>& label_maps,
               const std::vector<std::vector<double>>& intensities,
               const std::vector<bool>& has_wm = {}) {
    fuselage::AtlasSet set;
    for (std::size_t i = 0; i < label_maps.size(); ++i) {
        fuselage::Atlas a;
        a.id = "a" + std::to_string(i);
        a.labels = fuselage::LabelVolume(meta);
        a.labels.data.assign(label_maps[i].begin(), label_maps[i].end());
        a.intensity = fuselage::ScalarVolume(meta);
        a.intensity.data = intensities[i];
        a.age_days = 100.0 * static_cast<double>(i);
        a.has_wm = has_wm.empty() ? true : has_wm[i];
        set.atlases.push_back(std::move(a));
    }
    return set;
}

// Random tiny instance for the enumeration-oracle comparisons: atlases
// carry random label maps over {2, 9, 14}[0..n_labels), the image is drawn
// near one class mean per voxel, evidence is whatever the engine builds.
struct TinyInstance {
    fuselage::AtlasSet set;
    fuselage::ScalarVolume image;
    fuselage::LabelVolume mask;
};

// model_consistent draws the test image from one atlas's propagated labels
// (a sample of the generative chain), which is what keeps the evidence
// informative; otherwise the image is independent noise.
inline TinyInstance make_tiny_instance(fuselage::Rng& rng, std::array<int, 3> dims,
                                       int n_atlases, int n_labels,
                                       bool model_consistent = false) {
    const fuselage::GridMeta meta(dims[0], dims[1], dims[2]);
    const std::int32_t ids[3] = {2, 9, 14};
    const double means[3] = {30.0, 80.0, 130.0};

    TinyInstance inst;
    for (int a = 0; a < n_atlases; ++a) {
        fuselage::Atlas atlas;
        atlas.id = "t" + std::to_string(a);
        atlas.labels = fuselage::LabelVolume(meta);
        atlas.intensity = fuselage::ScalarVolume(meta);
        for (std::size_t v = 0; v < meta.voxel_count(); ++v) {
            const int l = static_cast<int>(rng.uniform_index(n_labels));
            atlas.labels.data[v] = ids[l];
            atlas.intensity.data[v] = rng.normal(means[l], 8.0);
        }
        atlas.age_days = 50.0 * a;
        inst.set.atlases.push_back(std::move(atlas));
    }
    inst.image = fuselage::ScalarVolume(meta);
    const std::size_t source = rng.uniform_index(n_atlases);
    for (std::size_t v = 0; v < meta.voxel_count(); ++v) {
        std::int32_t label;
        if (model_consistent) {
            label = inst.set[source].labels.data[v];
        } else {
            label = ids[rng.uniform_index(n_labels)];
        }
        double mean = means[0];
        for (int l = 0; l < 3; ++l)
            if (ids[l] == label)
                mean = means[l];
        inst.image.data[v] = rng.normal(mean, 8.0);
    }
    inst.mask = fuselage::LabelVolume(meta, 1);
    return inst;
}

inline fuselage::TinyModelView view_of(const fuselage::VemEngine& engine) {
    fuselage::TinyModelView view;
    view.grid = engine.membership().grid;
    view.active = engine.active();
    view.n_atlases = engine.membership().n_atlases;
    view.log_evidence = &engine.log_evidence();
    view.allowed = &engine.allowed();
    view.beta = engine.config().beta;
    return view;
}

// sweeps to a mean-field fixed point; returns the number of sweeps used
inline int converge_mean_field(fuselage::VemEngine& engine, double tol = 1e-13,
                               int max_sweeps = 2000) {
    std::vector<double> prev;
    for (int s = 1; s <= max_sweeps; ++s) {
        prev = engine.membership().data;
        engine.mean_field_sweeps(1);
        double delta = 0.0;
        const auto& cur = engine.membership().data;
        for (std::size_t i = 0; i < cur.size(); ++i)
            delta = std::max(delta, std::abs(cur[i] - prev[i]));
        if (delta < tol)
            return s;
    }
    return max_sweeps;
}

} // namespace testutil

#endif
