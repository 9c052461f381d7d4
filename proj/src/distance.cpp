#include "fuselage/distance.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "fuselage/parallel.hpp"
#include "fuselage/volume_io.hpp"

namespace fuselage {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform (lower envelope of parabolas) with sample
// positions at integer multiples of h. Parabolas with infinite height are
// excluded from the envelope; a row with no finite entry stays infinite.
void dt_1d(const double* f, double* d, int n, double h) {
    const double h2 = h * h;

    int nfinite = 0;
    for (int i = 0; i < n; ++i)
        if (f[i] < kInf)
            ++nfinite;
    if (nfinite == 0) {
        for (int i = 0; i < n; ++i)
            d[i] = kInf;
        return;
    }

    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf)
            continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        // equal-curvature parabolas intersect exactly once, so the envelope
        // update always terminates with s > z[k]; intersections live in
        // physical (mm) coordinates, matching the q*h query positions
        double s;
        for (;;) {
            const int p = v[k];
            s = ((f[q] + static_cast<double>(q) * q * h2) -
                 (f[p] + static_cast<double>(p) * p * h2)) /
                (2.0 * h * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }

    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q * h)
            ++k;
        const int p = v[k];
        const double dq = static_cast<double>(q - p);
        d[q] = f[p] + dq * dq * h2;
    }
}

} // namespace

void squared_edt_inplace(std::vector<double>& f, const GridMeta& meta) {
    const int nx = meta.dims[0], ny = meta.dims[1], nz = meta.dims[2];
    const std::size_t sx = 1, sy = static_cast<std::size_t>(nx),
                      sz = static_cast<std::size_t>(nx) * ny;
    const int nmax = std::max(nx, std::max(ny, nz));
    std::vector<double> row(nmax), out(nmax);

    auto run_axis = [&](int n, double h, std::size_t stride, std::size_t n_rows,
                        auto row_origin) {
        for (std::size_t r = 0; r < n_rows; ++r) {
            const std::size_t o = row_origin(r);
            for (int i = 0; i < n; ++i)
                row[i] = f[o + stride * i];
            dt_1d(row.data(), out.data(), n, h);
            for (int i = 0; i < n; ++i)
                f[o + stride * i] = out[i];
        }
    };

    run_axis(nx, meta.spacing[0], sx, static_cast<std::size_t>(ny) * nz,
             [&](std::size_t r) { return r * sy; });
    run_axis(ny, meta.spacing[1], sy, static_cast<std::size_t>(nx) * nz, [&](std::size_t r) {
        const std::size_t z = r / nx, x = r % nx;
        return z * sz + x;
    });
    run_axis(nz, meta.spacing[2], sz, static_cast<std::size_t>(nx) * ny,
             [&](std::size_t r) { return r; });
}

ScalarVolume signed_edt(const LabelVolume& labels, std::int32_t label_id, double d_max,
                        bool* label_absent) {
    labels.meta.validate();
    if (!(d_max > 0.0))
        throw std::invalid_argument("signed_edt: d_max must be > 0");

    const std::size_t n = labels.meta.voxel_count();
    std::vector<double> to_object(n), to_complement(n);
    std::size_t inside_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool inside = labels.data[i] == label_id;
        inside_count += inside ? 1 : 0;
        to_object[i] = inside ? 0.0 : kInf;
        to_complement[i] = inside ? kInf : 0.0;
    }
    if (label_absent)
        *label_absent = inside_count == 0;

    squared_edt_inplace(to_object, labels.meta);
    squared_edt_inplace(to_complement, labels.meta);

    ScalarVolume out(labels.meta);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels.data[i] == label_id) {
            const double d = to_complement[i] == kInf ? d_max : std::sqrt(to_complement[i]);
            out.data[i] = -std::min(d, d_max);
        } else {
            const double d = to_object[i] == kInf ? d_max : std::sqrt(to_object[i]);
            out.data[i] = std::min(d, d_max);
        }
    }
    return out;
}

DistanceFieldSet::DistanceFieldSet(const AtlasSet& atlases,
                                   const std::vector<std::int32_t>& label_set, double d_max,
                                   const std::string& cache_dir, int workers)
    : n_atlases_(atlases.size()), labels_(label_set), d_max_(d_max), grid_(atlases.grid()) {
    if (labels_.empty())
        throw std::invalid_argument("DistanceFieldSet: empty label set");
    fields_.resize(n_atlases_ * labels_.size());

    const bool use_cache = !cache_dir.empty();
    if (use_cache)
        std::filesystem::create_directories(cache_dir);

    auto cache_path = [&](std::size_t a, std::size_t l) {
        return (std::filesystem::path(cache_dir) /
                (atlases[a].id + "_" + std::to_string(labels_[l]) + ".nii"))
            .string();
    };

    const std::size_t jobs = n_atlases_ * labels_.size();
    parallel_chunks(jobs, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            const std::size_t a = j / labels_.size();
            const std::size_t l = j % labels_.size();

            if (use_cache && std::filesystem::exists(cache_path(a, l))) {
                try {
                    const ScalarVolume cached = read_scalar_volume(cache_path(a, l));
                    if (cached.meta == grid_) {
                        auto& dst = fields_[j];
                        dst.assign(cached.data.begin(), cached.data.end());
                        continue;
                    }
                } catch (const std::exception&) {
                    // unreadable cache entry: recompute below
                }
            }

            const ScalarVolume d = signed_edt(atlases[a].labels, labels_[l], d_max_);
            auto& dst = fields_[j];
            dst.resize(d.data.size());
            for (std::size_t i = 0; i < d.data.size(); ++i)
                dst[i] = static_cast<float>(d.data[i]);

            if (use_cache) {
                ScalarVolume rounded(grid_);
                for (std::size_t i = 0; i < dst.size(); ++i)
                    rounded.data[i] = dst[i];
                write_volume(rounded, cache_path(a, l));
            }
        }
    });
}

} // namespace fuselage
