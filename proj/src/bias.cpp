#include "fuselage/bias.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace fuselage {

BiasModel::BiasModel(const GridMeta& grid, int degree) : grid_(grid), degree_(degree) {
    grid_.validate();
    if (degree < 0)
        throw std::invalid_argument("BiasModel: degree must be >= 0");
    for (int t = 0; t <= degree; ++t)
        for (int a = 0; a <= t; ++a)
            for (int b = 0; b <= t - a; ++b)
                powers_.push_back({a, b, t - a - b});
    coeffs_.assign(powers_.size(), 0.0);
    for (int axis = 0; axis < 3; ++axis) {
        const int n = grid_.dims[axis];
        if (n > 1) {
            scale_[axis] = 2.0 / (n - 1);
            shift_[axis] = -1.0;
        } else {
            scale_[axis] = 0.0;
            shift_[axis] = 0.0;
        }
    }
}

void BiasModel::set_coeffs(std::vector<double> c) {
    if (c.size() != powers_.size())
        throw std::invalid_argument("BiasModel: coefficient count does not match basis size");
    for (double v : c)
        if (!std::isfinite(v))
            throw std::invalid_argument("BiasModel: non-finite coefficient");
    coeffs_ = std::move(c);
}

double BiasModel::basis_value(std::size_t p, int x, int y, int z) const {
    const double cx = shift_[0] + scale_[0] * x;
    const double cy = shift_[1] + scale_[1] * y;
    const double cz = shift_[2] + scale_[2] * z;
    const auto& pw = powers_[p];
    double v = 1.0;
    for (int i = 0; i < pw[0]; ++i) v *= cx;
    for (int i = 0; i < pw[1]; ++i) v *= cy;
    for (int i = 0; i < pw[2]; ++i) v *= cz;
    return v;
}

double BiasModel::log_field(int x, int y, int z) const {
    double s = 0.0;
    for (std::size_t p = 0; p < powers_.size(); ++p)
        if (coeffs_[p] != 0.0)
            s += coeffs_[p] * basis_value(p, x, y, z);
    return s;
}

double BiasModel::log_field(std::size_t voxel) const {
    const auto c = grid_.coords(voxel);
    return log_field(c[0], c[1], c[2]);
}

nlohmann::json BiasModel::to_json() const {
    return {{"dims", grid_.dims},
            {"spacing", grid_.spacing},
            {"origin", grid_.origin},
            {"degree", degree_},
            {"coeffs", coeffs_}};
}

BiasModel BiasModel::from_json(const nlohmann::json& j) {
    GridMeta meta;
    for (int a = 0; a < 3; ++a) {
        meta.dims[a] = j.at("dims").at(a).get<int>();
        meta.spacing[a] = j.at("spacing").at(a).get<double>();
        meta.origin[a] = j.at("origin").at(a).get<double>();
    }
    BiasModel m(meta, j.at("degree").get<int>());
    m.set_coeffs(j.at("coeffs").get<std::vector<double>>());
    return m;
}

ScalarVolume apply_bias(const ScalarVolume& clean, const BiasModel& bias) {
    if (clean.meta != bias.grid())
        throw std::invalid_argument("apply_bias: grid mismatch");
    ScalarVolume out(clean.meta);
    for (std::size_t v = 0; v < out.data.size(); ++v)
        out.data[v] = clean.data[v] * std::exp(-bias.log_field(v));
    return out;
}

ScalarVolume correct_bias(const ScalarVolume& observed, const BiasModel& bias) {
    if (observed.meta != bias.grid())
        throw std::invalid_argument("correct_bias: grid mismatch");
    ScalarVolume out(observed.meta);
    for (std::size_t v = 0; v < out.data.size(); ++v)
        out.data[v] = observed.data[v] * std::exp(bias.log_field(v));
    return out;
}

BiasModel fit_bias(const std::vector<double>& observed, const std::vector<double>& predicted,
                   const std::vector<double>& weights, const BiasModel& current) {
    const std::size_t n_voxels = current.grid().voxel_count();
    if (observed.size() != n_voxels || predicted.size() != n_voxels ||
        weights.size() != n_voxels)
        throw std::invalid_argument("fit_bias: input sizes do not match the grid");

    const std::size_t P = current.n_basis();
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(P, P);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(P);

    double obs_max = 0.0;
    for (std::size_t v = 0; v < n_voxels; ++v)
        if (weights[v] > 0.0)
            obs_max = std::max(obs_max, observed[v]);
    const double obs_floor = obs_max > 0.0 ? 1e-6 * obs_max : 1e-6;

    Eigen::VectorXd row(P);
    const auto& grid = current.grid();
    std::size_t v = 0;
    for (int z = 0; z < grid.dims[2]; ++z)
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x, ++v) {
                const double w = weights[v];
                if (w <= 0.0)
                    continue;
                const double pred = predicted[v];
                if (!(pred > 0.0))
                    throw std::invalid_argument("fit_bias: nonpositive predicted intensity");
                const double obs = std::max(observed[v], obs_floor);
                const double resid = std::log(obs) - std::log(pred);
                for (std::size_t p = 0; p < P; ++p)
                    row(p) = -current.basis_value(p, x, y, z);
                ata.noalias() += w * row * row.transpose();
                atb.noalias() += (w * resid) * row;
            }

    ata.diagonal().array() += 1e-8;
    const Eigen::LDLT<Eigen::MatrixXd> solver(ata);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("fit_bias: normal equations not solvable after damping");
    const Eigen::VectorXd c = solver.solve(atb);

    BiasModel next(current.grid(), current.degree());
    std::vector<double> coeffs(P);
    for (std::size_t p = 0; p < P; ++p)
        coeffs[p] = c(p);
    next.set_coeffs(std::move(coeffs));
    return next;
}

} // namespace fuselage
