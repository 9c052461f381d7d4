#ifndef FUSELAGE_BIAS_HPP
#define FUSELAGE_BIAS_HPP

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselage/volume.hpp"

namespace fuselage {

// Multiplicative bias field: observed = clean * exp(-sum_p c_p psi_p(x)).
// The basis is the full set of monomial products x^a y^b z^c with total
// degree a+b+c <= degree, evaluated on coordinates normalized to [-1,1]^3
// over the grid extent. psi_0 == 1; ordering is by total degree, then
// lexicographic in (a, b, c).
class BiasModel {
public:
    BiasModel() = default;
    BiasModel(const GridMeta& grid, int degree);

    int degree() const { return degree_; }
    std::size_t n_basis() const { return powers_.size(); }
    const std::vector<double>& coeffs() const { return coeffs_; }
    void set_coeffs(std::vector<double> c);

    // psi_p at a voxel, p indexing the basis order above
    double basis_value(std::size_t p, int x, int y, int z) const;

    // log of the multiplicative field: sum_p c_p psi_p(x)
    double log_field(int x, int y, int z) const;
    double log_field(std::size_t voxel) const;

    const GridMeta& grid() const { return grid_; }

    nlohmann::json to_json() const;
    static BiasModel from_json(const nlohmann::json& j);

private:
    GridMeta grid_;
    int degree_ = 0;
    std::vector<std::array<int, 3>> powers_;
    std::vector<double> coeffs_;
    std::array<double, 3> scale_{0, 0, 0};
    std::array<double, 3> shift_{0, 0, 0};
};

// observed(x) = clean(x) * exp(-sum_p c_p psi_p(x))
ScalarVolume apply_bias(const ScalarVolume& clean, const BiasModel& bias);

// inverse of apply_bias: multiplies by exp(+sum_p c_p psi_p(x))
ScalarVolume correct_bias(const ScalarVolume& observed, const BiasModel& bias);

// Re-fit the coefficients by weighted least squares in the log domain:
// regress log(observed) - log(predicted) onto {-psi_p} with per-voxel
// weights, solving damped normal equations (Tikhonov 1e-8). `predicted` is
// the expected clean intensity at each voxel under the current
// responsibilities and label means; nonpositive entries of `observed` are
// floored at 1e-6 of its maximum. Voxels with weight 0 are excluded.
BiasModel fit_bias(const std::vector<double>& observed, const std::vector<double>& predicted,
                   const std::vector<double>& weights, const BiasModel& current);

} // namespace fuselage

#endif
