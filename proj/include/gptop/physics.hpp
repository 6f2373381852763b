#pragma once

// Loss terms for the simultaneous formulation: compliance and potential-energy
// losses built from two stress tensors that share values but carry different
// gradients, the volume-fraction penalty, and finite-difference kinematics on
// padded structured grids. PDE residuals are provided as diagnostics only.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gptop/errors.hpp"
#include "gptop/tensor.hpp"

namespace gptop::phys {

struct MaterialParams {
    double e_max = 1.0;
    double e_min = 1e-3;
    double nu = 0.3;
    double penal = 3.0;
    double eps_stab = 1e-5;

    void validate() const {
        if (!(0 < e_min && e_min < e_max)) throw ParameterError("material: need 0 < E_min < E_max");
        if (penal < 1) throw ParameterError("material: penalization must be at least 1");
    }
};

struct StrainField {
    ad::Tensor exx, eyy, exy;  // [Ny x Nx], symmetric shear convention
};

struct StressField {
    ad::Tensor sxx, syy, sxy;
};

/// Small-strain tensor from displacement fields on a padded structured grid.
inline StrainField strain(const ad::Tensor& u1, const ad::Tensor& u2, double dx, double dy) {
    StrainField s;
    s.exx = ad::fd_central_diff(u1, 1, dx);
    s.eyy = ad::fd_central_diff(u2, 0, dy);
    s.exy = ad::scale(ad::add(ad::fd_central_diff(u1, 0, dy), ad::fd_central_diff(u2, 1, dx)), 0.5);
    return s;
}

inline StrainField detach(const StrainField& s) {
    return {ad::detach(s.exx), ad::detach(s.eyy), ad::detach(s.exy)};
}

/// SIMP-style modulus from the detached density; contributes no density
/// gradients, so the potential-energy loss only trains the displacement path.
inline ad::Tensor modulus_p(const ad::Tensor& rho_hat, const MaterialParams& mp = {}) {
    return ad::add_scalar(ad::scale(ad::pow(rho_hat, mp.penal), mp.e_max - mp.e_min), mp.e_min);
}

/// Modulus with the same values as modulus_p but an adjoint-consistent
/// gradient: E_min + rho_hat^(2p) / (rho^p + eps) * (E_max - E_min), so
/// differentiating the compliance loss reproduces the adjoint result with its
/// negative sign.
inline ad::Tensor modulus_c(const ad::Tensor& rho, const ad::Tensor& rho_hat,
                            const MaterialParams& mp = {}) {
    ad::Tensor numer = ad::detach(ad::pow(rho_hat, 2.0 * mp.penal));
    ad::Tensor denom = ad::add_scalar(ad::pow(rho, mp.penal), mp.eps_stab);
    return ad::add_scalar(ad::scale(ad::div(numer, denom), mp.e_max - mp.e_min), mp.e_min);
}

/// Plane-stress constitutive evaluation with a spatially varying modulus.
inline StressField stress(const StrainField& eps, const ad::Tensor& emod, double nu) {
    ad::Tensor c1 = ad::scale(emod, 1.0 / (1.0 - nu * nu));
    StressField s;
    s.sxx = ad::mul(c1, ad::add(eps.exx, ad::scale(eps.eyy, nu)));
    s.syy = ad::mul(c1, ad::add(eps.eyy, ad::scale(eps.exx, nu)));
    s.sxy = ad::mul(ad::scale(emod, 1.0 / (1.0 + nu)), eps.exy);
    return s;
}

/// Double contraction sigma : eps (the shear component counts twice).
inline ad::Tensor contraction(const StressField& s, const StrainField& e) {
    return ad::add(ad::add(ad::mul(s.sxx, e.exx), ad::mul(s.syy, e.eyy)),
                   ad::scale(ad::mul(s.sxy, e.exy), 2.0));
}

/// Traction collocation data for one grid: flat indices into the padded CP
/// set, quadrature weights s_i (mm for line loads, 1 for point loads), and
/// force densities (N/mm) or point-load shares (N).
struct TractionSpec {
    std::vector<std::size_t> cp_indices;
    std::vector<double> weights;
    std::vector<Eigen::Vector2d> forces;

    double total_fx() const {
        double t = 0;
        for (std::size_t i = 0; i < forces.size(); ++i) t += forces[i](0) * weights[i];
        return t;
    }
    double total_fy() const {
        double t = 0;
        for (std::size_t i = 0; i < forces.size(); ++i) t += forces[i](1) * weights[i];
        return t;
    }
};

/// sum_i f(x_i)^T u(x_i) s_i over the traction CPs.
inline ad::Tensor external_work(const ad::Tensor& u1_flat, const ad::Tensor& u2_flat,
                                const TractionSpec& traction) {
    if (traction.cp_indices.empty()) return ad::Tensor::scalar(0.0);
    std::vector<double> w1(traction.cp_indices.size()), w2(traction.cp_indices.size());
    for (std::size_t i = 0; i < traction.cp_indices.size(); ++i) {
        w1[i] = traction.forces[i](0) * traction.weights[i];
        w2[i] = traction.forces[i](1) * traction.weights[i];
    }
    ad::Tensor su1 = ad::gather_rows(u1_flat, traction.cp_indices);
    ad::Tensor su2 = ad::gather_rows(u2_flat, traction.cp_indices);
    return ad::add(ad::dot_const(su1, w1), ad::dot_const(su2, w2));
}

/// Compliance loss (V/n_cp) sum sigma_C : eps_hat over the in-domain CPs.
/// Strain must be detached; gradients flow into the density path only.
inline ad::Tensor compliance_loss(const ad::Tensor& rho, const ad::Tensor& rho_hat,
                                  const StrainField& eps_hat, const std::vector<double>& mask,
                                  double volume, const MaterialParams& mp = {}) {
    double n_cp = 0;
    for (double m : mask) n_cp += m;
    ad::Tensor emod = modulus_c(rho, rho_hat, mp);
    ad::Tensor integrand = contraction(stress(eps_hat, emod, mp.nu), eps_hat);
    return ad::scale(ad::dot_const(integrand, mask), volume / n_cp);
}

struct PotentialLoss {
    ad::Tensor loss;
    double strain_energy_x2 = 0.0;  // 2 x strain energy (value)
    double work = 0.0;              // external work (value)
};

/// Total potential energy with the positivity offset:
/// (V/2n) sum sigma_P : eps - sum f u s + (delta/2) sum f u_hat s.
/// The offset uses detached displacements, so it shifts values without
/// touching gradients.
inline PotentialLoss potential_loss(const StrainField& eps, const ad::Tensor& rho_hat,
                                    const ad::Tensor& u1_flat, const ad::Tensor& u2_flat,
                                    const TractionSpec& traction, const std::vector<double>& mask,
                                    double volume, const MaterialParams& mp = {},
                                    double delta = 1.01) {
    double n_cp = 0;
    for (double m : mask) n_cp += m;
    ad::Tensor emod = modulus_p(rho_hat, mp);
    ad::Tensor energy = ad::scale(
        ad::dot_const(contraction(stress(eps, emod, mp.nu), eps), mask), volume / (2.0 * n_cp));

    ad::Tensor work = external_work(u1_flat, u2_flat, traction);
    ad::Tensor tau = ad::scale(
        external_work(ad::detach(u1_flat), ad::detach(u2_flat), traction), 0.5 * delta);

    PotentialLoss out;
    out.loss = ad::add(ad::sub(energy, work), tau);
    out.strain_energy_x2 = 2.0 * energy.item();
    out.work = work.item();
    return out;
}

/// Squared relative volume violation (1/n sum rho / psi - 1)^2.
inline ad::Tensor volume_loss(const ad::Tensor& rho, const std::vector<double>& mask,
                              double psi_f) {
    if (psi_f <= 0) throw ParameterError("volume_loss: psi_f must be positive");
    double n_cp = 0;
    for (double m : mask) n_cp += m;
    ad::Tensor mean_rho = ad::scale(ad::dot_const(rho, mask), 1.0 / n_cp);
    ad::Tensor violation = ad::add_scalar(ad::scale(mean_rho, 1.0 / psi_f), -1.0);
    return ad::mul(violation, violation);
}

struct LossParts {
    double compliance = 0.0;
    double potential = 0.0;
    double volume_sq = 0.0;
};

/// Weighted total L_C + alpha0 L_P + alpha1 C1^2 with a non-finite guard.
inline ad::Tensor total_loss(const ad::Tensor& lc, const ad::Tensor& lp, const ad::Tensor& c1sq,
                             double alpha0, double alpha1, LossParts* parts = nullptr) {
    auto check = [](const ad::Tensor& t, const char* name) {
        if (!std::isfinite(t.item()))
            throw TrainingFault(std::string("non-finite loss term ") + name);
        return t.item();
    };
    double vc = check(lc, "L_C"), vp = check(lp, "L_P"), vv = check(c1sq, "C1^2");
    if (parts) *parts = {vc, vp, vv};
    return ad::add(lc, ad::add(ad::scale(lp, alpha0), ad::scale(c1sq, alpha1)));
}

// ---------------------------------------------------------------------------
// Value-only stencils and PDE residual diagnostics
// ---------------------------------------------------------------------------

struct Field2d {
    std::size_t ny = 0, nx = 0;
    std::vector<double> v;
    double& at(std::size_t j, std::size_t i) { return v[j * nx + i]; }
    double at(std::size_t j, std::size_t i) const { return v[j * nx + i]; }
};

inline void check_grid(const Field2d& f) {
    if (f.ny < 5 || f.nx < 5) throw GridError("stencil: grid thinner than 5 points");
    if (f.v.size() != f.ny * f.nx) throw GridError("stencil: field size mismatch");
}

inline Field2d fd_dx(const Field2d& f, double dx) {
    check_grid(f);
    Field2d o{f.ny, f.nx, std::vector<double>(f.v.size(), 0.0)};
    for (std::size_t j = 0; j < f.ny; ++j)
        for (std::size_t i = 1; i + 1 < f.nx; ++i)
            o.at(j, i) = (f.at(j, i + 1) - f.at(j, i - 1)) / (2 * dx);
    return o;
}

inline Field2d fd_dy(const Field2d& f, double dy) {
    check_grid(f);
    Field2d o{f.ny, f.nx, std::vector<double>(f.v.size(), 0.0)};
    for (std::size_t j = 1; j + 1 < f.ny; ++j)
        for (std::size_t i = 0; i < f.nx; ++i)
            o.at(j, i) = (f.at(j + 1, i) - f.at(j - 1, i)) / (2 * dy);
    return o;
}

inline Field2d fd_dxx(const Field2d& f, double dx) {
    check_grid(f);
    Field2d o{f.ny, f.nx, std::vector<double>(f.v.size(), 0.0)};
    for (std::size_t j = 0; j < f.ny; ++j)
        for (std::size_t i = 1; i + 1 < f.nx; ++i)
            o.at(j, i) = (f.at(j, i + 1) - 2 * f.at(j, i) + f.at(j, i - 1)) / (dx * dx);
    return o;
}

inline Field2d fd_dyy(const Field2d& f, double dy) {
    check_grid(f);
    Field2d o{f.ny, f.nx, std::vector<double>(f.v.size(), 0.0)};
    for (std::size_t j = 1; j + 1 < f.ny; ++j)
        for (std::size_t i = 0; i < f.nx; ++i)
            o.at(j, i) = (f.at(j + 1, i) - 2 * f.at(j, i) + f.at(j - 1, i)) / (dy * dy);
    return o;
}

inline Field2d fd_dxy(const Field2d& f, double dx, double dy) {
    check_grid(f);
    Field2d o{f.ny, f.nx, std::vector<double>(f.v.size(), 0.0)};
    for (std::size_t j = 1; j + 1 < f.ny; ++j)
        for (std::size_t i = 1; i + 1 < f.nx; ++i)
            o.at(j, i) = (f.at(j + 1, i + 1) - f.at(j - 1, i + 1) - f.at(j + 1, i - 1) +
                          f.at(j - 1, i - 1)) /
                         (4 * dx * dy);
    return o;
}

struct PdeResiduals {
    Field2d r1, r2;
    double mean_sq_1 = 0.0, mean_sq_2 = 0.0;
};

/// Strong-form residuals of plane-stress equilibrium, evaluated pointwise
/// with the local modulus. Diagnostic only; never part of the training loss.
inline PdeResiduals pde_residuals(const Field2d& u1, const Field2d& u2, const Field2d& emod,
                                  double nu, double dx, double dy,
                                  const std::vector<double>& mask) {
    Field2d u1xx = fd_dxx(u1, dx), u1yy = fd_dyy(u1, dy), u1xy = fd_dxy(u1, dx, dy);
    Field2d u2xx = fd_dxx(u2, dx), u2yy = fd_dyy(u2, dy), u2xy = fd_dxy(u2, dx, dy);

    PdeResiduals out;
    out.r1 = Field2d{u1.ny, u1.nx, std::vector<double>(u1.v.size(), 0.0)};
    out.r2 = Field2d{u1.ny, u1.nx, std::vector<double>(u1.v.size(), 0.0)};
    double n = 0;
    for (std::size_t k = 0; k < u1.v.size(); ++k) {
        if (mask[k] == 0.0) continue;
        double e = emod.v[k];
        double a = e / (1 - nu * nu);
        double b = e / (2 * (1 + nu));
        double c = e * nu / (1 - nu * nu) + b;
        out.r1.v[k] = a * u1xx.v[k] + b * u1yy.v[k] + c * u2xy.v[k];
        out.r2.v[k] = b * u2xx.v[k] + a * u2yy.v[k] + c * u1xy.v[k];
        out.mean_sq_1 += out.r1.v[k] * out.r1.v[k];
        out.mean_sq_2 += out.r2.v[k] * out.r2.v[k];
        n += 1;
    }
    if (n > 0) {
        out.mean_sq_1 /= n;
        out.mean_sq_2 /= n;
    }
    return out;
}

}  // namespace gptop::phys
