#pragma once

// Q4 plane-stress finite elements, the classical density-based compliance
// optimizer with OC updates and sensitivity filtering, and the scoring oracle
// used on every final design. Unit element size is 1 mm so forces in N give
// compliance in mJ.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gptop/errors.hpp"
#include "gptop/problems.hpp"

namespace gptop::fem {

inline constexpr double kRhoMin = 1e-3;

/// Structured quad mesh. Nodes are numbered column-major: id = ix*(nely+1)+iy,
/// with two dofs per node (ux = 2*id, uy = 2*id+1) and y pointing up.
struct Mesh {
    int nelx = 0, nely = 0;
    double elem_size = 1.0;  // mm

    Mesh() = default;
    Mesh(int nx, int ny, double h = 1.0) : nelx(nx), nely(ny), elem_size(h) {
        if (nx < 1 || ny < 1) throw ParameterError("mesh: element counts must be >= 1");
    }

    int nnode() const { return (nelx + 1) * (nely + 1); }
    int ndof() const { return 2 * nnode(); }
    int nelem() const { return nelx * nely; }
    int node_id(int ix, int iy) const { return ix * (nely + 1) + iy; }
    int elem_id(int ex, int ey) const { return ex * nely + ey; }

    /// Element dofs in counterclockwise corner order: ll, lr, ur, ul.
    std::array<int, 8> edofs(int ex, int ey) const {
        int n1 = node_id(ex, ey), n2 = node_id(ex + 1, ey);
        int n3 = node_id(ex + 1, ey + 1), n4 = node_id(ex, ey + 1);
        return {2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1, 2 * n3, 2 * n3 + 1, 2 * n4, 2 * n4 + 1};
    }

    std::pair<double, double> centroid(int ex, int ey) const {
        return {(ex + 0.5) * elem_size, (ey + 0.5) * elem_size};
    }
};

enum class PassiveKind : std::uint8_t { Free = 0, Void = 1, Solid = 2, Fixed = 3 };

struct BoundaryData {
    std::vector<int> fixed_dofs;                   // sorted, unique
    std::vector<std::pair<int, double>> loads;     // (dof, magnitude N)
    std::vector<PassiveKind> passive;              // per element
    std::vector<double> passive_value;             // value for Fixed entries
    std::vector<std::uint8_t> design;              // 1 when the element is a design variable

    void validate(const Mesh& mesh) const {
        for (int d : fixed_dofs)
            if (d < 0 || d >= mesh.ndof()) throw ParameterError("fixed dof out of range");
        for (auto [d, f] : loads) {
            if (d < 0 || d >= mesh.ndof()) throw ParameterError("loaded dof out of range");
            if (std::binary_search(fixed_dofs.begin(), fixed_dofs.end(), d))
                throw ParameterError("dof " + std::to_string(d) + " both fixed and loaded");
        }
    }
};

/// Unit-modulus Q4 plane-stress element stiffness (square element, thickness
/// 1). Closed form of the standard bilinear element; see the quadrature test
/// for the independent derivation.
inline Eigen::Matrix<double, 8, 8> element_stiffness(double nu) {
    if (nu < 0.0 || nu >= 0.5) throw ParameterError("element_stiffness: nu outside [0, 0.5)");
    const double a11[16] = {12, 3, -6, -3, 3, 12, 3, 0, -6, 3, 12, -3, -3, 0, -3, 12};
    const double a12[16] = {-6, -3, 0, 3, -3, -6, -3, -6, 0, -3, -6, 3, 3, -6, 3, -6};
    const double b11[16] = {-4, 3, -2, 9, 3, -4, -9, 4, -2, -9, -4, -3, 9, 4, -3, -4};
    const double b12[16] = {2, -3, 4, -9, -3, 2, 9, -2, 4, 9, 2, 3, -9, -2, 3, 2};
    Eigen::Matrix4d A11, A12, B11, B12;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            A11(i, j) = a11[4 * i + j];
            A12(i, j) = a12[4 * i + j];
            B11(i, j) = b11[4 * i + j];
            B12(i, j) = b12[4 * i + j];
        }
    Eigen::Matrix<double, 8, 8> ke;
    ke.block<4, 4>(0, 0) = A11 + nu * B11;
    ke.block<4, 4>(0, 4) = A12 + nu * B12;
    ke.block<4, 4>(4, 0) = (A12 + nu * B12).transpose();
    ke.block<4, 4>(4, 4) = A11 + nu * B11;
    ke /= 24.0 * (1.0 - nu * nu);
    return ke;
}

struct MaterialLaw {
    double e_min = 1e-3, e_max = 1.0, penal = 3.0, nu = 0.3;
    double modulus(double rho) const { return e_min + std::pow(rho, penal) * (e_max - e_min); }
    double dmodulus(double rho) const {
        return penal * std::pow(rho, penal - 1.0) * (e_max - e_min);
    }
};

/// Assembles and solves the reduced SPD system. The sparsity pattern and
/// symbolic factorization are cached across calls for the same mesh/BCs.
class Solver {
public:
    Solver(const Mesh& mesh, const BoundaryData& bc, double nu)
        : mesh_(mesh), bc_(bc), ke_(element_stiffness(nu)) {
        bc_.validate(mesh_);
        if (bc_.fixed_dofs.size() < 3)
            throw ParameterError("solver: at least 3 fixed dofs required");
        free_index_.assign(mesh_.ndof(), -1);
        int k = 0;
        for (int d = 0; d < mesh_.ndof(); ++d) {
            if (!std::binary_search(bc_.fixed_dofs.begin(), bc_.fixed_dofs.end(), d))
                free_index_[d] = k++;
        }
        nfree_ = k;
        build_pattern();
        f_ = Eigen::VectorXd::Zero(nfree_);
        for (auto [d, v] : bc_.loads)
            if (free_index_[d] >= 0) f_(free_index_[d]) += v;
    }

    /// Full-length displacement vector (fixed dofs zero).
    Eigen::VectorXd solve(const std::vector<double>& densities, const MaterialLaw& law) {
        fill_values(densities, law);
        llt_.factorize(kmat_);
        bool singular = llt_.info() != Eigen::Success;
        if (!singular) {
            double dmin = llt_.vectorD().minCoeff(), dmax = llt_.vectorD().maxCoeff();
            singular = !(dmin > 1e-10 * dmax);
        }
        if (singular)
            throw NumericalError("singular reduced system; first free rigid mode: " +
                                 diagnose_rigid_mode());
        Eigen::VectorXd uf = llt_.solve(f_);
        double res = (kmat_.selfadjointView<Eigen::Lower>() * uf - f_).norm();
        double fn = f_.norm();
        if (fn > 0 && res > 1e-8 * fn)
            throw NumericalError("solver residual " + std::to_string(res / fn) + " exceeds 1e-8");
        Eigen::VectorXd u = Eigen::VectorXd::Zero(mesh_.ndof());
        for (int d = 0; d < mesh_.ndof(); ++d)
            if (free_index_[d] >= 0) u(d) = uf(free_index_[d]);
        return u;
    }

    const Eigen::VectorXd& reduced_load() const { return f_; }
    const Mesh& mesh() const { return mesh_; }
    const Eigen::Matrix<double, 8, 8>& ke() const { return ke_; }

    double external_work(const Eigen::VectorXd& u) const {
        double w = 0.0;
        for (auto [d, v] : bc_.loads) w += v * u(d);
        return w;
    }

private:
    void build_pattern() {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(mesh_.nelem()) * 36);
        for (int ex = 0; ex < mesh_.nelx; ++ex)
            for (int ey = 0; ey < mesh_.nely; ++ey) {
                auto ed = mesh_.edofs(ex, ey);
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        int fi = free_index_[ed[i]], fj = free_index_[ed[j]];
                        if (fi >= 0 && fj >= 0 && fi >= fj) trips.emplace_back(fi, fj, 0.0);
                    }
            }
        kmat_.resize(nfree_, nfree_);
        kmat_.setFromTriplets(trips.begin(), trips.end());
        kmat_.makeCompressed();
        llt_.analyzePattern(kmat_);

        // Map each element entry to its compressed-storage slot.
        slot_.assign(static_cast<std::size_t>(mesh_.nelem()) * 64, -1);
        for (int ex = 0; ex < mesh_.nelx; ++ex)
            for (int ey = 0; ey < mesh_.nely; ++ey) {
                auto ed = mesh_.edofs(ex, ey);
                std::size_t base = static_cast<std::size_t>(mesh_.elem_id(ex, ey)) * 64;
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        int fi = free_index_[ed[i]], fj = free_index_[ed[j]];
                        if (fi < 0 || fj < 0 || fi < fj) continue;
                        // column-major CSC: search row fi within column fj
                        for (int p = kmat_.outerIndexPtr()[fj]; p < kmat_.outerIndexPtr()[fj + 1];
                             ++p) {
                            if (kmat_.innerIndexPtr()[p] == fi) {
                                slot_[base + static_cast<std::size_t>(8 * i + j)] = p;
                                break;
                            }
                        }
                    }
            }
    }

    void fill_values(const std::vector<double>& densities, const MaterialLaw& law) {
        if (static_cast<int>(densities.size()) != mesh_.nelem())
            throw DimensionError("solver: density count mismatch");
        std::fill(kmat_.valuePtr(), kmat_.valuePtr() + kmat_.nonZeros(), 0.0);
        for (int ex = 0; ex < mesh_.nelx; ++ex)
            for (int ey = 0; ey < mesh_.nely; ++ey) {
                int e = mesh_.elem_id(ex, ey);
                double rho = densities[static_cast<std::size_t>(e)];
                if (rho < kRhoMin - 1e-12 || rho > 1.0 + 1e-12)
                    throw ParameterError("density outside [rho_min, 1]");
                double em = law.modulus(rho);
                std::size_t base = static_cast<std::size_t>(e) * 64;
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        int p = slot_[base + static_cast<std::size_t>(8 * i + j)];
                        if (p >= 0) kmat_.valuePtr()[p] += em * ke_(i, j);
                    }
            }
    }

    std::string diagnose_rigid_mode() {
        // Inverse iteration on a slightly shifted copy picks out the dominant
        // null direction, which is then matched against the rigid basis.
        Eigen::SparseMatrix<double> shifted = kmat_;
        for (int d = 0; d < nfree_; ++d) shifted.coeffRef(d, d) += 1e-8;
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
        if (ldlt.info() != Eigen::Success) return "unknown (shifted factorization failed)";
        Eigen::VectorXd v = Eigen::VectorXd::Ones(nfree_);
        for (int it = 0; it < 5; ++it) {
            v = ldlt.solve(v);
            v.normalize();
        }
        Eigen::VectorXd tx = Eigen::VectorXd::Zero(nfree_), ty = Eigen::VectorXd::Zero(nfree_),
                        rot = Eigen::VectorXd::Zero(nfree_);
        for (int ix = 0; ix <= mesh_.nelx; ++ix)
            for (int iy = 0; iy <= mesh_.nely; ++iy) {
                int n = mesh_.node_id(ix, iy);
                double x = ix * mesh_.elem_size, y = iy * mesh_.elem_size;
                int fx = free_index_[2 * n], fy = free_index_[2 * n + 1];
                if (fx >= 0) {
                    tx(fx) = 1.0;
                    rot(fx) = -y;
                }
                if (fy >= 0) {
                    ty(fy) = 1.0;
                    rot(fy) = x;
                }
            }
        double cx = std::abs(tx.normalized().dot(v));
        double cy = std::abs(ty.normalized().dot(v));
        double cr = rot.norm() > 0 ? std::abs(rot.normalized().dot(v)) : 0.0;
        if (cx >= cy && cx >= cr) return "translation-x";
        if (cy >= cx && cy >= cr) return "translation-y";
        return "rotation";
    }

    Mesh mesh_;
    BoundaryData bc_;
    Eigen::Matrix<double, 8, 8> ke_;
    std::vector<int> free_index_;
    int nfree_ = 0;
    Eigen::SparseMatrix<double> kmat_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> llt_;
    std::vector<int> slot_;
    Eigen::VectorXd f_;
};

/// Compliance sum_e E(rho_e) u_e^T K0 u_e in mJ.
inline double compliance(const Mesh& mesh, const Eigen::Matrix<double, 8, 8>& ke,
                         const Eigen::VectorXd& u, const std::vector<double>& densities,
                         const MaterialLaw& law) {
    double c = 0.0;
    Eigen::Matrix<double, 8, 1> ue;
    for (int ex = 0; ex < mesh.nelx; ++ex)
        for (int ey = 0; ey < mesh.nely; ++ey) {
            auto ed = mesh.edofs(ex, ey);
            for (int i = 0; i < 8; ++i) ue(i) = u(ed[i]);
            c += law.modulus(densities[static_cast<std::size_t>(mesh.elem_id(ex, ey))]) *
                 ue.dot(ke * ue);
        }
    return c;
}

/// dC/drho_e = -p rho^(p-1) (Emax-Emin) u_e^T K0 u_e (nonpositive).
inline std::vector<double> compliance_sensitivity(const Mesh& mesh,
                                                  const Eigen::Matrix<double, 8, 8>& ke,
                                                  const Eigen::VectorXd& u,
                                                  const std::vector<double>& densities,
                                                  const MaterialLaw& law) {
    std::vector<double> dc(static_cast<std::size_t>(mesh.nelem()));
    Eigen::Matrix<double, 8, 1> ue;
    for (int ex = 0; ex < mesh.nelx; ++ex)
        for (int ey = 0; ey < mesh.nely; ++ey) {
            auto ed = mesh.edofs(ex, ey);
            for (int i = 0; i < 8; ++i) ue(i) = u(ed[i]);
            int e = mesh.elem_id(ex, ey);
            dc[static_cast<std::size_t>(e)] =
                -law.dmodulus(densities[static_cast<std::size_t>(e)]) * ue.dot(ke * ue);
        }
    return dc;
}

/// Classical density-weighted sensitivity filter with a linear cone of the
/// given radius (element units). Radius below 1 reduces to the identity.
inline std::vector<double> sensitivity_filter(const Mesh& mesh, const std::vector<double>& dc,
                                              const std::vector<double>& densities, double radius) {
    std::vector<double> out(dc.size());
    const int reach = std::max(0, static_cast<int>(std::ceil(radius)) - 1);
    for (int ex = 0; ex < mesh.nelx; ++ex)
        for (int ey = 0; ey < mesh.nely; ++ey) {
            double acc = 0.0, wsum = 0.0;
            for (int ix = std::max(0, ex - reach); ix <= std::min(mesh.nelx - 1, ex + reach); ++ix)
                for (int iy = std::max(0, ey - reach); iy <= std::min(mesh.nely - 1, ey + reach);
                     ++iy) {
                    double w = radius - std::hypot(double(ix - ex), double(iy - ey));
                    if (w <= 0) continue;
                    std::size_t i = static_cast<std::size_t>(mesh.elem_id(ix, iy));
                    acc += w * densities[i] * dc[i];
                    wsum += w;
                }
            std::size_t e = static_cast<std::size_t>(mesh.elem_id(ex, ey));
            out[e] = acc / (densities[e] * wsum);
        }
    return out;
}

/// Optimality-criteria update with move limit and square-root damping. The
/// multiplier is bisected until the mean design density matches the target to
/// 1e-4. Targets outside the move-limited reachable band are clamped to it.
/// `volume_of` maps a candidate design vector to the constrained volume
/// measure (identity for sensitivity filtering, filtered mean for density
/// filtering).
inline std::vector<double> oc_update(
    const std::vector<double>& densities, const std::vector<double>& dc, double target_vf,
    const std::vector<std::uint8_t>& design, double move = 0.2,
    const std::function<double(const std::vector<double>&)>& volume_of = {}) {
    const std::size_t n = densities.size();
    for (std::size_t e = 0; e < n; ++e)
        if (design[e] && dc[e] > 0)
            throw ParameterError("oc_update: compliance sensitivities must be nonpositive");

    std::size_t ndesign = 0;
    for (std::size_t e = 0; e < n; ++e)
        if (design[e]) ++ndesign;
    if (ndesign == 0) throw ParameterError("oc_update: no design elements");

    auto mean_of = [&](const std::vector<double>& v) {
        if (volume_of) return volume_of(v);
        double m = 0.0;
        for (std::size_t e = 0; e < n; ++e)
            if (design[e]) m += v[e];
        return m / double(ndesign);
    };

    std::vector<double> probe(n);
    auto move_extreme = [&](double dir) {
        for (std::size_t e = 0; e < n; ++e)
            probe[e] = design[e] ? std::clamp(densities[e] + dir * move, kRhoMin, 1.0)
                                 : densities[e];
        return mean_of(probe);
    };
    double target = std::clamp(target_vf, move_extreme(-1.0), move_extreme(+1.0));

    auto step = [&](double lambda, std::vector<double>& out) {
        for (std::size_t e = 0; e < n; ++e) {
            if (!design[e]) {
                out[e] = densities[e];
                continue;
            }
            double be = densities[e] * std::sqrt(std::max(0.0, -dc[e]) / lambda);
            double v = std::clamp(be, densities[e] - move, densities[e] + move);
            out[e] = std::clamp(v, kRhoMin, 1.0);
        }
        return mean_of(out);
    };

    std::vector<double> out(n);
    double l1 = 1e-12, l2 = 1e12;
    if (step(l1, out) < target - 1e-4 || step(l2, out) > target + 1e-4)
        throw NumericalError("oc_update: multiplier does not bracket the volume target in [" +
                             std::to_string(l1) + ", " + std::to_string(l2) + "]");
    for (int it = 0; it < 200; ++it) {
        double lm = std::sqrt(l1 * l2);
        double mean = step(lm, out);
        if (std::abs(mean - target) <= 1e-4) return out;
        if (mean > target)
            l1 = lm;  // too little penalization of volume -> raise multiplier
        else
            l2 = lm;
    }
    throw NumericalError("oc_update: bisection failed to converge between " + std::to_string(l1) +
                         " and " + std::to_string(l2));
}

/// Linear-cone smoothing operator shared by both filtering modes.
class ConeFilter {
public:
    ConeFilter(const Mesh& mesh, double radius) : mesh_(mesh), radius_(radius) {
        const int reach = std::max(0, static_cast<int>(std::ceil(radius)) - 1);
        const std::size_t n = static_cast<std::size_t>(mesh.nelem());
        offsets_.clear();
        for (int dx = -reach; dx <= reach; ++dx)
            for (int dy = -reach; dy <= reach; ++dy) {
                double w = radius - std::hypot(double(dx), double(dy));
                if (w > 0) offsets_.push_back({dx, dy, w});
            }
        wsum_.assign(n, 0.0);
        for (int ex = 0; ex < mesh.nelx; ++ex)
            for (int ey = 0; ey < mesh.nely; ++ey) {
                double s = 0.0;
                for (const auto& o : offsets_) {
                    int ix = ex + o.dx, iy = ey + o.dy;
                    if (ix >= 0 && ix < mesh.nelx && iy >= 0 && iy < mesh.nely) s += o.w;
                }
                wsum_[static_cast<std::size_t>(mesh.elem_id(ex, ey))] = s;
            }
    }

    /// Row-normalized smoothing H v / Hs (density filter forward map).
    std::vector<double> smooth(const std::vector<double>& v) const {
        std::vector<double> out(v.size());
        for (int ex = 0; ex < mesh_.nelx; ++ex)
            for (int ey = 0; ey < mesh_.nely; ++ey) {
                double acc = 0.0;
                for (const auto& o : offsets_) {
                    int ix = ex + o.dx, iy = ey + o.dy;
                    if (ix >= 0 && ix < mesh_.nelx && iy >= 0 && iy < mesh_.nely)
                        acc += o.w * v[static_cast<std::size_t>(mesh_.elem_id(ix, iy))];
                }
                std::size_t e = static_cast<std::size_t>(mesh_.elem_id(ex, ey));
                out[e] = acc / wsum_[e];
            }
        return out;
    }

    /// Adjoint chain H^T (v ./ Hs) for density-filter sensitivities.
    std::vector<double> chain(const std::vector<double>& v) const {
        std::vector<double> scaled(v.size());
        for (std::size_t e = 0; e < v.size(); ++e) scaled[e] = v[e] / wsum_[e];
        std::vector<double> out(v.size(), 0.0);
        for (int ex = 0; ex < mesh_.nelx; ++ex)
            for (int ey = 0; ey < mesh_.nely; ++ey) {
                double acc = 0.0;
                for (const auto& o : offsets_) {
                    int ix = ex + o.dx, iy = ey + o.dy;
                    if (ix >= 0 && ix < mesh_.nelx && iy >= 0 && iy < mesh_.nely)
                        acc += o.w * scaled[static_cast<std::size_t>(mesh_.elem_id(ix, iy))];
                }
                out[static_cast<std::size_t>(mesh_.elem_id(ex, ey))] = acc;
            }
        return out;
    }

private:
    struct Offset {
        int dx, dy;
        double w;
    };
    Mesh mesh_;
    double radius_;
    std::vector<Offset> offsets_;
    std::vector<double> wsum_;
};

enum class FilterKind { Sensitivity, Density };

struct SimpIterate {
    int iteration;
    double compliance;
    double volume;
    double max_change;
};

struct SimpResult {
    std::vector<double> densities;
    std::vector<SimpIterate> history;
    double final_compliance = 0.0;
    int iterations = 0;
};

struct FemSetup {
    Mesh mesh;
    BoundaryData bc;
    std::vector<std::uint8_t> domain;  // element inside material domain
};

/// Maps a benchmark onto a structured mesh: fixed dofs from BC segments,
/// consistent nodal loads, passive masks from cuts and prescribed regions.
inline FemSetup make_fem_setup(const bench::ProblemSpec& prob, double elem_size = 1.0) {
    prob.validate();
    int nelx = static_cast<int>(std::lround(prob.length / elem_size));
    int nely = static_cast<int>(std::lround(prob.height / elem_size));
    FemSetup s{Mesh(nelx, nely, elem_size), {}, {}};
    const Mesh& mesh = s.mesh;
    const double tol = 1e-9;

    std::vector<int> fixed;
    for (const auto& bcseg : prob.disp_bcs) {
        for (int ix = 0; ix <= nelx; ++ix)
            for (int iy = 0; iy <= nely; ++iy) {
                double x = ix * elem_size, y = iy * elem_size;
                double dx = bcseg.x1 - bcseg.x0, dy = bcseg.y1 - bcseg.y0;
                double len2 = dx * dx + dy * dy;
                double t = len2 > 0 ? ((x - bcseg.x0) * dx + (y - bcseg.y0) * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                double px = bcseg.x0 + t * dx, py = bcseg.y0 + t * dy;
                if (std::hypot(x - px, y - py) < tol) {
                    int nid = mesh.node_id(ix, iy);
                    if (bcseg.fix_u1) fixed.push_back(2 * nid);
                    if (bcseg.fix_u2) fixed.push_back(2 * nid + 1);
                }
            }
    }
    std::sort(fixed.begin(), fixed.end());
    fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
    s.bc.fixed_dofs = std::move(fixed);

    for (const auto& pl : prob.point_loads) {
        int ix = static_cast<int>(std::lround(pl.x / elem_size));
        int iy = static_cast<int>(std::lround(pl.y / elem_size));
        int nid = mesh.node_id(ix, iy);
        if (pl.fx != 0.0) s.bc.loads.emplace_back(2 * nid, pl.fx);
        if (pl.fy != 0.0) s.bc.loads.emplace_back(2 * nid + 1, pl.fy);
    }
    for (const auto& ll : prob.line_loads) {
        // trapezoidal lumping onto the nodes along the segment
        bool horizontal = std::abs(ll.y1 - ll.y0) < tol;
        int i0 = static_cast<int>(std::lround((horizontal ? ll.x0 : ll.y0) / elem_size));
        int i1 = static_cast<int>(std::lround((horizontal ? ll.x1 : ll.y1) / elem_size));
        if (i1 < i0) std::swap(i0, i1);
        for (int i = i0; i <= i1; ++i) {
            double wt = (i == i0 || i == i1) ? 0.5 * elem_size : elem_size;
            int nid = horizontal
                          ? mesh.node_id(i, static_cast<int>(std::lround(ll.y0 / elem_size)))
                          : mesh.node_id(static_cast<int>(std::lround(ll.x0 / elem_size)), i);
            if (ll.fx != 0.0) s.bc.loads.emplace_back(2 * nid, wt * ll.fx);
            if (ll.fy != 0.0) s.bc.loads.emplace_back(2 * nid + 1, wt * ll.fy);
        }
    }

    s.bc.passive.assign(static_cast<std::size_t>(mesh.nelem()), PassiveKind::Free);
    s.bc.passive_value.assign(static_cast<std::size_t>(mesh.nelem()), 0.0);
    s.bc.design.assign(static_cast<std::size_t>(mesh.nelem()), 1);
    s.domain.assign(static_cast<std::size_t>(mesh.nelem()), 1);
    for (int ex = 0; ex < nelx; ++ex)
        for (int ey = 0; ey < nely; ++ey) {
            auto [cx, cy] = mesh.centroid(ex, ey);
            std::size_t e = static_cast<std::size_t>(mesh.elem_id(ex, ey));
            if (!prob.inside(cx, cy)) {
                s.bc.passive[e] = PassiveKind::Void;
                s.bc.design[e] = 0;
                s.domain[e] = 0;
                continue;
            }
            for (const auto& reg : prob.density_regions) {
                if (!reg.contains(cx, cy)) continue;
                if (reg.value <= kRhoMin)
                    s.bc.passive[e] = PassiveKind::Void;
                else if (reg.value >= 1.0)
                    s.bc.passive[e] = PassiveKind::Solid;
                else {
                    s.bc.passive[e] = PassiveKind::Fixed;
                    s.bc.passive_value[e] = reg.value;
                }
                s.bc.design[e] = 0;
            }
        }
    return s;
}

inline void apply_passive(const BoundaryData& bc, std::vector<double>& densities) {
    for (std::size_t e = 0; e < densities.size(); ++e) {
        switch (bc.passive[e]) {
            case PassiveKind::Free: break;
            case PassiveKind::Void: densities[e] = kRhoMin; break;
            case PassiveKind::Solid: densities[e] = 1.0; break;
            case PassiveKind::Fixed: densities[e] = std::max(kRhoMin, bc.passive_value[e]); break;
        }
    }
}

/// Full optimize loop: analyze, filter, OC until the density change drops
/// below tol or max_iters is reached. Initial densities are random with mean
/// at the target volume fraction. The density filter is the default because it
/// reproduces the reference baselines; the sensitivity filter remains
/// available as the classical alternative.
inline SimpResult simp_optimize(const bench::ProblemSpec& prob, double filter_radius,
                                std::uint64_t seed, int max_iters = 300, double tol = 0.01,
                                MaterialLaw law = {},
                                FilterKind filter_kind = FilterKind::Density,
                                double elem_size = 1.0) {
    FemSetup setup = make_fem_setup(prob, elem_size);
    Solver solver(setup.mesh, setup.bc, law.nu);
    const Mesh& mesh = setup.mesh;
    const bool density_mode = filter_kind == FilterKind::Density && filter_radius >= 1.0;
    ConeFilter cone(mesh, std::max(filter_radius, 1.0));

    std::mt19937_64 rng(seed);
    double half = std::min({0.2, prob.vol_frac - kRhoMin, 1.0 - prob.vol_frac});
    std::uniform_real_distribution<double> init(prob.vol_frac - half, prob.vol_frac + half);
    std::vector<double> x(static_cast<std::size_t>(mesh.nelem()));
    for (auto& v : x) v = init(rng);
    apply_passive(setup.bc, x);

    auto physical = [&](const std::vector<double>& design) {
        if (!density_mode) return design;
        std::vector<double> xp = cone.smooth(design);
        for (auto& v : xp) v = std::clamp(v, kRhoMin, 1.0);
        apply_passive(setup.bc, xp);
        return xp;
    };
    auto design_volume = [&](const std::vector<double>& design) {
        std::vector<double> xp = physical(design);
        double vol = 0.0;
        std::size_t nd = 0;
        for (std::size_t e = 0; e < xp.size(); ++e)
            if (setup.bc.design[e]) {
                vol += xp[e];
                ++nd;
            }
        return vol / double(nd);
    };

    std::vector<double> xphys = physical(x);
    SimpResult result;
    for (int it = 1; it <= max_iters; ++it) {
        Eigen::VectorXd u = solver.solve(xphys, law);
        double c = compliance(mesh, solver.ke(), u, xphys, law);
        std::vector<double> dc = compliance_sensitivity(mesh, solver.ke(), u, xphys, law);
        if (density_mode)
            dc = cone.chain(dc);
        else
            dc = sensitivity_filter(mesh, dc, x, filter_radius);
        for (std::size_t e = 0; e < dc.size(); ++e)
            if (dc[e] > 0.0) dc[e] = 0.0;  // filtered values can drift by rounding

        std::vector<double> xnew =
            oc_update(x, dc, prob.vol_frac, setup.bc.design, 0.2,
                      density_mode ? std::function<double(const std::vector<double>&)>(design_volume)
                                   : std::function<double(const std::vector<double>&)>{});
        apply_passive(setup.bc, xnew);

        double change = 0.0;
        for (std::size_t e = 0; e < x.size(); ++e)
            change = std::max(change, std::abs(xnew[e] - x[e]));
        x = std::move(xnew);
        xphys = physical(x);

        double vol = 0.0;
        std::size_t nd = 0;
        for (std::size_t e = 0; e < xphys.size(); ++e)
            if (setup.bc.design[e]) {
                vol += xphys[e];
                ++nd;
            }
        vol /= double(nd);

        result.history.push_back({it, c, vol, change});
        result.final_compliance = c;
        result.iterations = it;
        if (change < tol) break;
    }
    result.densities = std::move(xphys);
    return result;
}

struct ScoreResult {
    double compliance = 0.0;
    double gray_fraction_pct = 0.0;  // share of in-domain samples in (0.1, 0.9)
};

/// FEM-scores an arbitrary density field sampled at element centroids.
/// Out-of-domain elements are forced void.
inline ScoreResult score_density_field(const std::function<double(double, double)>& field,
                                       const bench::ProblemSpec& prob, double elem_size = 1.0,
                                       MaterialLaw law = {}) {
    FemSetup setup = make_fem_setup(prob, elem_size);
    const Mesh& mesh = setup.mesh;
    std::vector<double> x(static_cast<std::size_t>(mesh.nelem()), kRhoMin);
    double gray = 0.0;
    std::size_t in_domain = 0;
    double max_rho = 0.0;
    for (int ex = 0; ex < mesh.nelx; ++ex)
        for (int ey = 0; ey < mesh.nely; ++ey) {
            std::size_t e = static_cast<std::size_t>(mesh.elem_id(ex, ey));
            if (!setup.domain[e]) continue;
            auto [cx, cy] = mesh.centroid(ex, ey);
            double rho = std::clamp(field(cx, cy), 0.0, 1.0);
            if (rho > 0.1 && rho < 0.9) gray += 1.0;
            ++in_domain;
            max_rho = std::max(max_rho, rho);
            x[e] = std::max(kRhoMin, rho);
        }
    if (max_rho < 2 * kRhoMin) throw NumericalError("score: design is entirely void");

    Solver solver(setup.mesh, setup.bc, law.nu);
    Eigen::VectorXd u = solver.solve(x, law);
    ScoreResult r;
    r.compliance = compliance(mesh, solver.ke(), u, x, law);
    r.gray_fraction_pct = 100.0 * gray / double(in_domain);
    return r;
}

}  // namespace gptop::fem
