#pragma once

// Built-in benchmark definitions: geometry, boundary conditions, loads,
// target volume fractions, and prescribed density regions. All lengths in mm,
// forces in N (point) or N/mm (distributed).

#include <cmath>
#include <string>
#include <vector>

#include "gptop/errors.hpp"

namespace gptop::bench {

/// Axis-aligned segment (possibly degenerate) with fixed displacement
/// components. Prescribed values are zero for every benchmark.
struct DispBc {
    double x0, y0, x1, y1;
    bool fix_u1, fix_u2;
};

struct PointLoad {
    double x, y;
    double fx, fy;  // N
};

struct LineLoad {
    double x0, y0, x1, y1;
    double fx, fy;  // N/mm
};

/// Region removed from the material domain.
struct CutRegion {
    enum class Kind { None, RectCut, CircleHole };
    Kind kind = Kind::None;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // rect cut (open on its lower-left corner)
    double cx = 0, cy = 0, r = 0;           // circular hole
};

/// Region with a prescribed density value (design feature).
struct DensityRegion {
    enum class Kind { Rect, Annulus };
    Kind kind;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double cx = 0, cy = 0, r_in = 0, r_out = 0;
    double value = 1.0;

    bool contains(double x, double y) const {
        if (kind == Kind::Rect) return x >= x0 && x <= x1 && y >= y0 && y <= y1;
        double d = std::hypot(x - cx, y - cy);
        return d >= r_in && d <= r_out;
    }
};

struct ProblemSpec {
    std::string name;
    double length = 0, height = 0;  // L1, H1
    CutRegion cut;
    std::vector<DispBc> disp_bcs;
    std::vector<PointLoad> point_loads;
    std::vector<LineLoad> line_loads;
    double vol_frac = 0.5;
    std::vector<DensityRegion> density_regions;
    int default_ng = 100;  // grid-set size at 1 mm coarse spacing

    /// True when (x, y) lies in the material domain.
    bool inside(double x, double y) const {
        if (x < 0 || x > length || y < 0 || y > height) return false;
        switch (cut.kind) {
            case CutRegion::Kind::None: return true;
            case CutRegion::Kind::RectCut: return !(x > cut.x0 && y > cut.y0);
            case CutRegion::Kind::CircleHole: return std::hypot(x - cut.cx, y - cut.cy) >= cut.r;
        }
        return true;
    }

    double domain_area() const {
        double a = length * height;
        switch (cut.kind) {
            case CutRegion::Kind::None: break;
            case CutRegion::Kind::RectCut: a -= (cut.x1 - cut.x0) * (cut.y1 - cut.y0); break;
            case CutRegion::Kind::CircleHole: a -= M_PI * cut.r * cut.r; break;
        }
        return a;
    }

    bool on_boundary_box(double x, double y, double tol = 1e-9) const {
        bool on_edge = std::abs(x) < tol || std::abs(x - length) < tol || std::abs(y) < tol ||
                       std::abs(y - height) < tol;
        if (cut.kind == CutRegion::Kind::RectCut)
            on_edge = on_edge || (x >= cut.x0 - tol && std::abs(y - cut.y0) < tol) ||
                      (y >= cut.y0 - tol && std::abs(x - cut.x0) < tol);
        return on_edge;
    }

    void validate() const {
        if (length <= 0 || height <= 0) throw ParameterError(name + ": dimensions must be positive");
        if (vol_frac <= 0 || vol_frac >= 1) throw ParameterError(name + ": vol_frac outside (0,1)");
        for (const auto& pl : point_loads)
            if (!on_boundary_box(pl.x, pl.y))
                throw ParameterError(name + ": point load not on the boundary");
        for (const auto& ll : line_loads)
            if (!on_boundary_box(ll.x0, ll.y0) || !on_boundary_box(ll.x1, ll.y1))
                throw ParameterError(name + ": line load not on the boundary");
        if (disp_bcs.empty()) throw ParameterError(name + ": no displacement boundary conditions");
    }
};

/// The five canonical compliance-minimization benchmarks.
inline std::vector<ProblemSpec> builtin_problems() {
    std::vector<ProblemSpec> out;

    {
        // Half model: symmetry rollers on the left edge, vertical point load at
        // the top-left corner, vertical roller at the bottom-right corner.
        ProblemSpec p;
        p.name = "mbb";
        p.length = 150;
        p.height = 50;
        p.disp_bcs = {{0, 0, 0, 50, true, false}, {150, 0, 150, 0, false, true}};
        p.point_loads = {{0, 50, 0.0, -0.1}};
        p.vol_frac = 0.5;
        p.default_ng = 150;
        out.push_back(p);
    }
    {
        // Clamped left edge with the load hanging from the bottom-right corner.
        ProblemSpec p;
        p.name = "cantilever";
        p.length = 160;
        p.height = 100;
        p.disp_bcs = {{0, 0, 0, 100, true, true}};
        p.point_loads = {{160, 0, 0.0, -0.1}};
        p.vol_frac = 0.3;
        p.default_ng = 160;
        out.push_back(p);
    }
    {
        // Distributed load along the full top edge, both bottom corners pinned.
        ProblemSpec p;
        p.name = "uniform";
        p.length = 200;
        p.height = 100;
        p.disp_bcs = {{0, 0, 0, 0, true, true}, {200, 0, 200, 0, true, true}};
        p.line_loads = {{0, 100, 200, 100, 0.0, -1e-3}};
        p.vol_frac = 0.3;
        p.default_ng = 200;
        out.push_back(p);
    }
    {
        // 100x100 square with the top-right 60x60 removed; the vertical leg's
        // top edge is clamped and the load hangs from the right tip.
        ProblemSpec p;
        p.name = "lshape";
        p.length = 100;
        p.height = 100;
        p.cut = {CutRegion::Kind::RectCut, 40, 40, 100, 100, 0, 0, 0};
        p.disp_bcs = {{0, 100, 40, 100, true, true}};
        p.point_loads = {{100, 40, 0.0, -0.1}};
        p.vol_frac = 0.5;
        p.default_ng = 100;
        out.push_back(p);
    }
    {
        // Clamped left edge, point load on the lower right edge, circular hole
        // centered at (50, 50). Density is anchored to zero on a 2 mm band
        // inside the hole, offset from the rim so the correction can
        // transition in unconstrained space.
        ProblemSpec p;
        p.name = "hollow";
        p.length = 150;
        p.height = 100;
        p.cut = {CutRegion::Kind::CircleHole, 0, 0, 0, 0, 50, 50, 33.33};
        p.disp_bcs = {{0, 0, 0, 100, true, true}};
        p.point_loads = {{150, 25, 0.0, -0.1}};
        p.vol_frac = 0.5;
        p.default_ng = 150;
        p.density_regions = {{DensityRegion::Kind::Annulus, 0, 0, 0, 0, 50, 50, 29.33, 31.33, 0.0}};
        out.push_back(p);
    }
    return out;
}

/// Looks up a canonical benchmark or one of the design-feature variants:
/// "hollow-ring" embeds a solid ring around the hole, "uniform-strip" forces a
/// solid thin beam under the distributed load.
inline ProblemSpec problem_by_name(const std::string& name) {
    for (auto& p : builtin_problems())
        if (p.name == name) return p;
    if (name == "hollow-ring") {
        ProblemSpec p = problem_by_name("hollow");
        p.name = "hollow-ring";
        p.density_regions.push_back(
            {DensityRegion::Kind::Annulus, 0, 0, 0, 0, 50, 50, 33.33, 41.33, 1.0});
        return p;
    }
    if (name == "uniform-strip") {
        ProblemSpec p = problem_by_name("uniform");
        p.name = "uniform-strip";
        p.density_regions.push_back({DensityRegion::Kind::Rect, 0, 95, 200, 100, 0, 0, 0, 0, 1.0});
        return p;
    }
    throw ParameterError("unknown problem '" + name + "'");
}

}  // namespace gptop::bench
