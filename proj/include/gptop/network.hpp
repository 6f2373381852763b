#pragma once

// Shared multi-output mean functions: a feature-grid encoder with 3x3
// convolution, diagonally shifted grid repetitions and an attention-modulated
// decoder, plus a plain MLP baseline. Outputs are (m_u1, m_u2, m_rho) with a
// sigmoid on the density head.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gptop/errors.hpp"
#include "gptop/tensor.hpp"

namespace gptop::net {

struct BBox {
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    bool contains(double x, double y, double tol = 1e-9) const {
        return x >= x0 - tol && x <= x1 + tol && y >= y0 - tol && y <= y1 + tol;
    }
};

/// Encoder vertex counts from the resolution parameter (vertices per 100 mm).
inline std::pair<int, int> resolution_to_vertices(double res, double length, double height) {
    if (res < 2) throw ParameterError("resolution_to_vertices: Res must be at least 2");
    int nx = std::max(2, static_cast<int>(std::lround(res * length / 100.0)));
    int ny = std::max(2, static_cast<int>(std::lround(res * height / 100.0)));
    return {nx, ny};
}

struct PgcanConfig {
    int n_rep = 3;
    int n_f = 128;
    int nx = 2, ny = 2;  // nominal vertex counts over the padded bounding box
    int hidden = 64;
    int outputs = 3;

    void validate() const {
        if (nx < 2 || ny < 2) throw ParameterError("pgcan: vertex counts must be at least 2");
        if (n_f % 2 != 0) throw ParameterError("pgcan: feature count must be even");
        if (n_rep < 1) throw ParameterError("pgcan: need at least one grid repetition");
    }
};

struct MlpConfig {
    int hidden_layers = 6;
    int width = 64;
    int outputs = 3;
};

struct MeanOutputs {
    ad::Tensor u1, u2, rho;  // each [n]; rho already squashed to (0,1)
};

namespace detail {

struct ParamStore {
    std::vector<std::pair<std::string, ad::Tensor>> items;

    ad::Tensor add(const std::string& name, ad::Shape shape, std::mt19937_64& rng, double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> v(ad::shape_numel(shape));
        for (auto& x : v) x = (bound == 0.0) ? 0.0 : dist(rng);
        ad::Tensor t = ad::Tensor::leaf(std::move(shape), std::move(v));
        items.emplace_back(name, t);
        return t;
    }

    std::vector<ad::Tensor> tensors() const {
        std::vector<ad::Tensor> out;
        out.reserve(items.size());
        for (auto& [n, t] : items) out.push_back(t);
        return out;
    }
};

/// X [n x in] * W [in x out] + b.
inline ad::Tensor linear(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b) {
    return ad::add(ad::matmul(x, w), b);
}

/// Gathers bilinear-interpolated rows from a convolved feature map.
/// plan: per point, flat vertex index of the lower-left corner and 4 weights.
struct GatherPlan {
    std::vector<std::size_t> base;  // j*(wv) + i
    std::vector<double> w;          // 4 per point: (0,0), (0,1), (1,0), (1,1)
    std::size_t wv = 0;             // vertex row stride
};

inline ad::Tensor bilinear_gather(const ad::Tensor& fc, const GatherPlan& plan) {
    const auto& sh = fc.shape();
    if (sh.size() != 3) throw DimensionError("bilinear_gather: feature map must be [C x H x W]");
    const std::size_t c = sh[0], hw = sh[1] * sh[2], wv = plan.wv;
    const std::size_t n = plan.base.size();

    std::vector<double> out(n * c);
    const double* f = fc.values().data();
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t b00 = plan.base[p], b01 = b00 + wv, b10 = b00 + 1, b11 = b00 + wv + 1;
        const double w00 = plan.w[4 * p], w01 = plan.w[4 * p + 1], w10 = plan.w[4 * p + 2],
                     w11 = plan.w[4 * p + 3];
        double* row = out.data() + p * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* plane = f + ch * hw;
            row[ch] = w00 * plane[b00] + w01 * plane[b01] + w10 * plane[b10] + w11 * plane[b11];
        }
    }

    ad::NodePtr fn = fc.node();
    auto plan_copy = std::make_shared<GatherPlan>(plan);
    auto back = [fn, plan_copy, c, hw](ad::Node& self) {
        const auto& pl = *plan_copy;
        const std::size_t n = pl.base.size();
        fn->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* gplane = fn->grad.data() + ch * hw;
            for (std::size_t p = 0; p < n; ++p) {
                double g = self.grad[p * c + ch];
                if (g == 0.0) continue;
                const std::size_t b00 = pl.base[p];
                gplane[b00] += pl.w[4 * p] * g;
                gplane[b00 + pl.wv] += pl.w[4 * p + 1] * g;
                gplane[b00 + 1] += pl.w[4 * p + 2] * g;
                gplane[b00 + pl.wv + 1] += pl.w[4 * p + 3] * g;
            }
        }
    };
    return ad::Tensor(ad::detail::make_result({n, c}, std::move(out), {fn}, back));
}

}  // namespace detail

/// Abstract differentiable mean function over 2-D coordinates.
class MeanField {
public:
    virtual ~MeanField() = default;
    virtual MeanOutputs forward(const Eigen::Matrix2Xd& pts) = 0;
    virtual const std::vector<std::pair<std::string, ad::Tensor>>& named_params() const = 0;
    virtual std::string kind() const = 0;

    std::vector<ad::Tensor> params() const {
        std::vector<ad::Tensor> out;
        for (auto& [n, t] : named_params()) out.push_back(t);
        return out;
    }
};

/// Feature-grid encoder + attention-modulated decoder. The trainable grid
/// carries one extra cell per direction so every diagonally shifted
/// repetition still covers the padded domain.
class Pgcan : public MeanField {
public:
    Pgcan(PgcanConfig cfg, BBox box, std::uint64_t seed) : cfg_(cfg), box_(box) {
        cfg_.validate();
        dx_ = box.width() / (cfg_.nx - 1);
        dy_ = box.height() / (cfg_.ny - 1);
        wv_ = static_cast<std::size_t>(cfg_.nx + 1);
        hv_ = static_cast<std::size_t>(cfg_.ny + 1);

        std::mt19937_64 rng(seed);
        const std::size_t c = static_cast<std::size_t>(cfg_.n_f);
        for (int m = 0; m < cfg_.n_rep; ++m) {
            // diagonal offsets at k/(n_rep+1) of one cell, including k = 0
            offsets_.push_back(double(m) / double(cfg_.n_rep + 1));
            f0_.push_back(store_.add("f0_rep" + std::to_string(m), {c, hv_, wv_}, rng, 1e-4));
        }
        conv_kernel_ = store_.add("conv_kernel", {c, c, 3, 3}, rng, 1.0 / std::sqrt(9.0 * c));
        conv_bias_ = store_.add("conv_bias", {c}, rng, 0.0);

        const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
        auto wb = [&](const std::string& name, std::size_t in, std::size_t out) {
            return std::pair{store_.add(name + "_w", {in, out}, rng, 1.0 / std::sqrt(double(in))),
                             store_.add(name + "_b", {out}, rng, 0.0)};
        };
        std::tie(w1_, b1_) = wb("dec1", c, h);
        std::tie(p1_, c1_) = wb("mod1", c / 2, h);
        std::tie(w2_, b2_) = wb("dec2", h, h);
        std::tie(p2_, c2_) = wb("mod2", c / 2, h);
        std::tie(w3_, b3_) = wb("dec3", h, h);
        std::tie(p3_, c3_) = wb("mod3", c / 2, h);
        std::tie(w4_, b4_) = wb("head", h, static_cast<std::size_t>(cfg_.outputs));
    }

    const PgcanConfig& config() const { return cfg_; }
    const BBox& box() const { return box_; }
    double cell_dx() const { return dx_; }
    double cell_dy() const { return dy_; }
    double offset_fraction(int rep) const { return offsets_[static_cast<std::size_t>(rep)]; }

    /// Grid origin of one repetition (shifted below the box corner).
    std::pair<double, double> grid_origin(int rep) const {
        double s = offsets_[static_cast<std::size_t>(rep)];
        return {box_.x0 - s * dx_, box_.y0 - s * dy_};
    }

    /// Convolved feature map of one repetition (values change with theta).
    ad::Tensor convolved_map(int rep) {
        return ad::tanh(ad::conv2d_3x3(f0_[static_cast<std::size_t>(rep)], conv_kernel_, conv_bias_));
    }

    /// Summed per-point feature vectors over all grid repetitions.
    ad::Tensor encode(const Eigen::Matrix2Xd& pts) {
        const std::size_t n = static_cast<std::size_t>(pts.cols());
        for (std::size_t p = 0; p < n; ++p)
            if (!box_.contains(pts(0, static_cast<Eigen::Index>(p)),
                               pts(1, static_cast<Eigen::Index>(p))))
                throw GridError("encode: query outside the padded bounds");

        ad::Tensor total;
        for (int m = 0; m < cfg_.n_rep; ++m) {
            detail::GatherPlan plan = make_plan(pts, m);
            ad::Tensor gathered = detail::bilinear_gather(convolved_map(m), plan);
            total = (m == 0) ? gathered : ad::add(total, gathered);
        }
        return total;
    }

    /// Raw three-output head. Hidden states are modulated elementwise by
    /// sigmoid projections of the two feature halves.
    ad::Tensor decode(const ad::Tensor& features) {
        const std::size_t half = static_cast<std::size_t>(cfg_.n_f / 2);
        ad::Tensor ft1 = slice_cols(features, 0, half);
        ad::Tensor ft2 = slice_cols(features, half, half);

        ad::Tensor h1 = ad::mul(ad::swish(detail::linear(features, w1_, b1_)),
                                ad::sigmoid(detail::linear(ft1, p1_, c1_)));
        ad::Tensor h2 = ad::mul(ad::swish(detail::linear(h1, w2_, b2_)),
                                ad::sigmoid(detail::linear(ft1, p2_, c2_)));
        ad::Tensor h3 = ad::mul(ad::swish(detail::linear(h2, w3_, b3_)),
                                ad::sigmoid(detail::linear(ft2, p3_, c3_)));
        return detail::linear(h3, w4_, b4_);
    }

    MeanOutputs forward(const Eigen::Matrix2Xd& pts) override {
        ad::Tensor heads = decode(encode(pts));
        return {ad::col(heads, 0), ad::col(heads, 1), ad::sigmoid(ad::col(heads, 2))};
    }

    const std::vector<std::pair<std::string, ad::Tensor>>& named_params() const override {
        return store_.items;
    }
    std::string kind() const override { return "pgcan"; }

private:
    ad::Tensor slice_cols(const ad::Tensor& t, std::size_t from, std::size_t count) {
        const std::size_t n = t.shape()[0], m = t.shape()[1];
        std::vector<double> out(n * count);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < count; ++j) out[i * count + j] = t.values()[i * m + from + j];
        ad::NodePtr tn = t.node();
        auto back = [tn, from, m, count](ad::Node& self) {
            const std::size_t n = self.shape[0];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < count; ++j)
                    ad::detail::accumulate(tn, i * m + from + j, self.grad[i * count + j]);
        };
        return ad::Tensor(ad::detail::make_result({n, count}, std::move(out), {t.node()}, back));
    }

    detail::GatherPlan make_plan(const Eigen::Matrix2Xd& pts, int rep) const {
        auto [ox, oy] = grid_origin(rep);
        detail::GatherPlan plan;
        plan.wv = wv_;
        const std::size_t n = static_cast<std::size_t>(pts.cols());
        plan.base.resize(n);
        plan.w.resize(4 * n);
        for (std::size_t p = 0; p < n; ++p) {
            double u = (pts(0, static_cast<Eigen::Index>(p)) - ox) / dx_;
            double v = (pts(1, static_cast<Eigen::Index>(p)) - oy) / dy_;
            int i = std::min(static_cast<int>(std::floor(u)), cfg_.nx - 1);
            int j = std::min(static_cast<int>(std::floor(v)), cfg_.ny - 1);
            i = std::max(i, 0);
            j = std::max(j, 0);
            double fx = u - i, fy = v - j;
            // cosine map keeps the field C1 across cell faces
            double xs = 0.5 * (1.0 - std::cos(M_PI * fx));
            double ys = 0.5 * (1.0 - std::cos(M_PI * fy));
            plan.base[p] = static_cast<std::size_t>(j) * wv_ + static_cast<std::size_t>(i);
            plan.w[4 * p] = (1 - xs) * (1 - ys);
            plan.w[4 * p + 1] = (1 - xs) * ys;
            plan.w[4 * p + 2] = xs * (1 - ys);
            plan.w[4 * p + 3] = xs * ys;
        }
        return plan;
    }

    PgcanConfig cfg_;
    BBox box_;
    double dx_ = 1, dy_ = 1;
    std::size_t wv_ = 0, hv_ = 0;
    std::vector<double> offsets_;
    detail::ParamStore store_;
    std::vector<ad::Tensor> f0_;
    ad::Tensor conv_kernel_, conv_bias_;
    ad::Tensor w1_, b1_, p1_, c1_, w2_, b2_, p2_, c2_, w3_, b3_, p3_, c3_, w4_, b4_;
};

/// Plain fully connected baseline with swish activations. Inputs are
/// normalized to [-1, 1] over the padded bounding box.
class Mlp : public MeanField {
public:
    Mlp(MlpConfig cfg, BBox box, std::uint64_t seed) : cfg_(cfg), box_(box) {
        std::mt19937_64 rng(seed);
        std::size_t in = 2;
        for (int l = 0; l < cfg_.hidden_layers; ++l) {
            std::size_t out = static_cast<std::size_t>(cfg_.width);
            ws_.push_back(store_.add("fc" + std::to_string(l) + "_w", {in, out}, rng,
                                     1.0 / std::sqrt(double(in))));
            bs_.push_back(store_.add("fc" + std::to_string(l) + "_b", {out}, rng, 0.0));
            in = out;
        }
        head_w_ = store_.add("head_w", {in, static_cast<std::size_t>(cfg_.outputs)}, rng,
                             1.0 / std::sqrt(double(in)));
        head_b_ = store_.add("head_b", {static_cast<std::size_t>(cfg_.outputs)}, rng, 0.0);
    }

    ad::Tensor forward_raw(const Eigen::Matrix2Xd& pts) {
        const std::size_t n = static_cast<std::size_t>(pts.cols());
        std::vector<double> coords(n * 2);
        for (std::size_t p = 0; p < n; ++p) {
            coords[2 * p] = 2.0 * (pts(0, static_cast<Eigen::Index>(p)) - box_.x0) / box_.width() - 1.0;
            coords[2 * p + 1] =
                2.0 * (pts(1, static_cast<Eigen::Index>(p)) - box_.y0) / box_.height() - 1.0;
        }
        ad::Tensor h = ad::Tensor::constant({n, 2}, std::move(coords));
        for (std::size_t l = 0; l < ws_.size(); ++l)
            h = ad::swish(detail::linear(h, ws_[l], bs_[l]));
        return detail::linear(h, head_w_, head_b_);
    }

    MeanOutputs forward(const Eigen::Matrix2Xd& pts) override {
        ad::Tensor heads = forward_raw(pts);
        return {ad::col(heads, 0), ad::col(heads, 1), ad::sigmoid(ad::col(heads, 2))};
    }

    const std::vector<std::pair<std::string, ad::Tensor>>& named_params() const override {
        return store_.items;
    }
    std::string kind() const override { return "mlp"; }

private:
    MlpConfig cfg_;
    BBox box_;
    detail::ParamStore store_;
    std::vector<ad::Tensor> ws_, bs_;
    ad::Tensor head_w_, head_b_;
};

}  // namespace gptop::net
