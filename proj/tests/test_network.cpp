#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gptop/network.hpp"
#include "oracles.hpp"

using namespace gptop;
using namespace gptop::net;

namespace {

Eigen::Matrix2Xd single_point(double x, double y) {
    Eigen::Matrix2Xd p(2, 1);
    p << x, y;
    return p;
}

void randomize(ad::Tensor t, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.mutable_values()) v = dist(rng);
}

}  // namespace

TEST_CASE("resolution to vertex counts") {
    CHECK(resolution_to_vertices(36, 150, 50) == std::pair{54, 18});
    CHECK(resolution_to_vertices(18, 100, 100) == std::pair{18, 18});
    CHECK(resolution_to_vertices(2, 100, 100) == std::pair{2, 2});
    CHECK_THROWS_AS(resolution_to_vertices(1, 100, 100), ParameterError);
}

TEST_CASE("encode at a vertex returns the convolved vertex feature") {
    PgcanConfig cfg;
    cfg.n_rep = 1;
    cfg.n_f = 8;
    cfg.nx = 5;
    cfg.ny = 4;
    BBox box{0, 0, 8, 6};
    Pgcan net(cfg, box, 11);

    std::mt19937_64 rng(5);
    for (auto& [name, t] : net.named_params())
        if (name.rfind("f0", 0) == 0) randomize(t, rng, -1.0, 1.0);

    ad::NoGradGuard ng;
    ad::Tensor fc = net.convolved_map(0);
    const std::size_t wv = static_cast<std::size_t>(cfg.nx + 1);
    const std::size_t hv = static_cast<std::size_t>(cfg.ny + 1);

    // rep 0 is unshifted: vertex (i, j) of the nominal grid
    const int i = 2, j = 1;
    ad::Tensor out = net.encode(single_point(box.x0 + i * net.cell_dx(), box.y0 + j * net.cell_dy()));
    for (int ch = 0; ch < cfg.n_f; ++ch) {
        double expect = fc.values()[static_cast<std::size_t>(ch) * hv * wv +
                                    static_cast<std::size_t>(j) * wv + static_cast<std::size_t>(i)];
        CHECK(out.values()[static_cast<std::size_t>(ch)] == Catch::Approx(expect).margin(1e-14));
    }

    // cell centre: cosine map gives equal quarter weights
    ad::Tensor mid = net.encode(
        single_point(box.x0 + (i + 0.5) * net.cell_dx(), box.y0 + (j + 0.5) * net.cell_dy()));
    for (int ch = 0; ch < cfg.n_f; ++ch) {
        std::size_t b = static_cast<std::size_t>(ch) * hv * wv + static_cast<std::size_t>(j) * wv +
                        static_cast<std::size_t>(i);
        double expect = 0.25 * (fc.values()[b] + fc.values()[b + 1] + fc.values()[b + wv] +
                                fc.values()[b + wv + 1]);
        CHECK(mid.values()[static_cast<std::size_t>(ch)] == Catch::Approx(expect).margin(1e-14));
    }

    CHECK_THROWS_AS(net.encode(single_point(box.x1 + 1.0, 0.0)), GridError);
}

TEST_CASE("encode matches a direct interpolation oracle over all repetitions") {
    PgcanConfig cfg;
    cfg.n_rep = 3;
    cfg.n_f = 6;
    cfg.nx = 7;
    cfg.ny = 5;
    BBox box{-1, -2, 9, 4};
    Pgcan net(cfg, box, 23);
    std::mt19937_64 rng(9);
    for (auto& [name, t] : net.named_params()) randomize(t, rng, -0.4, 0.4);

    ad::NoGradGuard ng;
    std::uniform_real_distribution<double> px(box.x0, box.x1), py(box.y0, box.y1);
    for (int trial = 0; trial < 10; ++trial) {
        double x = px(rng), y = py(rng);
        ad::Tensor out = net.encode(single_point(x, y));

        std::vector<double> expect(static_cast<std::size_t>(cfg.n_f), 0.0);
        const std::size_t wv = static_cast<std::size_t>(cfg.nx + 1);
        const std::size_t hv = static_cast<std::size_t>(cfg.ny + 1);
        for (int m = 0; m < cfg.n_rep; ++m) {
            ad::Tensor fc = net.convolved_map(m);
            auto [ox, oy] = net.grid_origin(m);
            double u = (x - ox) / net.cell_dx(), v = (y - oy) / net.cell_dy();
            int i = static_cast<int>(std::floor(u)), j = static_cast<int>(std::floor(v));
            double xs = 0.5 * (1 - std::cos(M_PI * (u - i)));
            double ys = 0.5 * (1 - std::cos(M_PI * (v - j)));
            for (int ch = 0; ch < cfg.n_f; ++ch) {
                std::size_t b = static_cast<std::size_t>(ch) * hv * wv +
                                static_cast<std::size_t>(j) * wv + static_cast<std::size_t>(i);
                expect[static_cast<std::size_t>(ch)] +=
                    (1 - xs) * (1 - ys) * fc.values()[b] + (1 - xs) * ys * fc.values()[b + wv] +
                    xs * (1 - ys) * fc.values()[b + 1] + xs * ys * fc.values()[b + wv + 1];
            }
        }
        for (int ch = 0; ch < cfg.n_f; ++ch)
            CHECK(out.values()[static_cast<std::size_t>(ch)] ==
                  Catch::Approx(expect[static_cast<std::size_t>(ch)]).margin(1e-12));
    }
}

TEST_CASE("bilinear weights form a partition of unity") {
    PgcanConfig cfg;
    cfg.n_rep = 3;
    cfg.n_f = 4;
    cfg.nx = 6;
    cfg.ny = 6;
    BBox box{0, 0, 10, 10};
    Pgcan net(cfg, box, 3);

    // zero kernel + fixed bias makes the convolved map constant, so any
    // query returns n_rep * tanh(bias) exactly when the weights sum to one
    for (auto& [name, t] : net.named_params()) {
        if (name == "conv_kernel")
            for (auto& v : t.mutable_values()) v = 0.0;
        if (name == "conv_bias")
            for (auto& v : t.mutable_values()) v = 0.7;
    }
    ad::NoGradGuard ng;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> pd(0.0, 10.0);
    const double expect = 3.0 * std::tanh(0.7);
    for (int trial = 0; trial < 50; ++trial) {
        ad::Tensor out = net.encode(single_point(pd(rng), pd(rng)));
        for (double v : out.values()) CHECK(v == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("perturbing one grid vertex only affects its convolution neighborhood") {
    PgcanConfig cfg;
    cfg.n_rep = 1;
    cfg.n_f = 4;
    cfg.nx = 10;
    cfg.ny = 8;
    BBox box{0, 0, 9, 7};  // unit cells
    Pgcan net(cfg, box, 17);
    REQUIRE(net.cell_dx() == 1.0);
    REQUIRE(net.cell_dy() == 1.0);
    std::mt19937_64 rng(7);
    for (auto& [name, t] : net.named_params()) randomize(t, rng, -0.3, 0.3);

    ad::NoGradGuard ng;
    Eigen::Matrix2Xd queries(2, 9 * 7 * 4);
    int q = 0;
    for (int i = 0; i < 9 * 2; ++i)
        for (int j = 0; j < 7 * 2; ++j) queries.col(q++) << 0.25 + i * 0.5, 0.25 + j * 0.5;

    ad::Tensor before = net.encode(queries);
    const int vi = 4, vj = 3;  // perturbed vertex (column, row) in the internal grid
    for (auto& [name, t] : net.named_params())
        if (name == "f0_rep0")
            t.mutable_values()[static_cast<std::size_t>(vj) * (cfg.nx + 1u) + vi] += 0.5;
    ad::Tensor after = net.encode(queries);

    for (int p = 0; p < queries.cols(); ++p) {
        double delta = 0.0;
        for (int ch = 0; ch < cfg.n_f; ++ch)
            delta = std::max(delta, std::abs(after.values()[static_cast<std::size_t>(p * cfg.n_f + ch)] -
                                             before.values()[static_cast<std::size_t>(p * cfg.n_f + ch)]));
        // affected cells have a corner within the 3x3 convolution footprint
        int ci = static_cast<int>(std::floor(queries(0, p)));
        int cj = static_cast<int>(std::floor(queries(1, p)));
        bool touches = std::abs(ci - vi) <= 2 && std::abs(cj - vj) <= 2 &&
                       (ci + 1 >= vi - 1 && ci <= vi + 1 && cj + 1 >= vj - 1 && cj <= vj + 1);
        if (!touches) CHECK(delta == 0.0);
    }
}

TEST_CASE("encoded features are C1 across cell faces") {
    PgcanConfig cfg;
    cfg.n_rep = 3;
    cfg.n_f = 4;
    cfg.nx = 6;
    cfg.ny = 5;
    BBox box{0, 0, 12, 8};
    Pgcan net(cfg, box, 41);
    std::mt19937_64 rng(13);
    for (auto& [name, t] : net.named_params()) randomize(t, rng, -0.5, 0.5);

    ad::NoGradGuard ng;
    const double face_x = box.x0 + 3 * net.cell_dx();  // rep-0 face
    const double y = 3.3, h = 1e-7;
    ad::Tensor left = net.encode(single_point(face_x - h, y));
    ad::Tensor mid = net.encode(single_point(face_x, y));
    ad::Tensor right = net.encode(single_point(face_x + h, y));
    for (int ch = 0; ch < cfg.n_f; ++ch) {
        std::size_t c = static_cast<std::size_t>(ch);
        double dl = (mid.values()[c] - left.values()[c]) / h;
        double dr = (right.values()[c] - mid.values()[c]) / h;
        CHECK(std::abs(dl - dr) < 1e-6);
    }
}

TEST_CASE("decode of zero features with zero biases is zero") {
    PgcanConfig cfg;
    cfg.n_f = 8;
    cfg.nx = 3;
    cfg.ny = 3;
    Pgcan net(cfg, BBox{0, 0, 1, 1}, 5);
    ad::Tensor zero_feat = ad::Tensor::zeros({10, 8});
    ad::Tensor out = net.decode(zero_feat);
    CHECK(out.shape() == ad::Shape{10, 3});
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and finite at many points") {
    PgcanConfig cfg;
    cfg.nx = 8;
    cfg.ny = 4;
    cfg.n_f = 16;
    BBox box{0, 0, 20, 10};
    Pgcan net(cfg, box, 77);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> px(0, 20), py(0, 10);
    Eigen::Matrix2Xd pts(2, 10000);
    for (int i = 0; i < 10000; ++i) pts.col(i) << px(rng), py(rng);

    ad::NoGradGuard ng;
    MeanOutputs a = net.forward(pts);
    MeanOutputs b = net.forward(pts);
    CHECK(a.u1.values() == b.u1.values());  // bitwise
    CHECK(a.rho.values() == b.rho.values());
    for (double v : a.u1.values()) CHECK(std::isfinite(v));
    for (double v : a.u2.values()) CHECK(std::isfinite(v));
    for (double v : a.rho.values()) {
        CHECK(std::isfinite(v));
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("mlp baseline") {
    MlpConfig cfg;
    BBox box{0, 0, 100, 50};
    Mlp net(cfg, box, 19);

    SECTION("zero weights give zero outputs") {
        for (auto& [name, t] : net.named_params())
            for (auto& v : t.mutable_values()) v = 0.0;
        ad::NoGradGuard ng;
        Eigen::Matrix2Xd pts(2, 3);
        pts << 1, 50, 99, 2, 25, 49;
        ad::Tensor out = net.forward_raw(pts);
        for (double v : out.values()) CHECK(v == 0.0);
    }

    SECTION("deterministic outputs") {
        ad::NoGradGuard ng;
        Eigen::Matrix2Xd pts(2, 5);
        pts << 3, 17, 42, 88, 95, 1, 11, 22, 33, 44;
        CHECK(net.forward_raw(pts).values() == net.forward_raw(pts).values());
    }

    SECTION("first-layer gradient matches finite differences") {
        Eigen::Matrix2Xd pts(2, 4);
        pts << 10, 30, 60, 90, 5, 15, 25, 45;
        std::mt19937_64 rng(4);
        std::vector<double> wts = oracles::random_values(12, rng, -1, 1);

        ad::Tensor out = net.forward_raw(pts);
        ad::Tensor loss = ad::dot_const(out, wts);
        ad::backward(loss);

        ad::Tensor w0 = net.named_params()[0].second;
        auto eval = [&]() {
            ad::NoGradGuard ng;
            return ad::dot_const(net.forward_raw(pts), wts).item();
        };
        CHECK(oracles::max_rel_error(w0.grad(), oracles::fd_gradient(w0, eval), 1e-3) < 1e-5);
    }
}
