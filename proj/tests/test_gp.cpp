#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gptop/gp.hpp"
#include "oracles.hpp"

using namespace gptop;
using namespace gptop::gp;

namespace {

Eigen::Matrix2Xd line_points(int n, double spacing, double y = 0.0) {
    Eigen::Matrix2Xd pts(2, n);
    for (int i = 0; i < n; ++i) {
        pts(0, i) = i * spacing;
        pts(1, i) = y;
    }
    return pts;
}

}  // namespace

TEST_CASE("kernel values") {
    KernelParams kp;
    Eigen::Vector2d a(1.0, 2.0), b(1.0, 2.0);
    CHECK(kernel(a, b, kp) == Catch::Approx(kp.s2 + kp.nugget));

    Eigen::Vector2d c(2.0, 2.0);
    CHECK(kernel(a, c, kp) == kernel(c, a, kp));
    CHECK(kernel(a, c, kp) == Catch::Approx(std::exp(-0.5)));  // unit distance, phi = 0.5

    Eigen::Vector2d far(25.0, 2.0);
    CHECK(kernel(a, far, kp) < 1e-100);
}

TEST_CASE("conditioner construction") {
    KernelParams kp;
    Eigen::Matrix2Xd one(2, 1);
    one << 0.5, 1.5;
    Eigen::VectorXd v1(1);
    v1 << 2.0;
    Conditioner c1(one, v1, kp);
    CHECK(c1.factor().matrixL()(0, 0) == Catch::Approx(std::sqrt(kp.s2 + kp.nugget)));

    auto pts = line_points(20, 1.0);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(20);
    Conditioner cond(pts, v, kp);

    // factor * factor^T reconstructs the covariance
    Eigen::MatrixXd l = cond.factor().matrixL();
    Eigen::MatrixXd recon = l * l.transpose();
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) {
            double kij = kernel(pts.col(i), pts.col(j), kp);
            CHECK(std::abs(recon(i, j) - kij) < 1e-10);
        }

    Eigen::Matrix2Xd dup(2, 2);
    dup << 1.0, 1.0, 2.0, 2.0;
    Eigen::VectorXd v2 = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(Conditioner(dup, v2, kp), ConditioningError);
}

TEST_CASE("correction reproduces prescribed values and decays to the mean") {
    KernelParams kp;
    auto pts = line_points(31, 1.0);
    Eigen::VectorXd v(31);
    for (int i = 0; i < 31; ++i) v(i) = std::sin(0.3 * i);
    Conditioner cond(pts, v, kp);

    // smooth nonzero mean
    auto mean_fn = [](double x, double y) { return 0.4 * std::cos(0.2 * x) + 0.1 * y; };
    Eigen::VectorXd mean_x(31);
    for (int i = 0; i < 31; ++i) mean_x(i) = mean_fn(pts(0, i), pts(1, i));

    SECTION("zero residual keeps the mean untouched") {
        Eigen::Matrix2Xd q(2, 3);
        q << 0.3, 7.7, 22.1, 0.0, 0.4, -0.2;
        Eigen::VectorXd mq(3);
        for (int i = 0; i < 3; ++i) mq(i) = 1.25 * i;
        Eigen::VectorXd out = cond.correct_values(q, mq, v);  // mean == prescribed on X
        for (int i = 0; i < 3; ++i) CHECK(out(i) == Catch::Approx(mq(i)).margin(1e-12));
    }

    SECTION("evaluation at conditioning points returns prescribed values") {
        Eigen::VectorXd out = cond.correct_values(pts, mean_x, mean_x);
        double worst = 0.0;
        for (int i = 0; i < 31; ++i) worst = std::max(worst, std::abs(out(i) - v(i)));
        CHECK(worst < 1e-3 * std::max(1.0, v.cwiseAbs().maxCoeff()));
        CHECK(worst < 1e-9);  // nugget-consistent cross covariance reproduces exactly
    }

    SECTION("far queries fall back to the mean") {
        Eigen::Matrix2Xd q(2, 1);
        q << 15.0, 40.0;  // 40 mm off the line
        Eigen::VectorXd mq(1);
        mq << 0.77;
        Eigen::VectorXd out = cond.correct_values(q, mq, mean_x);
        CHECK(std::abs(out(0) - 0.77) < 1e-6);
    }
}

TEST_CASE("differentiable correction matches the value path and finite differences") {
    KernelParams kp;
    auto pts = line_points(12, 1.0);
    Eigen::VectorXd v(12);
    for (int i = 0; i < 12; ++i) v(i) = (i % 3 == 0) ? 1.0 : 0.0;
    Conditioner cond(pts, v, kp);

    Eigen::Matrix2Xd q(2, 7);
    for (int i = 0; i < 7; ++i) {
        q(0, i) = 0.7 * i + 0.2;
        q(1, i) = 0.3;
    }
    Eigen::MatrixXd kstar = cond.cross_covariance(q);

    std::mt19937_64 rng(3);
    ad::Tensor mean_q = ad::Tensor::leaf({7}, oracles::random_values(7, rng, -1, 1));
    ad::Tensor mean_x = ad::Tensor::leaf({12}, oracles::random_values(12, rng, -1, 1));

    ad::Tensor out = correct(cond, kstar, mean_q, mean_x);

    Eigen::Map<const Eigen::VectorXd> mq(mean_q.values().data(), 7);
    Eigen::Map<const Eigen::VectorXd> mx(mean_x.values().data(), 12);
    Eigen::VectorXd oracle = cond.correct_values(q, mq, mx);
    for (int i = 0; i < 7; ++i) CHECK(out.values()[static_cast<std::size_t>(i)] ==
                                      Catch::Approx(oracle(i)).margin(1e-10));

    std::vector<double> wts = oracles::random_values(7, rng, -1, 1);
    ad::backward(ad::dot_const(out, wts));
    auto eval = [&]() {
        ad::NoGradGuard ng;
        return ad::dot_const(correct(cond, kstar, mean_q, mean_x), wts).item();
    };
    CHECK(oracles::max_rel_error(mean_q.grad(), oracles::fd_gradient(mean_q, eval)) < 1e-6);
    CHECK(oracles::max_rel_error(mean_x.grad(), oracles::fd_gradient(mean_x, eval)) < 1e-6);

    // cached cross-covariance equals a fresh solve
    Eigen::VectorXd fresh = mq + kstar.transpose() * cond.solve(v - mx);
    for (int i = 0; i < 7; ++i)
        CHECK(out.values()[static_cast<std::size_t>(i)] == Catch::Approx(fresh(i)).margin(1e-10));
}

TEST_CASE("empty conditioner degenerates to the mean") {
    Conditioner cond;
    CHECK(cond.empty());
    ad::Tensor mean_q = ad::Tensor::leaf({4}, {1, 2, 3, 4});
    ad::Tensor mean_x = ad::Tensor::leaf({1}, {0.0});
    ad::Tensor out = correct(cond, Eigen::MatrixXd(), mean_q, mean_x);
    CHECK(out.values() == mean_q.values());
}

TEST_CASE("projection") {
    ProjectionParams p;
    CHECK(project_value(0.5, p) == Catch::Approx(0.5));
    CHECK(project_value(1.0, p) == Catch::Approx(1.0));

    // direct formula evaluation at 0.6
    double expect = (std::tanh(8 * 0.5) + std::tanh(8 * 0.1)) / (2 * std::tanh(8 * 0.5));
    CHECK(project_value(0.6, p) == Catch::Approx(expect).epsilon(1e-14));

    // strictly increasing
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-0.3, 1.3);
    for (int i = 0; i < 200; ++i) {
        double a = dist(rng), b = dist(rng);
        if (a > b) std::swap(a, b);
        if (a == b) continue;
        CHECK(project_value(a, p) < project_value(b, p));
    }

    // tensor path agrees with the scalar formula and is differentiable
    ad::Tensor rho = ad::Tensor::leaf({3}, {0.2, 0.5, 0.9});
    ad::Tensor proj = project(rho, p);
    for (int i = 0; i < 3; ++i)
        CHECK(proj.values()[static_cast<std::size_t>(i)] ==
              Catch::Approx(project_value(rho.values()[static_cast<std::size_t>(i)], p)));
    std::vector<double> wts{1.0, -2.0, 0.5};
    ad::backward(ad::dot_const(proj, wts));
    auto eval = [&]() {
        ad::NoGradGuard ng;
        return ad::dot_const(project(rho, p), wts).item();
    };
    CHECK(oracles::max_rel_error(rho.grad(), oracles::fd_gradient(rho, eval)) < 1e-6);

    CHECK_THROWS_AS(project(rho, ProjectionParams{-1.0, 0.5}), ParameterError);
}

TEST_CASE("dense solid/void regions survive evaluation on a doubled grid") {
    // Conditioning on a 1 mm annulus band (prescribed 1) and an inner band
    // (prescribed 0), then evaluating at 0.5 mm: prescribed regions must stay
    // within 0.05 of their targets.
    KernelParams kp;
    std::vector<double> px, py, pv;
    const double cx = 20, cy = 20, r_hole = 8, r_out = 12;
    const double standoff = 2.0;  // unconstrained gap between the 0 and 1 bands
    for (int i = 0; i <= 40; ++i)
        for (int j = 0; j <= 40; ++j) {
            double d = std::hypot(i - cx, j - cy);
            if (d >= r_hole && d <= r_out) {
                px.push_back(i);
                py.push_back(j);
                pv.push_back(1.0);
            } else if (d >= r_hole - 2 - standoff && d <= r_hole - standoff) {
                px.push_back(i);
                py.push_back(j);
                pv.push_back(0.0);
            }
        }
    Eigen::Matrix2Xd pts(2, static_cast<Eigen::Index>(px.size()));
    Eigen::VectorXd v(static_cast<Eigen::Index>(px.size()));
    for (std::size_t i = 0; i < px.size(); ++i) {
        pts(0, static_cast<Eigen::Index>(i)) = px[i];
        pts(1, static_cast<Eigen::Index>(i)) = py[i];
        v(static_cast<Eigen::Index>(i)) = pv[i];
    }
    Conditioner cond(pts, v, kp);

    auto mean_fn = [](double x, double y) {
        return 0.5 + 0.05 * std::sin(0.21 * x) * std::cos(0.17 * y);
    };
    Eigen::VectorXd mean_x(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) mean_x(i) = mean_fn(pts(0, i), pts(1, i));

    // doubled-resolution queries inside the prescribed bands, 1 mm off the
    // band edges (the correction transitions through the unconstrained gap)
    std::vector<double> qx, qy, qv;
    for (int i = 0; i <= 80; ++i)
        for (int j = 0; j <= 80; ++j) {
            double x = 0.5 * i, y = 0.5 * j;
            double d = std::hypot(x - cx, y - cy);
            if ((d >= r_hole + 1.0 && d <= r_out - 1.0) ||
                (d >= r_hole - 1.5 - standoff && d <= r_hole - 0.5 - standoff)) {
                qx.push_back(x);
                qy.push_back(y);
                qv.push_back(d >= r_hole ? 1.0 : 0.0);
            }
        }
    Eigen::Matrix2Xd q(2, static_cast<Eigen::Index>(qx.size()));
    Eigen::VectorXd mq(static_cast<Eigen::Index>(qx.size()));
    for (std::size_t i = 0; i < qx.size(); ++i) {
        q(0, static_cast<Eigen::Index>(i)) = qx[i];
        q(1, static_cast<Eigen::Index>(i)) = qy[i];
        mq(static_cast<Eigen::Index>(i)) = mean_fn(qx[i], qy[i]);
    }
    Eigen::VectorXd out = cond.correct_values(q, mq, mean_x);
    double worst = 0.0;
    for (std::size_t i = 0; i < qx.size(); ++i)
        worst = std::max(worst, std::abs(out(static_cast<Eigen::Index>(i)) - qv[i]));
    CHECK(worst < 0.05);
}
