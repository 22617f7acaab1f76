#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sbrl/error.hpp"
#include "sbrl/net.hpp"
#include "sbrl/rng.hpp"

using namespace sbrl;
using namespace sbrl::net;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = std_normal(rng);
    return m;
}

// Largest per-coordinate relative error between backward() and central
// differences of L = sum(U .* f(X)), over parameters and inputs.
double max_fd_error(Mlp net, const Mat& X, const Mat& U, double h = 1e-5) {
    auto loss = [&](const Mlp& n, const Mat& x) { return n.forward(x).cwiseProduct(U).sum(); };
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };
    Mlp::Cache cache;
    net.forward(X, cache);
    Mat gx;
    const Params g = net.backward(cache, U, &gx);
    Vec analytic(static_cast<Eigen::Index>(net.parameter_count()));
    {
        Mlp copy = net;
        copy.params() = g;
        analytic = copy.flat();
    }
    const Vec theta = net.flat();
    double worst = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        Vec tp = theta, tm = theta;
        tp(k) += h;
        tm(k) -= h;
        Mlp a = net, b = net;
        a.set_flat(tp);
        b.set_flat(tm);
        worst = std::max(worst, rel(analytic(k), (loss(a, X) - loss(b, X)) / (2 * h)));
    }
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            Mat xp = X, xm = X;
            xp(i, j) += h;
            xm(i, j) -= h;
            worst = std::max(worst, rel(gx(i, j), (loss(net, xp) - loss(net, xm)) / (2 * h)));
        }
    return worst;
}

}  // namespace

TEST_CASE("single linear layer: d out / d w = x") {
    Mlp net({3, 1}, Activation::identity, Activation::identity, 1);
    Vec x(3);
    x << 0.5, -2.0, 4.0;
    Mlp::Cache cache;
    const Mat y = net.forward(Mat(x), cache);
    CHECK(y(0, 0) == doctest::Approx(net.params().W[0].row(0).dot(x) + net.params().b[0](0)));
    const Params g = net.backward(cache, Mat::Ones(1, 1));
    CHECK(g.W[0].row(0).transpose() == x);
    CHECK(g.b[0](0) == 1.0);
}

TEST_CASE("zero weights with relu hidden layers output the last bias") {
    Mlp net({4, 8, 8, 2}, Activation::relu, Activation::identity, 2);
    for (auto& W : net.params().W) W.setZero();
    for (std::size_t l = 0; l + 1 < net.layers(); ++l) net.params().b[l].setRandom();
    net.params().b.back() << 0.25, -3.0;
    Rng rng(1);
    const Mat y = net.forward(random_mat(4, 5, rng));
    for (Eigen::Index j = 0; j < 5; ++j) {
        CHECK(y(0, j) == 0.25);
        CHECK(y(1, j) == -3.0);
    }
}

TEST_CASE("analytic gradients match central differences") {
    Rng rng(7);
    struct Arch {
        std::vector<std::size_t> sizes;
        Activation out;
    };
    // Random 3-layer net plus the actor, critic and Q-network shapes used by the agents.
    const std::vector<Arch> archs{{{5, 7, 6, 3}, Activation::tanh},
                                  {{6, 64, 64, 2}, Activation::tanh},
                                  {{8, 64, 64, 1}, Activation::identity},
                                  {{6, 64, 64, 3}, Activation::identity}};
    std::uint64_t seed = 11;
    for (const auto& a : archs) {
        CAPTURE(a.sizes.front());
        Mlp net(a.sizes, Activation::relu, a.out, seed++);
        const Mat X = random_mat(static_cast<Eigen::Index>(a.sizes.front()), 20, rng);
        const Mat U = random_mat(static_cast<Eigen::Index>(a.sizes.back()), 20, rng);
        CHECK(max_fd_error(net, X, U) < 1e-4);
    }
}

TEST_CASE("shape mismatches are errors") {
    Mlp net({3, 4, 2}, Activation::relu, Activation::identity, 1);
    CHECK_THROWS_AS(net.forward(Mat(Mat::Zero(2, 1))), DomainError);
    Mlp::Cache cache;
    net.forward(Mat(Mat::Zero(3, 2)), cache);
    CHECK_THROWS_AS(net.backward(cache, Mat(Mat::Zero(2, 3))), DomainError);
    Mlp other({3, 5, 2}, Activation::relu, Activation::identity, 1);
    CHECK_THROWS_AS(soft_update(net, other, 0.5), DomainError);
}

TEST_CASE("adam: zero gradient is a no-op, quadratic converges, runs are deterministic") {
    Mlp net({1, 1}, Activation::identity, Activation::identity, 3);
    const Vec before = net.flat();
    Adam opt(net);
    opt.step(net, net.zeros_like());
    CHECK(net.flat() == before);

    // Minimise (w - 3)^2 + (b + 1)^2.
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam quad(net, cfg);
    for (int k = 0; k < 500; ++k) {
        Params g = net.zeros_like();
        g.W[0](0, 0) = 2.0 * (net.params().W[0](0, 0) - 3.0);
        g.b[0](0) = 2.0 * (net.params().b[0](0) + 1.0);
        quad.step(net, g);
    }
    CHECK(std::abs(net.params().W[0](0, 0) - 3.0) < 1e-3);
    CHECK(std::abs(net.params().b[0](0) + 1.0) < 1e-3);

    Mlp a({4, 6, 2}, Activation::relu, Activation::tanh, 9), b({4, 6, 2}, Activation::relu, Activation::tanh, 9);
    Adam oa(a), ob(b);
    Rng ra(1), rb(1);
    for (int k = 0; k < 50; ++k) {
        Mlp::Cache ca, cb;
        a.forward(random_mat(4, 3, ra), ca);
        b.forward(random_mat(4, 3, rb), cb);
        oa.step(a, a.backward(ca, Mat::Ones(2, 3)));
        ob.step(b, b.backward(cb, Mat::Ones(2, 3)));
    }
    CHECK(a.flat() == b.flat());
}

TEST_CASE("adam rejects non-finite updates and clips large gradients") {
    Mlp net({2, 2}, Activation::identity, Activation::identity, 1);
    Adam opt(net);
    Params bad = net.zeros_like();
    bad.W[0](0, 0) = NAN;
    const Vec before = net.flat();
    CHECK_THROWS_AS(opt.step(net, bad), NumericError);
    CHECK(net.flat() == before);

    // After clipping the first Adam step moves each coordinate by at most lr.
    Params huge = net.zeros_like();
    huge.W[0].setConstant(1e12);
    opt.step(net, huge);
    CHECK((net.flat() - before).cwiseAbs().maxCoeff() <= 1e-3 + 1e-12);
}

TEST_CASE("parameters stay finite over long random training") {
    Mlp net({6, 64, 64, 2}, Activation::relu, Activation::tanh, 5);
    Adam opt(net);
    Rng rng(6);
    for (int k = 0; k < 100000; ++k) {
        Mlp::Cache cache;
        const Mat y = net.forward(random_mat(6, 1, rng), cache);
        // Heavy-tailed targets: occasional huge errors.
        const double scale = uniform01(rng) < 0.01 ? 1e6 : 1.0;
        opt.step(net, net.backward(cache, (y - random_mat(2, 1, rng) * scale)));
    }
    CHECK(net.finite());
}

TEST_CASE("soft update") {
    Mlp src({3, 4, 1}, Activation::relu, Activation::identity, 1);
    Mlp tgt({3, 4, 1}, Activation::relu, Activation::identity, 2);
    const Vec s = src.flat(), t0 = tgt.flat();

    Mlp same = tgt;
    soft_update(same, src, 1.0);
    CHECK(same.flat() == s);
    Mlp keep = tgt;
    soft_update(keep, src, 0.0);
    CHECK(keep.flat() == t0);

    const double tau = 0.01;
    const int n = 300;
    for (int k = 0; k < n; ++k) soft_update(tgt, src, tau);
    const double decay = std::pow(1.0 - tau, n);
    const Vec expect = s * (1.0 - decay) + t0 * decay;
    CHECK((tgt.flat() - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("snapshots round-trip bit-exactly") {
    Mlp net({5, 9, 3}, Activation::relu, Activation::tanh, 4);
    const auto bytes = net.serialize();
    CHECK(bytes.substr(0, 4) == "SBNN");
    const Mlp back = Mlp::deserialize(bytes);
    CHECK(back.flat() == net.flat());
    CHECK(back.sizes() == net.sizes());
    CHECK(back.activations() == net.activations());
    CHECK(back.serialize() == bytes);

    const auto path = std::filesystem::temp_directory_path() / "sbrl_net.bin";
    net.save(path.string());
    CHECK(Mlp::load(path.string()).flat() == net.flat());
    std::filesystem::remove(path);

    CHECK_THROWS_AS(Mlp::deserialize("XXXX"), DataError);
    CHECK_THROWS_AS(Mlp::deserialize(bytes.substr(0, bytes.size() - 3)), DataError);
}
