#include <cmath>
#include <random>

#include "doctest.h"
#include "slicevol/nn/layers.hpp"

using namespace slicevol::nn;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng) {
    std::normal_distribution<float> g(0.0f, 1.0f);
    Tensor t(n, c, h, w);
    for (auto& v : t.vec()) v = g(rng);
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

// plain nested-loop convolution, zero padding k/2
Tensor naive_conv(const Tensor& x, const Tensor& w, int stride) {
    const int k = w.h(), pad = k / 2;
    const int Ho = (x.h() + 2 * pad - k) / stride + 1, Wo = (x.w() + 2 * pad - k) / stride + 1;
    Tensor y(x.n(), w.n(), Ho, Wo);
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < w.n(); ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double s = 0.0;
                    for (int ci = 0; ci < x.c(); ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                                if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
                                s += static_cast<double>(w.at(co, ci, ky, kx)) * x.at(n, ci, iy, ix);
                            }
                    y.at(n, co, oy, ox) = static_cast<float>(s);
                }
    return y;
}

template <class Fwd>
void check_input_grad(Fwd fwd, Tensor x, const Tensor& dx, const Tensor& r, int probes, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
    for (int p = 0; p < probes; ++p) {
        const std::size_t i = pick(rng);
        const float keep = x[i];
        const float h = 2e-3f;
        x[i] = keep + h;
        const double up = dot(fwd(x), r);
        x[i] = keep - h;
        const double dn = dot(fwd(x), r);
        x[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(2e-2).scale(1.0));
    }
}

} // namespace

TEST_CASE("conv forward matches nested loops") {
    std::mt19937_64 rng(3);
    struct Shape { int ci, co, h, w, k, s; };
    for (Shape sh : {Shape{3, 5, 4, 16, 3, 1}, Shape{3, 9, 5, 32, 3, 1}, Shape{2, 4, 6, 7, 3, 1}, Shape{4, 3, 8, 16, 3, 2},
                     Shape{5, 2, 4, 16, 1, 1}}) {
        Conv2d c("c", sh.ci, sh.co, sh.k, sh.s, false);
        c.init(rng);
        std::vector<Param*> ps;
        c.collect(ps);
        Tensor x = random_tensor(2, sh.ci, sh.h, sh.w, rng);
        Tensor y = c.infer(x);
        Tensor ref = naive_conv(x, ps[0]->value, sh.s);
        REQUIRE(y.same_shape(ref));
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("conv backward matches finite differences") {
    std::mt19937_64 rng(5);
    struct Shape { int ci, co, h, w, s; bool bias; };
    for (Shape sh : {Shape{3, 5, 4, 16, 1, true}, Shape{2, 4, 5, 6, 1, false}, Shape{3, 2, 6, 16, 2, true}}) {
        Conv2d c("c", sh.ci, sh.co, 3, sh.s, sh.bias);
        c.init(rng);
        std::vector<Param*> ps;
        c.collect(ps);
        Tensor x = random_tensor(2, sh.ci, sh.h, sh.w, rng);
        Tensor y = c.forward(x);
        Tensor r = random_tensor(y.n(), y.c(), y.h(), y.w(), rng);
        for (auto* p : ps) p->grad.zero();
        Tensor dx = c.backward(r);
        check_input_grad([&](const Tensor& xx) { return c.infer(xx); }, x, dx, r, 20, rng);
        // weight gradient
        for (auto* p : ps) {
            std::uniform_int_distribution<std::size_t> pick(0, p->value.size() - 1);
            for (int k = 0; k < 10; ++k) {
                const std::size_t i = pick(rng);
                const float keep = p->value[i];
                p->value[i] = keep + 1e-2f;
                const double up = dot(c.infer(x), r);
                p->value[i] = keep - 1e-2f;
                const double dn = dot(c.infer(x), r);
                p->value[i] = keep;
                CHECK(p->grad[i] == doctest::Approx((up - dn) / 2e-2).epsilon(2e-2).scale(1.0));
            }
        }
    }
}

TEST_CASE("batchnorm backward matches finite differences") {
    std::mt19937_64 rng(7);
    BatchNorm2d bn("bn", 3);
    std::vector<Param*> ps;
    bn.collect(ps);
    for (auto& v : ps[0]->value.vec()) v = 1.5f;
    Tensor x = random_tensor(4, 3, 4, 16, rng);
    Tensor y = bn.forward(x);
    Tensor r = random_tensor(y.n(), y.c(), y.h(), y.w(), rng);
    Tensor dx = bn.backward(r);
    BatchNorm2d probe = bn;
    check_input_grad([&](const Tensor& xx) { return probe.forward(xx); }, x, dx, r, 20, rng);
}

TEST_CASE("resblock backward matches finite differences") {
    std::mt19937_64 rng(11);
    for (auto mode : {ResBlock::Mode::Same, ResBlock::Mode::Down, ResBlock::Mode::Up}) {
        ResBlock b("b", 3, 4, mode);
        b.init(rng);
        Tensor x = random_tensor(3, 3, 8, 16, rng);
        Tensor y = b.forward(x);
        Tensor r = random_tensor(y.n(), y.c(), y.h(), y.w(), rng);
        Tensor dx = b.backward(r);
        ResBlock probe = b;
        check_input_grad([&](const Tensor& xx) { return probe.forward(xx); }, x, dx, r, 15, rng);
    }
}

TEST_CASE("upsample adjoint") {
    std::mt19937_64 rng(13);
    Tensor x = random_tensor(2, 3, 4, 5, rng);
    Tensor u = upsample2x(x);
    Tensor r = random_tensor(u.n(), u.c(), u.h(), u.w(), rng);
    CHECK(dot(u, r) == doctest::Approx(dot(x, upsample2x_backward(r))).epsilon(1e-5));
}
