#include <cmath>
#include <random>

#include "doctest.h"
#include "slicevol/error.hpp"
#include "slicevol/estimators.hpp"

using namespace slicevol;

TEST_CASE("nn estimate against a linear scan") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<MuCacheEntry> cache;
    for (int i = 0; i < 50; ++i) {
        MuCacheEntry e{"c" + std::to_string(i), std::vector<double>(6), 100.0 + i};
        for (auto& m : e.mu) m = g(rng);
        cache.push_back(e);
    }
    for (const auto& e : cache) CHECK(nn_estimate(cache, e.mu).volume_mL == e.volume_mL);
    for (int q = 0; q < 100; ++q) {
        std::vector<double> mu(6);
        for (auto& m : mu) m = g(rng);
        int best = 0;
        double bd = 1e300;
        for (int i = 0; i < 50; ++i) {
            double d = 0;
            for (int j = 0; j < 6; ++j) d += (cache[i].mu[j] - mu[j]) * (cache[i].mu[j] - mu[j]);
            if (d < bd) {
                bd = d;
                best = i;
            }
        }
        CHECK(nn_estimate(cache, mu).volume_mL == cache[best].volume_mL);
    }
    std::vector<MuCacheEntry> two{{"a", {1.0, 0.0}, 10.0}, {"b", {-1.0, 0.0}, 20.0}};
    std::vector<double> mid{0.0, 3.0};
    CHECK(nn_estimate(two, mid).volume_mL == 10.0);
    CHECK_THROWS_WITH(nn_estimate(std::span<const MuCacheEntry>{}, mid), "empty cache");
}

TEST_CASE("plr recovers an exact linear relation") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    const int d = 5, n = 40;
    std::vector<double> w{3, -2, 0.5, 1, 4};
    const double b = 30.0;
    std::vector<std::vector<double>> mus;
    std::vector<double> vols;
    for (int i = 0; i < n; ++i) {
        std::vector<double> mu(d);
        double v = b;
        for (int j = 0; j < d; ++j) {
            mu[j] = g(rng);
            v += w[j] * mu[j];
        }
        mus.push_back(mu);
        vols.push_back(10.0 * v);
    }
    auto head = plr_fit(mus, vols, 10.0, 1e-12);
    for (int i = 0; i < n; ++i) CHECK(plr_estimate(head, mus[i], 10.0).volume_mL == doctest::Approx(vols[i]).epsilon(1e-6));

    // underdetermined stays finite
    std::vector<std::vector<double>> few(mus.begin(), mus.begin() + 3);
    auto h2 = plr_fit(few, std::span<const double>(vols.data(), 3), 10.0, 1e-3);
    for (double c : h2.W) CHECK(std::isfinite(c));

    std::vector<double> flat(n, 250.0);
    auto h3 = plr_fit(mus, flat, 10.0, 1e-3);
    for (double c : h3.W) CHECK(std::abs(c) < 1e-9);
    CHECK(h3.b == doctest::Approx(25.0));
    CHECK_THROWS_WITH(plr_fit(std::vector<std::vector<double>>{mus[0]}, std::span<const double>(vols.data(), 1)),
                      "fewer than 2 cases");
}

TEST_CASE("plr estimate arithmetic and clamping") {
    LinearHead h{{0.0, 0.0}, 5.0};
    std::vector<double> mu{3.0, -7.0};
    CHECK(plr_estimate(h, mu, 10.0).volume_mL == doctest::Approx(50.0));
    LinearHead neg{{0.0, 0.0}, -3.0};
    auto e = plr_estimate(neg, mu, 10.0);
    CHECK(e.volume_mL == 0.0);
    CHECK(e.clamped);
    LinearHead r{{0.25, -1.5}, 2.0};
    CHECK(head_forward(r, mu) == doctest::Approx(0.25 * 3 + 1.5 * 7 + 2));
    CHECK(plr_estimate(r, mu, 10.0).volume_mL == doctest::Approx(10.0 * head_forward(r, mu)));
    CHECK(to_estimate(35.2, 10.0, EstimateMethod::RvaeFcnr).volume_mL == doctest::Approx(352.0));
}

TEST_CASE("fcn head forward") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 0.3);
    FCNHead h;
    h.latent_dim = 4;
    h.hidden = 3;
    for (int i = 0; i < 12; ++i) h.hidden_W.push_back(g(rng));
    for (int i = 0; i < 3; ++i) {
        h.hidden_b.push_back(g(rng));
        h.out_W.push_back(g(rng));
    }
    h.out_b = 0.7;
    std::vector<double> z{0.5, -1.0, 2.0, 0.1};
    double out = h.out_b;
    for (int k = 0; k < 3; ++k) {
        double a = h.hidden_b[k];
        for (int j = 0; j < 4; ++j) a += h.hidden_W[k * 4 + j] * z[j];
        out += h.out_W[k] * std::max(0.0, a);
    }
    CHECK(head_forward(h, z) == doctest::Approx(out).epsilon(1e-12));
    FCNHead off = h;
    for (auto& b : off.hidden_b) b = -100.0;
    CHECK(head_forward(off, z) == 0.7);
}

TEST_CASE("sampled interval") {
    LinearHead h{{2.0, -1.0, 0.5}, 20.0};
    auto fn = [&](std::span<const double> z) { return head_forward(h, z); };
    std::vector<double> mu{1.0, 2.0, 3.0};
    std::vector<double> tiny(3, 1e-12);
    auto ci = sample_interval(fn, mu, tiny, 10.0, 100, 1);
    CHECK(ci.theta < 1e-8);
    CHECK(ci.eta == doctest::Approx(10.0 * head_forward(h, mu)));
    CHECK(ci.upper - ci.lower < 1e-7);
    CHECK(ci.n_samples == 100);

    std::vector<double> sg{0.3, 0.8, 0.5};
    const double analytic = 10.0 * std::sqrt(0.36 + 0.64 + 0.0625);
    double mean_theta = 0;
    for (int s = 0; s < 50; ++s) mean_theta += sample_interval(fn, mu, sg, 10.0, 100, s).theta / 50.0;
    CHECK(std::abs(mean_theta - analytic) / analytic < 0.2);
    auto c2 = sample_interval(fn, mu, sg, 10.0, 100, 3);
    CHECK(c2.upper - c2.eta == doctest::Approx(1.96 * c2.theta));
    CHECK(sample_interval(fn, mu, sg, 10.0, 100, 3).eta == c2.eta);
    CHECK_THROWS_WITH(sample_interval(fn, mu, sg, 10.0, 1, 0), "n < 2");
}
