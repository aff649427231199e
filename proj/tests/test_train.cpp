#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "slicevol/error.hpp"
#include "slicevol/estimators.hpp"
#include "slicevol/train.hpp"

using namespace slicevol;
namespace fs = std::filesystem;

namespace {

Image2D disc(int size, double ry, double rx) {
    Image2D img(size, size);
    const double c = 0.5 * (size - 1);
    for (int r = 0; r < size; ++r)
        for (int k = 0; k < size; ++k) {
            const double a = (r - c) / ry, b = (k - c) / rx;
            img.at(r, k) = a * a + b * b <= 1.0;
        }
    return img;
}

std::vector<TrainingSample> toy_set(int n, int size = 16) {
    std::vector<TrainingSample> out;
    for (int i = 0; i < n; ++i) {
        const double r = 2.0 + 5.0 * i / std::max(1, n - 1);
        TrainingSample s;
        s.case_id = "toy" + std::to_string(i);
        s.volume_mL = 20.0 * r * r;
        s.slices = {disc(size, r, 0.8 * r), disc(size, 0.7 * r, r), s.case_id};
        s.variants = {s.slices, {disc(size, r + 0.5, 0.8 * r), disc(size, 0.7 * r, r + 0.5), s.case_id}};
        out.push_back(s);
    }
    return out;
}

ModelConfig toy_model(int views = 2) {
    ModelConfig m;
    m.latent_dim = 4;
    m.input_views = views;
    m.image_size = 16;
    m.encoder_blocks = 2;
    m.decoder_blocks = 2;
    m.channel_widths = {4};
    m.fcn_hidden = 8;
    return m;
}

TrainConfig toy_train(int epochs) {
    TrainConfig t;
    t.max_epochs = epochs;
    t.phase1_epochs = epochs / 2;
    t.batch_size = 4;
    t.augment_bank = 2;
    return t;
}

std::vector<float> weights_of(TrainedModel& m) {
    std::vector<float> w;
    for (auto& [name, t] : m.net.named_tensors()) w.insert(w.end(), t->vec().begin(), t->vec().end());
    return w;
}

} // namespace

TEST_CASE("latent shapes under the default configuration") {
    TrainedModel m;
    m.config = ModelConfig{};
    m.config.input_views = 2;
    m.net = VaeNetwork(m.config);
    m.net.init(0);
    SlicePair p{Image2D(224, 224), Image2D(224, 224), "x"};
    p.coronal.at(100, 100) = 1;
    auto lat = encode(m, p);
    CHECK(lat.mu.size() == 128);
    CHECK(lat.sigma.size() == 128);
    for (double s : lat.sigma) CHECK(s > 0.0);
    auto rec = decode(m, lat.mu);
    CHECK(rec.views == 2);
    CHECK(rec.size == 224);
    CHECK(rec.probs.size() == 2u * 224 * 224);
    for (float v : rec.probs) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
    CHECK_THROWS_WITH(encode(m, p.single_view()), "config mismatch");
}

TEST_CASE("reparameterize") {
    std::vector<double> mu{1.0, -2.0}, sg{0.5, 2.0}, zeta{0.0, 0.0}, n{1.5, -1.0};
    CHECK(reparameterize(mu, sg, zeta) == mu);
    std::vector<double> zero{0.0, 0.0}, one{1.0, 1.0};
    CHECK(reparameterize(zero, one, n) == n);
    auto z = reparameterize(mu, sg, n);
    CHECK(z[0] == doctest::Approx(1.75));
    CHECK(z[1] == doctest::Approx(-4.0));
    std::vector<double> short_{1.0};
    CHECK_THROWS_WITH(reparameterize(mu, sg, short_), "dim mismatch");
}

TEST_CASE("zero epochs return the initialized model") {
    auto data = toy_set(4);
    auto r = train(data, {}, toy_model(), toy_train(0), TrainMethod::RvaeFcn);
    CHECK(r.log.empty());
    CHECK(r.model.training_mu_cache.size() == 4);
    CHECK_THROWS_WITH(train({}, {}, toy_model(), toy_train(1), TrainMethod::Vae), "empty dataset");
}

TEST_CASE("training lowers the loss and retrieves its own cases") {
    auto data = toy_set(8);
    auto r = train(data, {}, toy_model(), toy_train(12), TrainMethod::Vae);
    REQUIRE(r.log.size() == 12);
    CHECK(r.log[9].total < r.log[0].total);
    for (const auto& s : data) CHECK(nn_estimate(r.model, s.slices).volume_mL == s.volume_mL);
    CHECK_THROWS_WITH(estimate_volume(r.model, data[0].slices, EstimateMethod::RvaeLr), "method/model mismatch");
    CHECK_NOTHROW(estimate_volume(r.model, data[0].slices, EstimateMethod::PLR));
}

TEST_CASE("training is deterministic and resumable") {
    auto data = toy_set(6);
    auto val = toy_set(3);
    for (auto& v : val) v.volume_mL *= 1.1;
    auto a = train(data, val, toy_model(), toy_train(8), TrainMethod::RvaeLr);
    auto b = train(data, val, toy_model(), toy_train(8), TrainMethod::RvaeLr);
    CHECK(weights_of(a.model) == weights_of(b.model));
    CHECK(a.model.best_epoch == b.model.best_epoch);

    const auto dir = fs::temp_directory_path() / "slicevol_resume";
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainOptions first;
    first.checkpoint = dir / "ck";
    first.stop_after_epoch = 3;
    auto part = train(data, val, toy_model(), toy_train(8), TrainMethod::RvaeLr, first);
    CHECK_FALSE(part.completed);
    TrainOptions rest;
    rest.checkpoint = dir / "ck";
    rest.resume = true;
    auto c = train(data, val, toy_model(), toy_train(8), TrainMethod::RvaeLr, rest);
    CHECK(c.completed);
    CHECK(weights_of(c.model) == weights_of(a.model));
    REQUIRE(c.log.size() == a.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(c.log[i].total == a.log[i].total);

    // save / load keeps every estimate
    a.model.save(dir / "model");
    auto loaded = TrainedModel::load(dir / "model");
    for (const auto& s : data)
        CHECK(estimate_volume(loaded, s.slices, EstimateMethod::RvaeLr).volume_mL ==
              estimate_volume(a.model, s.slices, EstimateMethod::RvaeLr).volume_mL);
    CHECK(loaded.training_mu_cache.size() == a.model.training_mu_cache.size());
}

TEST_CASE("single view selection") {
    auto data = toy_set(1);
    auto one = select_views(data[0].slices, 1);
    CHECK(one.views() == 1);
    CHECK(one.coronal == data[0].slices.coronal);
    CHECK(select_views(data[0].slices, 2) == data[0].slices);
}
