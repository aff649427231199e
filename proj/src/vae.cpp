#include "slicevol/vae.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <utility>

#include "slicevol/error.hpp"
#include "slicevol/io.hpp"
#include "slicevol/losses.hpp"
#include "slicevol/serialization.hpp"

namespace slicevol {

using nn::Tensor;

std::string to_string(HeadKind h) {
    switch (h) {
    case HeadKind::None: return "none";
    case HeadKind::Linear: return "linear";
    case HeadKind::Fcn: return "fcn";
    }
    return "none";
}

std::string to_string(TrainMethod m) {
    switch (m) {
    case TrainMethod::Vae: return "vae";
    case TrainMethod::RvaeLr: return "rvae_lr";
    case TrainMethod::RvaeFcn: return "rvae_fcn";
    case TrainMethod::RvaeFcnCi: return "rvae_fcn_ci";
    }
    return "vae";
}

HeadKind head_kind_from_string(const std::string& s) {
    if (s == "none") return HeadKind::None;
    if (s == "linear") return HeadKind::Linear;
    if (s == "fcn") return HeadKind::Fcn;
    throw ConfigError("unknown head kind: " + s);
}

TrainMethod train_method_from_string(const std::string& s) {
    if (s == "vae") return TrainMethod::Vae;
    if (s == "rvae_lr") return TrainMethod::RvaeLr;
    if (s == "rvae_fcn") return TrainMethod::RvaeFcn;
    if (s == "rvae_fcn_ci") return TrainMethod::RvaeFcnCi;
    throw ConfigError("unknown training method: " + s);
}

HeadKind head_for(TrainMethod m) {
    switch (m) {
    case TrainMethod::Vae: return HeadKind::None;
    case TrainMethod::RvaeLr: return HeadKind::Linear;
    case TrainMethod::RvaeFcn:
    case TrainMethod::RvaeFcnCi: return HeadKind::Fcn;
    }
    return HeadKind::None;
}

void ModelConfig::validate() const {
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (input_views != 1 && input_views != 2) throw ConfigError("input_views must be 1 or 2");
    if (encoder_blocks < 1 || decoder_blocks < 1) throw ConfigError("block counts must be >= 1");
    if (channel_widths.empty()) throw ConfigError("channel_widths must not be empty");
    for (int w : channel_widths)
        if (w < 1) throw ConfigError("channel widths must be positive");
    if (fcn_hidden < 1) throw ConfigError("fcn_hidden must be >= 1");
    const int factor = 1 << std::max(encoder_stages(), decoder_stages());
    if (image_size < factor || image_size % factor != 0)
        throw ConfigError("image_size must be a multiple of the downsampling factor " + std::to_string(factor));
}

int ModelConfig::stage_width(int stage) const {
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(stage), channel_widths.size() - 1);
    return channel_widths[i];
}

void TrainConfig::validate() const {
    if (w1 < 0.0 || w2 < 0.0) throw ConfigError("loss weights must be nonnegative");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (phase1_epochs < 0 || max_epochs < 0) throw ConfigError("epoch counts must be nonnegative");
    if (!(volume_scale > 0.0)) throw ConfigError("volume_scale must be positive");
    if (augment_max_deg < 0.0) throw ConfigError("augment_max_deg must be nonnegative");
    if (augment_bank < 1) throw ConfigError("augment_bank must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (plr_lambda < 0.0) throw ConfigError("plr_lambda must be nonnegative");
}

// ---------------------------------------------------------------- network

VaeNetwork::VaeNetwork(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int V = cfg_.input_views, L = cfg_.latent_dim;
    stem_ = nn::Conv2d("encoder.stem", V, cfg_.stage_width(0), 3, 1, false);
    stem_bn_ = nn::BatchNorm2d("encoder.stem_bn", cfg_.stage_width(0));
    for (int i = 0; i < cfg_.encoder_blocks; ++i) {
        const int s = i / 2;
        const std::string name = "encoder.block" + std::to_string(i);
        if (i % 2 == 0)
            enc_blocks_.emplace_back(name, cfg_.stage_width(std::max(0, s - 1)), cfg_.stage_width(s), nn::ResBlock::Mode::Down);
        else
            enc_blocks_.emplace_back(name, cfg_.stage_width(s), cfg_.stage_width(s), nn::ResBlock::Mode::Same);
    }
    enc_fc_ = nn::Linear("encoder.fc", enc_top_width() * enc_grid() * enc_grid(), 2 * L);

    const int D = cfg_.decoder_stages();
    dec_fc_ = nn::Linear("decoder.fc", L, dec_top_width() * dec_grid() * dec_grid());
    for (int i = 0; i < cfg_.decoder_blocks; ++i) {
        const int j = i / 2;
        const std::string name = "decoder.block" + std::to_string(i);
        const int out = cfg_.stage_width(D - 1 - j);
        if (i % 2 == 0)
            dec_blocks_.emplace_back(name, cfg_.stage_width(j == 0 ? D - 1 : D - j), out, nn::ResBlock::Mode::Up);
        else
            dec_blocks_.emplace_back(name, out, out, nn::ResBlock::Mode::Same);
    }
    out_conv_ = nn::Conv2d("decoder.out", cfg_.stage_width(0), V, 3, 1, true);

    if (cfg_.head == HeadKind::Linear) {
        head_out_.emplace("head.out", L, 1);
    } else if (cfg_.head == HeadKind::Fcn) {
        head_hidden_.emplace("head.hidden", L, cfg_.fcn_hidden);
        head_out_.emplace("head.out", cfg_.fcn_hidden, 1);
    }
}

void VaeNetwork::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    stem_.init(rng);
    for (auto& b : enc_blocks_) b.init(rng);
    enc_fc_.init(rng, 0.5f);
    dec_fc_.init(rng);
    for (auto& b : dec_blocks_) b.init(rng);
    out_conv_.init(rng);
    if (head_hidden_) head_hidden_->init(rng);
    if (head_out_) head_out_->init(rng);
}

namespace {

constexpr float kLogvarMin = -30.0f, kLogvarMax = 20.0f;

void split_latent(const Tensor& e, int L, Tensor& mu, Tensor& logvar) {
    const int N = e.n();
    mu = Tensor(N, L, 1, 1);
    logvar = Tensor(N, L, 1, 1);
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < L; ++i) {
            mu.at(n, i, 0, 0) = e.at(n, i, 0, 0);
            logvar.at(n, i, 0, 0) = std::clamp(e.at(n, L + i, 0, 0), kLogvarMin, kLogvarMax);
        }
}

} // namespace

VaeNetwork::Encoded VaeNetwork::encode(const Tensor& x) const {
    if (x.c() != cfg_.input_views || x.h() != cfg_.image_size || x.w() != cfg_.image_size)
        throw Error("config mismatch");
    Tensor h = nn::relu(stem_bn_.infer(stem_.infer(x)));
    for (const auto& b : enc_blocks_) h = b.infer(h);
    h.reshape(h.n(), static_cast<int>(h.sample_size()), 1, 1);
    Encoded out;
    split_latent(enc_fc_.infer(h), cfg_.latent_dim, out.mu, out.logvar);
    return out;
}

Tensor VaeNetwork::decode_logits(const Tensor& z) const {
    if (z.sample_size() != static_cast<std::size_t>(cfg_.latent_dim)) throw Error("dim mismatch");
    Tensor d = nn::relu(dec_fc_.infer(z));
    d.reshape(d.n(), dec_top_width(), dec_grid(), dec_grid());
    for (const auto& b : dec_blocks_) d = b.infer(d);
    return out_conv_.infer(d);
}

Tensor VaeNetwork::head(const Tensor& latent) const {
    if (!head_out_) throw Error("model has no regression head");
    if (head_hidden_) return head_out_->infer(nn::relu(head_hidden_->infer(latent)));
    return head_out_->infer(latent);
}

VaeNetwork::StepLoss VaeNetwork::train_step(const Tensor& x, std::span<const float> targets, const Tensor& noise,
                                            double w1, double w2) {
    const int N = x.n(), L = cfg_.latent_dim;
    if (x.c() != cfg_.input_views || x.h() != cfg_.image_size || x.w() != cfg_.image_size)
        throw TrainingError("config mismatch");
    if (noise.n() != N || noise.sample_size() != static_cast<std::size_t>(L)) throw TrainingError("noise shape mismatch");
    const bool use_head = head_out_ && w2 > 0.0;
    if (use_head && targets.size() != static_cast<std::size_t>(N)) throw TrainingError("missing volume targets");

    // encoder
    stem_out_ = nn::relu(stem_bn_.forward(stem_.forward(x)));
    Tensor h = stem_out_;
    for (auto& b : enc_blocks_) h = b.forward(h);
    const int enc_c = h.c(), enc_h = h.h(), enc_w = h.w();
    h.reshape(N, static_cast<int>(h.sample_size()), 1, 1);
    const Tensor e = enc_fc_.forward(h);
    Tensor mu, logvar;
    split_latent(e, L, mu, logvar);
    Tensor sigma(N, L, 1, 1), z(N, L, 1, 1);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        sigma[i] = std::exp(0.5f * logvar[i]);
        z[i] = mu[i] + noise[i] * sigma[i];
    }

    // decoder
    dec_fc_out_ = nn::relu(dec_fc_.forward(z));
    Tensor d = dec_fc_out_;
    d.reshape(N, dec_top_width(), dec_grid(), dec_grid());
    for (auto& b : dec_blocks_) d = b.forward(d);
    const Tensor logits = out_conv_.forward(d);
    Tensor probs(logits.n(), logits.c(), logits.h(), logits.w());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = 1.0f / (1.0f + std::exp(-logits[i]));

    StepLoss loss;
    loss.bce = loss::bce<float>(x.span(), std::as_const(probs).span());
    loss.kld = loss::kld<float>(std::as_const(mu).span(), std::as_const(sigma).span(), static_cast<std::size_t>(N));

    Tensor pred;
    const Tensor& head_in = cfg_.head_on_sample ? z : mu;
    if (use_head) {
        if (head_hidden_) {
            head_hidden_out_ = nn::relu(head_hidden_->forward(head_in));
            pred = head_out_->forward(head_hidden_out_);
        } else {
            pred = head_out_->forward(head_in);
        }
        loss.mse = loss::mse<float>(targets, std::as_const(pred).span());
    }
    loss.total = loss.bce + w1 * loss.kld + (use_head ? w2 * loss.mse : 0.0);
    if (!std::isfinite(loss.total)) throw TrainingError("non-finite loss");

    // backward: BCE through the sigmoid collapses to (p - a) / count
    Tensor dlogits(probs.n(), probs.c(), probs.h(), probs.w());
    const auto inv_count = static_cast<float>(1.0 / static_cast<double>(probs.size()));
    for (std::size_t i = 0; i < probs.size(); ++i) dlogits[i] = (probs[i] - x[i]) * inv_count;
    Tensor dd = out_conv_.backward(dlogits);
    for (auto it = dec_blocks_.rbegin(); it != dec_blocks_.rend(); ++it) dd = it->backward(dd);
    dd.reshape(N, static_cast<int>(dd.sample_size()), 1, 1);
    Tensor dz = dec_fc_.backward(nn::relu_backward(dd, dec_fc_out_));

    Tensor dmu(N, L, 1, 1), dlogvar(N, L, 1, 1);
    const auto inv_n = static_cast<float>(1.0 / N);
    const auto w1f = static_cast<float>(w1);
    if (use_head) {
        Tensor dpred(N, 1, 1, 1);
        for (int n = 0; n < N; ++n)
            dpred[static_cast<std::size_t>(n)] =
                static_cast<float>(w2 * 2.0 * (pred[static_cast<std::size_t>(n)] - targets[static_cast<std::size_t>(n)]) / N);
        Tensor dlatent = head_hidden_ ? head_hidden_->backward(nn::relu_backward(head_out_->backward(dpred), head_hidden_out_))
                                      : head_out_->backward(dpred);
        if (cfg_.head_on_sample) {
            for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += dlatent[i];
        } else {
            for (std::size_t i = 0; i < dmu.size(); ++i) dmu[i] += dlatent[i];
        }
    }
    for (std::size_t i = 0; i < mu.size(); ++i) {
        dmu[i] += dz[i] + w1f * mu[i] * inv_n;
        float dl = dz[i] * noise[i] * sigma[i] * 0.5f + w1f * 0.5f * (sigma[i] * sigma[i] - 1.0f) * inv_n;
        const float raw = e[(i / static_cast<std::size_t>(L)) * 2 * L + L + i % static_cast<std::size_t>(L)];
        if (raw < kLogvarMin || raw > kLogvarMax) dl = 0.0f;
        dlogvar[i] = dl;
    }
    Tensor de(N, 2 * L, 1, 1);
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < L; ++i) {
            de.at(n, i, 0, 0) = dmu.at(n, i, 0, 0);
            de.at(n, L + i, 0, 0) = dlogvar.at(n, i, 0, 0);
        }
    Tensor dh = enc_fc_.backward(de);
    dh.reshape(N, enc_c, enc_h, enc_w);
    for (auto it = enc_blocks_.rbegin(); it != enc_blocks_.rend(); ++it) dh = it->backward(dh);
    stem_.backward(stem_bn_.backward(nn::relu_backward(dh, stem_out_)));
    return loss;
}

std::vector<nn::Param*> VaeNetwork::params() {
    std::vector<nn::Param*> out;
    stem_.collect(out);
    stem_bn_.collect(out);
    for (auto& b : enc_blocks_) b.collect(out);
    enc_fc_.collect(out);
    dec_fc_.collect(out);
    for (auto& b : dec_blocks_) b.collect(out);
    out_conv_.collect(out);
    if (head_hidden_) head_hidden_->collect(out);
    if (head_out_) head_out_->collect(out);
    return out;
}

std::vector<nn::Buffer> VaeNetwork::buffers() {
    std::vector<nn::Buffer> out;
    stem_bn_.collect_buffers(out);
    for (auto& b : enc_blocks_) b.collect_buffers(out);
    for (auto& b : dec_blocks_) b.collect_buffers(out);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> VaeNetwork::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto* p : params()) out.emplace_back(p->name, &p->value);
    for (auto& b : buffers()) out.emplace_back(b.name, b.value);
    return out;
}

// ---------------------------------------------------------------- free functions

Tensor slices_to_tensor(const ModelConfig& cfg, std::span<const SlicePair* const> pairs) {
    const int S = cfg.image_size, V = cfg.input_views;
    Tensor x(static_cast<int>(pairs.size()), V, S, S);
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const SlicePair& p = *pairs[n];
        if (p.coronal.rows != S || p.coronal.cols != S) throw Error("config mismatch");
        if (V == 2 && (!p.transverse || p.transverse->rows != S || p.transverse->cols != S)) throw Error("config mismatch");
        const std::size_t plane = static_cast<std::size_t>(S) * S;
        float* dst = x.data() + n * V * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = p.coronal.data[i] ? 1.0f : 0.0f;
        if (V == 2)
            for (std::size_t i = 0; i < plane; ++i) dst[plane + i] = p.transverse->data[i] ? 1.0f : 0.0f;
    }
    return x;
}

std::vector<LatentDistribution> encode_batch(const TrainedModel& model, std::span<const SlicePair> slices) {
    std::vector<LatentDistribution> out;
    out.reserve(slices.size());
    constexpr std::size_t chunk = 16;
    for (std::size_t start = 0; start < slices.size(); start += chunk) {
        const std::size_t end = std::min(slices.size(), start + chunk);
        std::vector<const SlicePair*> ptrs;
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&slices[i]);
        const auto enc = model.net.encode(slices_to_tensor(model.config, ptrs));
        const int L = model.config.latent_dim;
        for (std::size_t n = 0; n < ptrs.size(); ++n) {
            LatentDistribution d;
            d.mu.resize(static_cast<std::size_t>(L));
            d.sigma.resize(static_cast<std::size_t>(L));
            for (int i = 0; i < L; ++i) {
                d.mu[static_cast<std::size_t>(i)] = enc.mu.at(static_cast<int>(n), i, 0, 0);
                d.sigma[static_cast<std::size_t>(i)] = std::exp(0.5 * static_cast<double>(enc.logvar.at(static_cast<int>(n), i, 0, 0)));
            }
            out.push_back(std::move(d));
        }
    }
    return out;
}

LatentDistribution encode(const TrainedModel& model, const SlicePair& slices) {
    return encode_batch(model, std::span<const SlicePair>(&slices, 1)).front();
}

std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> sigma,
                                   std::span<const double> zeta) {
    if (mu.size() != sigma.size() || mu.size() != zeta.size()) throw Error("dim mismatch");
    std::vector<double> z(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) z[i] = mu[i] + zeta[i] * sigma[i];
    return z;
}

Reconstruction decode(const TrainedModel& model, std::span<const double> z) {
    if (z.size() != static_cast<std::size_t>(model.config.latent_dim)) throw Error("dim mismatch");
    Tensor zt(1, model.config.latent_dim, 1, 1);
    for (std::size_t i = 0; i < z.size(); ++i) zt[i] = static_cast<float>(z[i]);
    const Tensor logits = model.net.decode_logits(zt);
    Reconstruction r;
    r.views = logits.c();
    r.size = logits.h();
    r.probs.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        // keep strictly inside (0, 1) even where float saturates
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
        r.probs[i] = static_cast<float>(std::clamp(p, 1e-7, 1.0 - 1e-7));
    }
    return r;
}

LinearHead linear_head_of(const TrainedModel& model) {
    const nn::Linear* out = model.net.head_out_layer();
    if (model.config.head != HeadKind::Linear || !out) throw Error("method/model mismatch");
    LinearHead h;
    h.W.assign(out->weight().value.vec().begin(), out->weight().value.vec().end());
    h.b = out->bias().value[0];
    return h;
}

FCNHead fcn_head_of(const TrainedModel& model) {
    const nn::Linear* hid = model.net.head_hidden_layer();
    const nn::Linear* out = model.net.head_out_layer();
    if (model.config.head != HeadKind::Fcn || !hid || !out) throw Error("method/model mismatch");
    FCNHead h;
    h.latent_dim = hid->in_features();
    h.hidden = hid->out_features();
    h.hidden_W.assign(hid->weight().value.vec().begin(), hid->weight().value.vec().end());
    h.hidden_b.assign(hid->bias().value.vec().begin(), hid->bias().value.vec().end());
    h.out_W.assign(out->weight().value.vec().begin(), out->weight().value.vec().end());
    h.out_b = out->bias().value[0];
    return h;
}

// ---------------------------------------------------------------- persistence

nlohmann::json write_tensor_file(const std::filesystem::path& bin,
                                 const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    static_assert(std::endian::native == std::endian::little, "weights are stored little-endian");
    std::string bytes;
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        manifest.push_back({{"name", name},
                            {"shape", {t->n(), t->c(), t->h(), t->w()}},
                            {"dtype", "float32"},
                            {"byte_offset", bytes.size()}});
        bytes.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(float));
    }
    io::write_text(bin, bytes);
    return manifest;
}

void read_tensor_file(const std::filesystem::path& bin, const nlohmann::json& manifest,
                      const std::vector<std::pair<std::string, Tensor*>>& tensors) {
    const std::string bytes = io::read_text(bin);
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& entry : manifest) by_name[entry.at("name").get<std::string>()] = &entry;
    for (const auto& [name, t] : tensors) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("weights missing tensor " + name);
        const auto& entry = *it->second;
        const auto shape = entry.at("shape").get<std::array<int, 4>>();
        if (shape != std::array<int, 4>{t->n(), t->c(), t->h(), t->w()})
            throw DataError("config mismatch: tensor " + name + " has shape differing from the configuration");
        if (entry.at("dtype").get<std::string>() != "float32") throw DataError("unsupported dtype for " + name);
        const auto off = entry.at("byte_offset").get<std::size_t>();
        if (off + t->size() * sizeof(float) > bytes.size()) throw DataError("weights file truncated");
        std::memcpy(t->data(), bytes.data() + off, t->size() * sizeof(float));
    }
}

void json_reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* key : keys) ok = ok || k == key;
        if (!ok) throw ConfigError(std::string("unknown key '") + k + "' in " + where);
    }
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"latent_dim", c.latent_dim},         {"input_views", c.input_views},
            {"image_size", c.image_size},         {"encoder_blocks", c.encoder_blocks},
            {"decoder_blocks", c.decoder_blocks}, {"channel_widths", c.channel_widths},
            {"head", to_string(c.head)},          {"fcn_hidden", c.fcn_hidden},
            {"head_on_sample", c.head_on_sample}};
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"w1", c.w1},
            {"w2", c.w2},
            {"lr", c.lr},
            {"batch_size", c.batch_size},
            {"phase1_epochs", c.phase1_epochs},
            {"max_epochs", c.max_epochs},
            {"volume_scale", c.volume_scale},
            {"seed", c.seed},
            {"augment_max_deg", c.augment_max_deg},
            {"augment_bank", c.augment_bank},
            {"eval_every", c.eval_every},
            {"plr_lambda", c.plr_lambda},
            {"grid_search", c.grid_search},
            {"grid_values", c.grid_values}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    json_reject_unknown(j,
                   {"latent_dim", "input_views", "image_size", "encoder_blocks", "decoder_blocks", "channel_widths",
                    "head", "fcn_hidden", "head_on_sample"},
                   "model");
    json_take(j, "latent_dim", c.latent_dim);
    json_take(j, "input_views", c.input_views);
    json_take(j, "image_size", c.image_size);
    json_take(j, "encoder_blocks", c.encoder_blocks);
    json_take(j, "decoder_blocks", c.decoder_blocks);
    json_take(j, "channel_widths", c.channel_widths);
    std::string head = to_string(c.head);
    json_take(j, "head", head);
    c.head = head_kind_from_string(head);
    json_take(j, "fcn_hidden", c.fcn_hidden);
    json_take(j, "head_on_sample", c.head_on_sample);
    c.validate();
    return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    json_reject_unknown(j,
                   {"w1", "w2", "lr", "batch_size", "phase1_epochs", "max_epochs", "volume_scale", "seed",
                    "augment_max_deg", "augment_bank", "eval_every", "plr_lambda", "grid_search", "grid_values"},
                   "train");
    json_take(j, "w1", c.w1);
    json_take(j, "w2", c.w2);
    json_take(j, "lr", c.lr);
    json_take(j, "batch_size", c.batch_size);
    json_take(j, "phase1_epochs", c.phase1_epochs);
    json_take(j, "max_epochs", c.max_epochs);
    json_take(j, "volume_scale", c.volume_scale);
    json_take(j, "seed", c.seed);
    json_take(j, "augment_max_deg", c.augment_max_deg);
    json_take(j, "augment_bank", c.augment_bank);
    json_take(j, "eval_every", c.eval_every);
    json_take(j, "plr_lambda", c.plr_lambda);
    json_take(j, "grid_search", c.grid_search);
    json_take(j, "grid_values", c.grid_values);
    c.validate();
    return c;
}

void TrainedModel::save(const std::filesystem::path& stem) const {
    auto& self = const_cast<TrainedModel&>(*this);
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto& [name, t] : self.net.named_tensors()) tensors.emplace_back(name, t);
    const std::filesystem::path bin = stem.string() + ".bin";
    nlohmann::json j;
    j["format"] = "slicevol-model";
    j["version"] = 1;
    j["method"] = to_string(method);
    j["model_config"] = to_json(config);
    j["train_config"] = to_json(train_config);
    j["best_epoch"] = best_epoch;
    j["weights_file"] = bin.filename().string();
    j["tensors"] = write_tensor_file(bin, tensors);
    nlohmann::json cache = nlohmann::json::array();
    for (const auto& e : training_mu_cache) cache.push_back({{"case_id", e.case_id}, {"volume_mL", e.volume_mL}, {"mu", e.mu}});
    j["training_mu_cache"] = cache;
    if (plr_head) j["plr_head"] = {{"W", plr_head->W}, {"b", plr_head->b}};
    io::write_text(stem.string() + ".json", j.dump(1) + "\n");
}

TrainedModel TrainedModel::load(const std::filesystem::path& stem) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_text(stem.string() + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed model manifest: " + std::string(e.what()));
    }
    if (j.value("format", "") != "slicevol-model") throw DataError("not a model manifest: " + stem.string());
    TrainedModel m;
    m.method = train_method_from_string(j.at("method").get<std::string>());
    m.config = model_config_from_json(j.at("model_config"));
    m.train_config = train_config_from_json(j.at("train_config"));
    m.best_epoch = j.value("best_epoch", -1);
    m.net = VaeNetwork(m.config);
    const auto bin = stem.parent_path() / j.at("weights_file").get<std::string>();
    read_tensor_file(bin, j.at("tensors"), m.net.named_tensors());
    for (const auto& e : j.at("training_mu_cache"))
        m.training_mu_cache.push_back({e.at("case_id").get<std::string>(), e.at("mu").get<std::vector<double>>(),
                                       e.at("volume_mL").get<double>()});
    if (j.contains("plr_head"))
        m.plr_head = LinearHead{j["plr_head"].at("W").get<std::vector<double>>(), j["plr_head"].at("b").get<double>()};
    return m;
}

} // namespace slicevol
