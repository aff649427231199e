#include "slicevol/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "slicevol/error.hpp"
#include "slicevol/estimators.hpp"
#include "slicevol/eval.hpp"
#include "slicevol/io.hpp"
#include "slicevol/losses.hpp"
#include "slicevol/serialization.hpp"

namespace slicevol {

using nn::Tensor;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 step over a ^ b
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// std::hash differs between standard libraries; keep ids portable
std::uint64_t id_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

} // namespace

TrainingSample make_sample(const LabelVolume& raw, const CaseRecord& record, const PreprocessOptions& opts, int bank,
                           double max_deg, std::uint64_t seed) {
    const LabelVolume vol = preprocess_volume(raw, opts);
    TrainingSample s;
    s.case_id = record.case_id;
    s.volume_mL = record.volume_mL;
    s.slices = extract_slices(vol, opts.image_size, true);
    if (max_deg > 0.0)
        for (int k = 0; k < bank; ++k) {
            const std::uint64_t vs = mix(seed, id_hash(record.case_id) * 131 + static_cast<std::uint64_t>(k));
            s.variants.push_back(extract_slices(augment_rotate(vol, max_deg, vs), opts.image_size, true));
            s.variants.back().case_id = record.case_id;
        }
    s.slices.case_id = record.case_id;
    return s;
}

SlicePair select_views(const SlicePair& pair, int views) {
    if (views == 2) {
        if (!pair.transverse) throw DataError("dual view requested but transverse slice missing: " + pair.case_id);
        return pair;
    }
    return pair.single_view();
}

namespace {

std::vector<SlicePair> plain_slices(std::span<const TrainingSample> set, int views) {
    std::vector<SlicePair> out;
    out.reserve(set.size());
    for (const auto& s : set) out.push_back(select_views(s.slices, views));
    return out;
}

// Copies per-sample images straight into the batch tensor.
void fill_batch(const ModelConfig& cfg, const std::vector<const SlicePair*>& pairs, Tensor& x) {
    const int S = cfg.image_size, V = cfg.input_views;
    x = Tensor(static_cast<int>(pairs.size()), V, S, S);
    const std::size_t plane = static_cast<std::size_t>(S) * S;
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const SlicePair& p = *pairs[n];
        for (int v = 0; v < V; ++v) {
            const Image2D& img = v == 0 ? p.coronal : *p.transverse;
            if (img.rows != S || img.cols != S) throw TrainingError("config mismatch");
            float* dst = x.data() + (n * V + static_cast<std::size_t>(v)) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = img.data[i] ? 1.0f : 0.0f;
        }
    }
}

struct ValScore {
    double loss = std::numeric_limits<double>::quiet_NaN();
    double mrva = std::numeric_limits<double>::quiet_NaN();
};

ValScore validate(const TrainedModel& model, const std::vector<SlicePair>& val, const std::vector<double>& volumes,
                  bool want_mrva, double w1) {
    ValScore score;
    if (val.empty()) return score;
    const ModelConfig& cfg = model.config;
    double bce_sum = 0.0, kld_sum = 0.0;
    std::vector<double> preds;
    constexpr std::size_t chunk = 16;
    for (std::size_t start = 0; start < val.size(); start += chunk) {
        const std::size_t end = std::min(val.size(), start + chunk);
        std::vector<const SlicePair*> ptrs;
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&val[i]);
        Tensor x;
        fill_batch(cfg, ptrs, x);
        const auto enc = model.net.encode(x);
        const int N = x.n(), L = cfg.latent_dim;
        if (want_mrva) {
            // checkpoint choice only looks at the head, skip the decoder
            const Tensor pred = model.net.head(enc.mu);
            for (int n = 0; n < N; ++n)
                preds.push_back(std::max(0.0, static_cast<double>(pred[static_cast<std::size_t>(n)]) * model.train_config.volume_scale));
            continue;
        }
        Tensor sigma(N, L, 1, 1);
        for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = std::exp(0.5f * enc.logvar[i]);
        const Tensor logits = model.net.decode_logits(enc.mu);
        Tensor probs(logits.n(), logits.c(), logits.h(), logits.w());
        for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = 1.0f / (1.0f + std::exp(-logits[i]));
        bce_sum += loss::bce<float>(x.span(), std::as_const(probs).span()) * N;
        kld_sum += loss::kld<float>(enc.mu.span(), std::as_const(sigma).span(), static_cast<std::size_t>(N)) * N;
    }
    if (want_mrva) {
        score.mrva = mrva(volumes, preds).mrva;
        return score;
    }
    const double n = static_cast<double>(val.size());
    score.loss = bce_sum / n + w1 * kld_sum / n;
    return score;
}

std::vector<Tensor> snapshot(VaeNetwork& net) {
    std::vector<Tensor> out;
    for (auto& [name, t] : net.named_tensors()) out.push_back(*t);
    return out;
}

void restore(VaeNetwork& net, const std::vector<Tensor>& snap) {
    auto named = net.named_tensors();
    for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = snap[i];
}

struct LoopState {
    int epoch_done = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    bool best_from_head = false;
    std::vector<Tensor> best;
    std::vector<EpochLog> log;
};

nlohmann::json log_to_json(const std::vector<EpochLog>& log) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : log) a.push_back({e.epoch, e.bce, e.kld, e.mse, e.total, std::isnan(e.val_metric) ? nlohmann::json() : nlohmann::json(e.val_metric)});
    return a;
}

std::vector<EpochLog> log_from_json(const nlohmann::json& a) {
    std::vector<EpochLog> log;
    for (const auto& r : a) {
        EpochLog e;
        e.epoch = r.at(0).get<int>();
        e.bce = r.at(1).get<double>();
        e.kld = r.at(2).get<double>();
        e.mse = r.at(3).get<double>();
        e.total = r.at(4).get<double>();
        e.val_metric = r.at(5).is_null() ? std::numeric_limits<double>::quiet_NaN() : r.at(5).get<double>();
        log.push_back(e);
    }
    return log;
}

void save_checkpoint(const std::filesystem::path& stem, TrainedModel& model, nn::Adam& adam, const std::mt19937_64& rng,
                     const LoopState& st) {
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    auto named = model.net.named_tensors();
    for (auto& [name, t] : named) tensors.emplace_back(name, t);
    const auto params = model.net.params();
    for (std::size_t k = 0; k < params.size(); ++k) {
        tensors.emplace_back("adam.m." + params[k]->name, &adam.first_moments()[k]);
        tensors.emplace_back("adam.v." + params[k]->name, &adam.second_moments()[k]);
    }
    for (std::size_t i = 0; i < st.best.size(); ++i) tensors.emplace_back("best." + named[i].first, &st.best[i]);
    std::ostringstream rs;
    rs << rng;
    const std::filesystem::path bin = stem.string() + ".bin";
    nlohmann::json j;
    j["format"] = "slicevol-checkpoint";
    j["method"] = to_string(model.method);
    j["model_config"] = to_json(model.config);
    j["train_config"] = to_json(model.train_config);
    j["epoch_done"] = st.epoch_done;
    j["adam_steps"] = adam.steps();
    j["rng"] = rs.str();
    j["best_score"] = std::isfinite(st.best_score) ? nlohmann::json(st.best_score) : nlohmann::json();
    j["best_epoch"] = st.best_epoch;
    j["best_from_head"] = st.best_from_head;
    j["log"] = log_to_json(st.log);
    j["weights_file"] = bin.filename().string();
    j["tensors"] = write_tensor_file(bin, tensors);
    // write the manifest last so a torn checkpoint is never picked up
    io::write_text(stem.string() + ".json.tmp", j.dump() + "\n");
    std::filesystem::rename(stem.string() + ".json.tmp", stem.string() + ".json");
}

bool load_checkpoint(const std::filesystem::path& stem, TrainedModel& model, nn::Adam& adam, std::mt19937_64& rng,
                     LoopState& st) {
    const std::filesystem::path manifest = stem.string() + ".json";
    if (!std::filesystem::exists(manifest)) return false;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_text(manifest));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint: " + std::string(e.what()));
    }
    if (j.value("format", "") != "slicevol-checkpoint") throw DataError("not a checkpoint: " + manifest.string());
    if (j.at("method") != to_string(model.method) || j.at("model_config") != to_json(model.config) ||
        j.at("train_config") != to_json(model.train_config))
        throw ConfigError("checkpoint was written with a different configuration");
    auto named = model.net.named_tensors();
    const auto params = model.net.params();
    std::vector<std::pair<std::string, Tensor*>> tensors(named.begin(), named.end());
    for (std::size_t k = 0; k < params.size(); ++k) {
        tensors.emplace_back("adam.m." + params[k]->name, &adam.first_moments()[k]);
        tensors.emplace_back("adam.v." + params[k]->name, &adam.second_moments()[k]);
    }
    bool has_best = false;
    for (const auto& e : j.at("tensors"))
        if (e.at("name").get<std::string>().rfind("best.", 0) == 0) has_best = true;
    st.best.clear();
    if (has_best) {
        st.best = snapshot(model.net);
        for (std::size_t i = 0; i < named.size(); ++i) tensors.emplace_back("best." + named[i].first, &st.best[i]);
    }
    read_tensor_file(stem.parent_path() / j.at("weights_file").get<std::string>(), j.at("tensors"), tensors);
    adam.set_steps(j.at("adam_steps").get<long long>());
    std::istringstream rs(j.at("rng").get<std::string>());
    rs >> rng;
    st.epoch_done = j.at("epoch_done").get<int>();
    st.best_score = j.at("best_score").is_null() ? -std::numeric_limits<double>::infinity() : j.at("best_score").get<double>();
    st.best_epoch = j.at("best_epoch").get<int>();
    st.best_from_head = j.at("best_from_head").get<bool>();
    st.log = log_from_json(j.at("log"));
    return true;
}

} // namespace

TrainResult train(std::span<const TrainingSample> train_set, std::span<const TrainingSample> val_set,
                  ModelConfig model_config, const TrainConfig& train_config, TrainMethod method,
                  const TrainOptions& options) {
    if (train_set.empty()) throw DataError("empty dataset");
    model_config.head = head_for(method);
    model_config.head_on_sample = method == TrainMethod::RvaeFcnCi;
    model_config.validate();
    train_config.validate();
    const bool regress = method != TrainMethod::Vae;
    for (const auto& s : train_set)
        if (regress && !(s.volume_mL > 0.0)) throw DataError("missing volume for " + s.case_id);

    const int views = model_config.input_views;
    const double scale = train_config.volume_scale;

    TrainResult result;
    TrainedModel& model = result.model;
    model.config = model_config;
    model.train_config = train_config;
    model.method = method;
    model.net = VaeNetwork(model_config);
    model.net.init(train_config.seed);
    if (nn::Linear* out = model.net.head_out()) {
        double mean = 0.0;
        for (const auto& s : train_set) mean += s.volume_mL / scale;
        out->bias().value[0] = static_cast<float>(mean / static_cast<double>(train_set.size()));
    }

    // per-sample inputs in view order
    std::vector<SlicePair> plain = plain_slices(train_set, views);
    std::vector<std::vector<SlicePair>> bank(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i)
        for (const auto& v : train_set[i].variants) bank[i].push_back(select_views(v, views));
    const std::vector<SlicePair> val = plain_slices(val_set, views);
    std::vector<double> val_volumes;
    for (const auto& s : val_set) val_volumes.push_back(s.volume_mL);

    nn::Adam adam(model.net.params(), train_config.lr);
    std::mt19937_64 rng(mix(train_config.seed, 0x7261696eULL));
    LoopState st;
    if (!options.checkpoint.empty() && options.resume) load_checkpoint(options.checkpoint, model, adam, rng, st);

    const int max_epochs = train_config.max_epochs;
    const int phase1 = regress ? std::min(train_config.phase1_epochs, max_epochs) : max_epochs;
    const std::size_t n = train_set.size();
    const auto bs = static_cast<std::size_t>(train_config.batch_size);
    std::vector<std::size_t> order(n);

    for (int epoch = st.epoch_done + 1; epoch <= max_epochs; ++epoch) {
        const bool phase2 = regress && epoch > phase1;
        const double w2 = phase2 ? train_config.w2 : 0.0;
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        EpochLog entry;
        entry.epoch = epoch;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            std::vector<const SlicePair*> ptrs;
            std::vector<float> targets;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                if (bank[i].empty()) {
                    ptrs.push_back(&plain[i]);
                } else {
                    std::uniform_int_distribution<std::size_t> pick(0, bank[i].size() - 1);
                    ptrs.push_back(&bank[i][pick(rng)]);
                }
                targets.push_back(static_cast<float>(train_set[i].volume_mL / scale));
            }
            Tensor x;
            fill_batch(model_config, ptrs, x);
            Tensor noise(x.n(), model_config.latent_dim, 1, 1);
            std::normal_distribution<float> g(0.0f, 1.0f);
            for (auto& v : noise.vec()) v = g(rng);
            adam.zero_grad();
            const auto step = model.net.train_step(x, targets, noise, train_config.w1, w2);
            adam.step();
            const double m = static_cast<double>(end - start);
            entry.bce += step.bce * m;
            entry.kld += step.kld * m;
            entry.mse += step.mse * m;
            entry.total += step.total * m;
        }
        entry.bce /= static_cast<double>(n);
        entry.kld /= static_cast<double>(n);
        entry.mse /= static_cast<double>(n);
        entry.total /= static_cast<double>(n);

        entry.val_metric = std::numeric_limits<double>::quiet_NaN();
        const bool eval_now = !val.empty() && (epoch % train_config.eval_every == 0 || epoch == max_epochs);
        if (eval_now) {
            const ValScore vs = validate(model, val, val_volumes, phase2, train_config.w1);
            const double score = phase2 ? vs.mrva : -vs.loss;
            entry.val_metric = phase2 ? vs.mrva : vs.loss;
            // once the head is trained, only head-based scores count
            if (phase2 && !st.best_from_head) {
                st.best_from_head = true;
                st.best_score = -std::numeric_limits<double>::infinity();
            }
            if (score > st.best_score) {
                st.best_score = score;
                st.best_epoch = epoch;
                st.best = snapshot(model.net);
            }
        }
        st.log.push_back(entry);
        st.epoch_done = epoch;
        if (options.on_epoch) options.on_epoch(entry);
        if (!options.checkpoint.empty()) save_checkpoint(options.checkpoint, model, adam, rng, st);
        if (options.stop_after_epoch >= 0 && epoch >= options.stop_after_epoch && epoch < max_epochs) {
            result.completed = false;
            result.log = st.log;
            return result;
        }
    }

    if (!st.best.empty()) {
        restore(model.net, st.best);
        model.best_epoch = st.best_epoch;
    } else {
        model.best_epoch = max_epochs;
    }
    result.log = st.log;

    const auto latents = encode_batch(model, plain);
    std::vector<std::vector<double>> mus;
    std::vector<double> volumes;
    for (std::size_t i = 0; i < n; ++i) {
        model.training_mu_cache.push_back({train_set[i].case_id, latents[i].mu, train_set[i].volume_mL});
        mus.push_back(latents[i].mu);
        volumes.push_back(train_set[i].volume_mL);
    }
    if (n >= 2) model.plr_head = plr_fit(mus, volumes, scale, train_config.plr_lambda);
    return result;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::string out = "epoch,bce,kld,mse,val_metric\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + "," + io::format_fixed(e.bce, 8) + "," + io::format_fixed(e.kld, 8) + "," +
               io::format_fixed(e.mse, 8) + "," + (std::isnan(e.val_metric) ? std::string("NA") : io::format_fixed(e.val_metric, 8)) +
               "\n";
    }
    io::write_text(path, out);
}

GridSearchResult grid_search(std::span<const TrainingSample> train_set, std::span<const TrainingSample> val_set,
                             const ModelConfig& model_config, const TrainConfig& train_config, TrainMethod method) {
    if (val_set.empty()) throw DataError("grid search needs a validation set");
    const bool regress = method != TrainMethod::Vae;
    const std::vector<double> w2s = regress ? train_config.grid_values : std::vector<double>{train_config.w2};
    GridSearchResult best;
    best.score = -std::numeric_limits<double>::infinity();
    for (double w1 : train_config.grid_values)
        for (double w2 : w2s) {
            TrainConfig tc = train_config;
            tc.w1 = w1;
            tc.w2 = w2;
            tc.grid_search = false;
            TrainResult r = train(train_set, val_set, model_config, tc, method);
            std::vector<SlicePair> val;
            std::vector<double> vols;
            for (const auto& s : val_set) {
                val.push_back(select_views(s.slices, model_config.input_views));
                vols.push_back(s.volume_mL);
            }
            const ValScore vs = validate(r.model, val, vols, regress, tc.w1);
            const double score = regress ? vs.mrva : -vs.loss;
            if (score > best.score) {
                best.w1 = w1;
                best.w2 = w2;
                best.score = score;
                best.result = std::move(r);
            }
        }
    return best;
}

} // namespace slicevol
