#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slicevol/nn/layers.hpp"
#include "slicevol/nn/tensor.hpp"
#include "slicevol/volume.hpp"

namespace slicevol {

enum class HeadKind { None, Linear, Fcn };

/// How a model is optimized. `RvaeFcnCi` is the FCN head fed with the
/// reparameterized sample z instead of mu during training, which is what
/// Monte-Carlo confidence intervals need.
enum class TrainMethod { Vae, RvaeLr, RvaeFcn, RvaeFcnCi };

std::string to_string(HeadKind h);
std::string to_string(TrainMethod m);
HeadKind head_kind_from_string(const std::string& s);
TrainMethod train_method_from_string(const std::string& s);
HeadKind head_for(TrainMethod m);

struct ModelConfig {
    int latent_dim = 128;
    int input_views = 1;
    int image_size = 224;
    int encoder_blocks = 8;
    int decoder_blocks = 8;
    /// Width per resolution stage (two blocks per stage); the last entry
    /// repeats if there are more stages than widths.
    std::vector<int> channel_widths{32, 64, 128, 256};
    HeadKind head = HeadKind::None;
    int fcn_hidden = 64;
    /// Heads consume z = mu + zeta * sigma during training (CI variant).
    bool head_on_sample = false;

    void validate() const;
    int encoder_stages() const { return (encoder_blocks + 1) / 2; }
    int decoder_stages() const { return (decoder_blocks + 1) / 2; }
    int stage_width(int stage) const;
};

struct TrainConfig {
    double w1 = 0.2;
    double w2 = 0.2;
    double lr = 1e-3;
    int batch_size = 8;
    int phase1_epochs = 150;
    int max_epochs = 650;
    double volume_scale = 10.0;
    std::uint64_t seed = 0;
    /// Rotation augmentation range in degrees; 0 disables augmentation.
    double augment_max_deg = 15.0;
    /// Number of pre-rotated variants kept per training case.
    int augment_bank = 8;
    /// Validate (and possibly snapshot) every this many epochs.
    int eval_every = 1;
    /// Ridge penalty for the post-hoc latent regression.
    double plr_lambda = 1e-3;
    bool grid_search = false;
    std::vector<double> grid_values{0.1, 0.2, 0.3, 0.4, 0.5};

    void validate() const;
};

/// Per-input Gaussian latent parameters.
struct LatentDistribution {
    std::vector<double> mu;
    std::vector<double> sigma;
};

/// Per-view probability maps, row-major [view][row][col].
struct Reconstruction {
    int views = 0;
    int size = 0;
    std::vector<float> probs;
};

/// Residual VAE with an optional regression head.
///
/// Encoder: 3x3 conv stem + BN + ReLU, `encoder_blocks` residual blocks with
/// the first block of every stage halving the resolution, then a linear layer
/// to [mu | log-variance]. Decoder: linear layer + ReLU reshaped to the coarse
/// grid, `decoder_blocks` residual blocks with the first block of every stage
/// upsampling by two, then a 3x3 conv to one logit map per view.
class VaeNetwork {
public:
    VaeNetwork() = default;
    explicit VaeNetwork(const ModelConfig& cfg);

    void init(std::uint64_t seed);
    const ModelConfig& config() const { return cfg_; }

    struct Encoded {
        nn::Tensor mu;      // [N, L]
        nn::Tensor logvar;  // [N, L]
    };

    // Inference; const and free of cached state.
    Encoded encode(const nn::Tensor& x) const;
    nn::Tensor decode_logits(const nn::Tensor& z) const;
    nn::Tensor head(const nn::Tensor& latent) const;

    struct StepLoss {
        double bce = 0.0;
        double kld = 0.0;
        double mse = 0.0;
        double total = 0.0;
    };

    /// One forward/backward pass over a batch. Accumulates gradients into the
    /// parameters. `targets` are scaled volumes (ignored when w2 == 0 or no
    /// head); `noise` is [N, L] standard normal.
    StepLoss train_step(const nn::Tensor& x, std::span<const float> targets, const nn::Tensor& noise, double w1,
                        double w2);

    std::vector<nn::Param*> params();
    std::vector<nn::Buffer> buffers();
    /// Every saved tensor (parameters then buffers), by name.
    std::vector<std::pair<std::string, nn::Tensor*>> named_tensors();

    nn::Linear* head_out() { return head_out_ ? &*head_out_ : nullptr; }
    const nn::Linear* head_hidden_layer() const { return head_hidden_ ? &*head_hidden_ : nullptr; }
    const nn::Linear* head_out_layer() const { return head_out_ ? &*head_out_ : nullptr; }

private:
    int enc_grid() const { return cfg_.image_size >> cfg_.encoder_stages(); }
    int dec_grid() const { return cfg_.image_size >> cfg_.decoder_stages(); }
    int enc_top_width() const { return cfg_.stage_width(cfg_.encoder_stages() - 1); }
    int dec_top_width() const { return cfg_.stage_width(cfg_.decoder_stages() - 1); }

    ModelConfig cfg_;
    nn::Conv2d stem_;
    nn::BatchNorm2d stem_bn_;
    std::vector<nn::ResBlock> enc_blocks_;
    nn::Linear enc_fc_;
    nn::Linear dec_fc_;
    std::vector<nn::ResBlock> dec_blocks_;
    nn::Conv2d out_conv_;
    std::optional<nn::Linear> head_hidden_;
    std::optional<nn::Linear> head_out_;

    // training caches
    nn::Tensor stem_out_, dec_fc_out_, head_hidden_out_;
};

/// Post-hoc ridge regression of scaled volume on mu.
struct LinearHead {
    std::vector<double> W;
    double b = 0.0;
};

/// Hidden affine + rectifier + output affine.
struct FCNHead {
    int latent_dim = 0;
    int hidden = 0;
    std::vector<double> hidden_W;  // [hidden][latent_dim], row-major
    std::vector<double> hidden_b;  // [hidden]
    std::vector<double> out_W;     // [hidden]
    double out_b = 0.0;
};

struct MuCacheEntry {
    std::string case_id;
    std::vector<double> mu;
    double volume_mL = 0.0;
};

struct TrainedModel {
    ModelConfig config;
    TrainConfig train_config;
    TrainMethod method = TrainMethod::Vae;
    VaeNetwork net;
    std::vector<MuCacheEntry> training_mu_cache;
    std::optional<LinearHead> plr_head;
    int best_epoch = -1;

    /// Weights file `<stem>.bin` (little-endian float32) plus manifest
    /// `<stem>.json`.
    void save(const std::filesystem::path& stem) const;
    static TrainedModel load(const std::filesystem::path& stem);
};

/// Packs slices into an [N, views, S, S] float tensor; throws "config mismatch"
/// when a pair does not match the configured views or size.
nn::Tensor slices_to_tensor(const ModelConfig& cfg, std::span<const SlicePair* const> pairs);

LatentDistribution encode(const TrainedModel& model, const SlicePair& slices);
std::vector<LatentDistribution> encode_batch(const TrainedModel& model, std::span<const SlicePair> slices);

/// z = mu + zeta * sigma.
std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> sigma,
                                   std::span<const double> zeta);

Reconstruction decode(const TrainedModel& model, std::span<const double> z);

/// Extracts the network's regression head as plain coefficients.
LinearHead linear_head_of(const TrainedModel& model);
FCNHead fcn_head_of(const TrainedModel& model);

} // namespace slicevol
