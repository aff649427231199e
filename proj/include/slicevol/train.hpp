#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slicevol/phantom.hpp"
#include "slicevol/preprocess.hpp"
#include "slicevol/vae.hpp"

namespace slicevol {

/// One case ready for training: the plain dual-view slices plus a bank of
/// slices taken from randomly rotated copies of the 3D mask.
struct TrainingSample {
    std::string case_id;
    double volume_mL = 0.0;
    SlicePair slices;
    std::vector<SlicePair> variants;
};

/// Runs the 3D pipeline on a raw mask and extracts the plain slices and
/// `bank` rotated variants (angles uniform in +-max_deg, seeded per variant).
TrainingSample make_sample(const LabelVolume& raw, const CaseRecord& record, const PreprocessOptions& opts, int bank,
                           double max_deg, std::uint64_t seed);

/// Drops the transverse view when `views` is 1.
SlicePair select_views(const SlicePair& pair, int views);

struct EpochLog {
    int epoch = 0;
    double bce = 0.0;
    double kld = 0.0;
    double mse = 0.0;
    double total = 0.0;
    /// Validation MRVA (%) once a regression head is trained, otherwise the
    /// validation loss. NaN without a validation set.
    double val_metric = 0.0;
};

struct TrainOptions {
    /// Checkpoint stem written after every epoch; empty disables.
    std::filesystem::path checkpoint;
    /// Continue from `checkpoint` if it exists.
    bool resume = false;
    /// Stop (leaving the checkpoint behind) after this epoch; < 0 runs to the end.
    int stop_after_epoch = -1;
    std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
    TrainedModel model;
    std::vector<EpochLog> log;
    bool completed = true;
};

/// Two-phase training. vae: Eq.-1 loss for max_epochs, snapshot at the best
/// validation loss. rvae_*: w2 = 0 for phase1_epochs, then the full loss,
/// snapshot at the best validation MRVA seen in the second phase. Afterwards
/// the mu cache and the post-hoc latent regression are filled from the plain
/// training slices.
TrainResult train(std::span<const TrainingSample> train_set, std::span<const TrainingSample> val_set,
                  ModelConfig model_config, const TrainConfig& train_config, TrainMethod method,
                  const TrainOptions& options = {});

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

struct GridSearchResult {
    double w1 = 0.0;
    double w2 = 0.0;
    double score = 0.0;
    TrainResult result;
};

/// Tries every (w1, w2) pair from train_config.grid_values (w2 only for
/// regression methods) and keeps the best validation score.
GridSearchResult grid_search(std::span<const TrainingSample> train_set, std::span<const TrainingSample> val_set,
                             const ModelConfig& model_config, const TrainConfig& train_config, TrainMethod method);

} // namespace slicevol
