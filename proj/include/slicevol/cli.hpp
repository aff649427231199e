#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicevol/experiment.hpp"
#include "slicevol/phantom.hpp"
#include "slicevol/preprocess.hpp"

namespace slicevol {

/// Everything a pipeline command needs. `seed` drives data generation,
/// augmentation, fold assignment and training.
struct RunConfig {
    std::filesystem::path data_dir = "data";
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    int views = 2;
    std::vector<EstimateMethod> methods{EstimateMethod::NN, EstimateMethod::PLR, EstimateMethod::RvaeLr,
                                        EstimateMethod::RvaeFcnr};
    CiOptions ci;
    DatasetConfig dataset;
    PreprocessOptions preprocess;
    int n_folds = 5;
    int holdout_fold = 0;
    ModelConfig model;
    TrainConfig train;

    /// Pushes seed / views / image size into the nested configs and checks them.
    void finalize();
};

inline constexpr int kRunConfigSchemaVersion = 1;

/// Parses a run config document. Unknown keys, a missing or unsupported
/// schema_version and invalid values raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

/// Layout helpers.
std::filesystem::path manifest_path(const RunConfig& c);
std::filesystem::path model_stem(const RunConfig& c, TrainMethod m, int fold);

std::vector<CaseRecord> cmd_generate(const RunConfig& c, std::ostream& out);
void cmd_preprocess(const RunConfig& c, std::ostream& out);
/// Loads the manifest and the prepared slices.
SampleSet load_samples(const RunConfig& c, bool with_variants);
FoldSpec run_folds(const RunConfig& c, const std::vector<CaseRecord>& records);

struct TrainCommandOptions {
    /// Stop every model after this epoch, leaving checkpoints (testing aid).
    int stop_after_epoch = -1;
};
void cmd_train(const RunConfig& c, std::ostream& out, const TrainCommandOptions& opts = {});
void cmd_estimate(const RunConfig& c, std::ostream& out);
EvalReport cmd_evaluate(const RunConfig& c, std::ostream& out);
void cmd_visualize(const RunConfig& c, std::ostream& out);

} // namespace slicevol
