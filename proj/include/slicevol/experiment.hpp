#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicevol/baselines.hpp"
#include "slicevol/eval.hpp"
#include "slicevol/train.hpp"

namespace slicevol {

/// Records plus prepared samples keyed by case id.
struct SampleSet {
    std::vector<CaseRecord> records;
    std::map<std::string, TrainingSample> samples;

    const CaseRecord& record(const std::string& case_id) const;
    std::vector<TrainingSample> subset(const std::vector<std::string>& ids) const;
    std::vector<CaseRecord> record_subset(const std::vector<std::string>& ids) const;
};

std::string views_name(int views);
int views_from_name(const std::string& s);

/// One per-case output row. `method` is an estimator name, "rvae_fcnr_ci" or
/// "baseline_single" / "baseline_triple".
struct PredictionRow {
    std::string case_id;
    std::string method;
    std::string views;
    int model = 0;
    double true_mL = 0.0;
    double volume_mL = 0.0;
    bool clamped = false;
    std::optional<ConfidenceInterval> ci;
};

struct MethodMetrics {
    double mrva = 0.0;
    double std = 0.0;
    std::optional<double> r;
    std::optional<double> sen;
    std::optional<double> spe;
    double acc = 0.0;
    std::optional<double> cia;
};

MethodMetrics compute_metrics(const std::vector<PredictionRow>& rows);

struct MethodSummary {
    std::string method;
    std::string views;
    MethodMetrics mean;  // mean over models of each metric
    std::vector<MethodMetrics> per_model;
};

struct EvalReport {
    std::vector<MethodSummary> rows;
    std::vector<PredictionRow> predictions;
    nlohmann::json details = nlohmann::json::object();

    const MethodSummary* find(const std::string& method, const std::string& views) const;
};

/// Models needed to serve the requested estimators (and the CI variant).
std::vector<TrainMethod> required_trainings(const std::vector<EstimateMethod>& methods, bool ci);

struct CiOptions {
    bool enabled = false;
    int samples = 100;
    std::uint64_t seed = 0;
};

/// Predictions of every requested estimator on `cases` from one fold's models.
std::vector<PredictionRow> predict_cases(const std::map<TrainMethod, TrainedModel>& models,
                                         const std::vector<TrainingSample>& cases,
                                         const std::vector<EstimateMethod>& methods, const CiOptions& ci, int model_index);

/// Measurement baseline fitted on `train`, applied to `test`. The single mode
/// serves single-view runs, the triple mode dual-view runs.
std::vector<PredictionRow> baseline_predictions(const std::vector<CaseRecord>& train, const std::vector<CaseRecord>& test,
                                                int views, int model_index, MeasurementRegression* fitted = nullptr);

/// Groups rows by (method, views, model) and averages the per-model metrics.
std::vector<MethodSummary> summarize(const std::vector<PredictionRow>& rows);

struct CrossValidationSpec {
    ModelConfig model;
    TrainConfig train;
    std::vector<EstimateMethod> methods{EstimateMethod::NN, EstimateMethod::PLR, EstimateMethod::RvaeLr,
                                        EstimateMethod::RvaeFcnr};
    CiOptions ci;
    bool baselines = true;
    /// Called after each trained model (fold index, method, result).
    std::function<void(int, TrainMethod, const TrainResult&)> on_model;
};

/// Trains one model per non-holdout validation fold for every required method,
/// evaluates each on the hold-out fold and averages metrics across models.
/// Throws "no hold-out defined" without a hold-out fold.
EvalReport cross_validate(const SampleSet& data, const FoldSpec& folds, const CrossValidationSpec& spec);

void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::filesystem::path& path);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
nlohmann::json report_to_json(const EvalReport& report);

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    /// 0 or 1 picks one of two colours (e.g. splenomegaly).
    int group = 0;
};

/// Minimal SVG scatter plot; `diagonal` adds the y = x reference line.
void write_scatter_svg(const std::vector<ScatterPoint>& points, const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, bool diagonal, const std::filesystem::path& path);

} // namespace slicevol
