#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slicevol/estimators.hpp"
#include "slicevol/phantom.hpp"

namespace slicevol {

struct MrvaResult {
    double mrva = 0.0;  // %
    double std = 0.0;   // population std of per-case RVA, %
};

/// Per-case (1 - |pred - truth| / truth) * 100. Throws on a nonpositive truth.
std::vector<double> rva_per_case(std::span<const double> truth, std::span<const double> pred);
MrvaResult mrva(std::span<const double> truth, std::span<const double> pred);

/// Pearson correlation; throws "undefined correlation" on zero variance.
double pearson_r(std::span<const double> truth, std::span<const double> pred);

/// Rates in %; a rate whose denominator is zero is empty ("not applicable").
struct ClassificationRates {
    int tp = 0, tn = 0, fp = 0, fn = 0;
    std::optional<double> sen;
    std::optional<double> spe;
    double acc = 0.0;
};
ClassificationRates splenomegaly_metrics(std::span<const double> truth, std::span<const double> pred,
                                         double threshold = kSplenomegalyThresholdMl);

/// Share of truths inside the closed interval [lower, upper], in %.
double cia(std::span<const double> truth, std::span<const ConfidenceInterval> intervals);

struct FoldSpec {
    int n_folds = 5;
    int holdout_fold = 0;
    std::vector<std::vector<std::string>> folds;
    std::vector<int> splenomegaly_counts;

    int fold_of(const std::string& case_id) const;
    /// Case ids of the non-holdout folds other than `val_fold`.
    std::vector<std::string> training_ids(int val_fold) const;
    /// Non-holdout fold indices in order.
    std::vector<int> validation_folds() const;
};

/// Stratified split: shuffled positives are dealt round-robin across folds,
/// then the shuffled negatives continue the deal. Throws "too few cases".
FoldSpec make_folds(const std::vector<CaseRecord>& records, int n_folds = 5, std::uint64_t seed = 0,
                    int holdout_fold = 0);

struct PcaResult {
    std::vector<std::array<double, 2>> coords;
    std::array<double, 2> explained_variance{0.0, 0.0};
};

/// Projection of mean-centred vectors onto the top two principal axes.
/// Throws "degenerate latent cloud" when the rank is below two.
PcaResult latent_pca(const std::vector<std::vector<double>>& mus);

} // namespace slicevol
