#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "slicevol/error.hpp"
#include "slicevol/eval.hpp"

namespace slicevol {

std::vector<double> rva_per_case(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size() || truth.empty()) throw Error("length mismatch");
    std::vector<double> out(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!(truth[i] > 0.0)) throw Error("nonpositive true volume");
        out[i] = (1.0 - std::abs(pred[i] - truth[i]) / truth[i]) * 100.0;
    }
    return out;
}

MrvaResult mrva(std::span<const double> truth, std::span<const double> pred) {
    const auto rva = rva_per_case(truth, pred);
    const double n = static_cast<double>(rva.size());
    double mean = 0.0;
    for (double v : rva) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : rva) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

double pearson_r(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size() || truth.size() < 2) throw Error("length mismatch");
    const double n = static_cast<double>(truth.size());
    double mt = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        mt += truth[i];
        mp += pred[i];
    }
    mt /= n;
    mp /= n;
    double st = 0.0, sp = 0.0, c = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double a = truth[i] - mt, b = pred[i] - mp;
        st += a * a;
        sp += b * b;
        c += a * b;
    }
    if (st <= 0.0 || sp <= 0.0) throw Error("undefined correlation");
    return c / std::sqrt(st * sp);
}

ClassificationRates splenomegaly_metrics(std::span<const double> truth, std::span<const double> pred, double threshold) {
    if (truth.size() != pred.size()) throw Error("length mismatch");
    ClassificationRates r;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] > threshold, p = pred[i] > threshold;
        if (t && p) ++r.tp;
        else if (!t && !p) ++r.tn;
        else if (p) ++r.fp;
        else ++r.fn;
    }
    if (r.tp + r.fn > 0) r.sen = 100.0 * r.tp / (r.tp + r.fn);
    if (r.tn + r.fp > 0) r.spe = 100.0 * r.tn / (r.tn + r.fp);
    if (!truth.empty()) r.acc = 100.0 * (r.tp + r.tn) / static_cast<double>(truth.size());
    return r;
}

double cia(std::span<const double> truth, std::span<const ConfidenceInterval> intervals) {
    if (truth.size() != intervals.size() || truth.empty()) throw Error("length mismatch");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (intervals[i].lower > intervals[i].upper) throw Error("malformed interval");
        if (truth[i] >= intervals[i].lower && truth[i] <= intervals[i].upper) ++inside;
    }
    return 100.0 * static_cast<double>(inside) / static_cast<double>(truth.size());
}

int FoldSpec::fold_of(const std::string& case_id) const {
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (std::find(folds[f].begin(), folds[f].end(), case_id) != folds[f].end()) return static_cast<int>(f);
    return -1;
}

std::vector<int> FoldSpec::validation_folds() const {
    std::vector<int> out;
    for (int f = 0; f < n_folds; ++f)
        if (f != holdout_fold) out.push_back(f);
    return out;
}

std::vector<std::string> FoldSpec::training_ids(int val_fold) const {
    std::vector<std::string> out;
    for (int f = 0; f < n_folds; ++f) {
        if (f == holdout_fold || f == val_fold) continue;
        out.insert(out.end(), folds[static_cast<std::size_t>(f)].begin(), folds[static_cast<std::size_t>(f)].end());
    }
    return out;
}

FoldSpec make_folds(const std::vector<CaseRecord>& records, int n_folds, std::uint64_t seed, int holdout_fold) {
    if (n_folds < 2) throw ConfigError("n_folds must be at least 2");
    if (holdout_fold < -1 || holdout_fold >= n_folds) throw ConfigError("holdout_fold out of range");
    if (static_cast<int>(records.size()) < n_folds) throw DataError("too few cases");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < records.size(); ++i) (records[i].splenomegaly ? pos : neg).push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    FoldSpec spec;
    spec.n_folds = n_folds;
    spec.holdout_fold = holdout_fold;
    spec.folds.assign(static_cast<std::size_t>(n_folds), {});
    spec.splenomegaly_counts.assign(static_cast<std::size_t>(n_folds), 0);
    std::size_t slot = 0;
    for (std::size_t i : pos) {
        spec.folds[slot % n_folds].push_back(records[i].case_id);
        ++spec.splenomegaly_counts[slot % n_folds];
        ++slot;
    }
    for (std::size_t i : neg) spec.folds[slot++ % n_folds].push_back(records[i].case_id);
    return spec;
}

PcaResult latent_pca(const std::vector<std::vector<double>>& mus) {
    if (mus.size() < 3) throw Error("need at least 3 vectors");
    const auto n = static_cast<Eigen::Index>(mus.size());
    const auto d = static_cast<Eigen::Index>(mus.front().size());
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(mus[static_cast<std::size_t>(i)].size()) != d) throw Error("dim mismatch");
        for (Eigen::Index k = 0; k < d; ++k) X(i, k) = mus[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    X.rowwise() -= X.colwise().mean();
    // thin SVD: right singular vectors are the principal axes
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    if (s.size() < 2 || s(0) <= 0.0 || s(1) <= 1e-12 * s(0)) throw Error("degenerate latent cloud");
    PcaResult r;
    const Eigen::MatrixXd proj = X * svd.matrixV().leftCols(2);
    r.coords.resize(mus.size());
    for (Eigen::Index i = 0; i < n; ++i) r.coords[static_cast<std::size_t>(i)] = {proj(i, 0), proj(i, 1)};
    r.explained_variance = {s(0) * s(0) / static_cast<double>(n - 1), s(1) * s(1) / static_cast<double>(n - 1)};
    return r;
}

} // namespace slicevol
