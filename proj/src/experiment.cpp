#include "slicevol/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "slicevol/error.hpp"
#include "slicevol/io.hpp"

namespace slicevol {

const CaseRecord& SampleSet::record(const std::string& case_id) const {
    for (const auto& r : records)
        if (r.case_id == case_id) return r;
    throw DataError("unknown case " + case_id);
}

std::vector<TrainingSample> SampleSet::subset(const std::vector<std::string>& ids) const {
    std::vector<TrainingSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = samples.find(id);
        if (it == samples.end()) throw DataError("no prepared slices for " + id);
        out.push_back(it->second);
    }
    return out;
}

std::vector<CaseRecord> SampleSet::record_subset(const std::vector<std::string>& ids) const {
    std::vector<CaseRecord> out;
    for (const auto& id : ids) out.push_back(record(id));
    return out;
}

std::string views_name(int views) { return views == 2 ? "dual" : "single"; }

int views_from_name(const std::string& s) {
    if (s == "single") return 1;
    if (s == "dual") return 2;
    throw ConfigError("views must be single or dual, got " + s);
}

const MethodSummary* EvalReport::find(const std::string& method, const std::string& views) const {
    for (const auto& r : rows)
        if (r.method == method && r.views == views) return &r;
    return nullptr;
}

std::vector<TrainMethod> required_trainings(const std::vector<EstimateMethod>& methods, bool ci) {
    std::vector<TrainMethod> out;
    for (auto m : methods) {
        const TrainMethod t = trained_by(m);
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    if (ci) out.push_back(TrainMethod::RvaeFcnCi);
    return out;
}

std::vector<PredictionRow> predict_cases(const std::map<TrainMethod, TrainedModel>& models,
                                         const std::vector<TrainingSample>& cases,
                                         const std::vector<EstimateMethod>& methods, const CiOptions& ci, int model_index) {
    std::vector<PredictionRow> rows;
    std::map<TrainMethod, std::vector<LatentDistribution>> latents;
    auto latents_of = [&](TrainMethod t) -> const std::vector<LatentDistribution>& {
        auto it = latents.find(t);
        if (it != latents.end()) return it->second;
        auto m = models.find(t);
        if (m == models.end()) throw DataError("missing model: " + to_string(t));
        std::vector<SlicePair> pairs;
        for (const auto& c : cases) pairs.push_back(select_views(c.slices, m->second.config.input_views));
        return latents[t] = encode_batch(m->second, pairs);
    };
    for (auto em : methods) {
        const TrainMethod t = trained_by(em);
        const auto& lat = latents_of(t);
        const TrainedModel& model = models.at(t);
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const VolumeEstimate est = estimate_from_mu(model, lat[i].mu, em);
            rows.push_back({cases[i].case_id, to_string(em), views_name(model.config.input_views), model_index,
                            cases[i].volume_mL, est.volume_mL, est.clamped, std::nullopt});
        }
    }
    if (ci.enabled) {
        const auto& lat = latents_of(TrainMethod::RvaeFcnCi);
        const TrainedModel& model = models.at(TrainMethod::RvaeFcnCi);
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const auto [est, interval] =
                ci_from_latent(model, lat[i], ci.samples, ci.seed * 1000003ULL + static_cast<std::uint64_t>(i));
            rows.push_back({cases[i].case_id, "rvae_fcnr_ci", views_name(model.config.input_views), model_index,
                            cases[i].volume_mL, est.volume_mL, est.clamped, interval});
        }
    }
    return rows;
}

std::vector<PredictionRow> baseline_predictions(const std::vector<CaseRecord>& train, const std::vector<CaseRecord>& test,
                                                int views, int model_index, MeasurementRegression* fitted) {
    const auto mode = views == 2 ? MeasurementRegression::Mode::Triple : MeasurementRegression::Mode::Single;
    const MeasurementRegression reg = fit_measurement_regression(train, mode);
    if (fitted) *fitted = reg;
    std::vector<PredictionRow> rows;
    for (const auto& r : test) {
        const auto p = predict_measurement_regression(reg, r.measurements);
        rows.push_back({r.case_id, "baseline_" + to_string(mode), views_name(views), model_index, r.volume_mL, p.volume_mL,
                        p.clamped, std::nullopt});
    }
    return rows;
}

MethodMetrics compute_metrics(const std::vector<PredictionRow>& rows) {
    std::vector<double> truth, pred;
    std::vector<ConfidenceInterval> intervals;
    for (const auto& r : rows) {
        truth.push_back(r.true_mL);
        pred.push_back(r.volume_mL);
        if (r.ci) intervals.push_back(*r.ci);
    }
    MethodMetrics m;
    const auto mr = mrva(truth, pred);
    m.mrva = mr.mrva;
    m.std = mr.std;
    try {
        m.r = pearson_r(truth, pred);
    } catch (const Error&) {
        m.r.reset();
    }
    const auto cls = splenomegaly_metrics(truth, pred);
    m.sen = cls.sen;
    m.spe = cls.spe;
    m.acc = cls.acc;
    if (!intervals.empty() && intervals.size() == rows.size()) m.cia = cia(truth, intervals);
    return m;
}

namespace {

std::optional<double> mean_of(const std::vector<MethodMetrics>& ms, std::optional<double> MethodMetrics::*field) {
    double s = 0.0;
    int n = 0;
    for (const auto& m : ms)
        if (m.*field) {
            s += *(m.*field);
            ++n;
        }
    if (n == 0) return std::nullopt;
    return s / n;
}

} // namespace

std::vector<MethodSummary> summarize(const std::vector<PredictionRow>& rows) {
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& r : rows) {
        const auto k = std::make_pair(r.method, r.views);
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    std::vector<MethodSummary> out;
    for (const auto& [method, views] : keys) {
        std::map<int, std::vector<PredictionRow>> by_model;
        for (const auto& r : rows)
            if (r.method == method && r.views == views) by_model[r.model].push_back(r);
        MethodSummary s;
        s.method = method;
        s.views = views;
        for (const auto& [idx, rs] : by_model) s.per_model.push_back(compute_metrics(rs));
        const double n = static_cast<double>(s.per_model.size());
        for (const auto& m : s.per_model) {
            s.mean.mrva += m.mrva / n;
            s.mean.std += m.std / n;
            s.mean.acc += m.acc / n;
        }
        s.mean.r = mean_of(s.per_model, &MethodMetrics::r);
        s.mean.sen = mean_of(s.per_model, &MethodMetrics::sen);
        s.mean.spe = mean_of(s.per_model, &MethodMetrics::spe);
        s.mean.cia = mean_of(s.per_model, &MethodMetrics::cia);
        out.push_back(std::move(s));
    }
    return out;
}

EvalReport cross_validate(const SampleSet& data, const FoldSpec& folds, const CrossValidationSpec& spec) {
    if (folds.holdout_fold < 0 || folds.holdout_fold >= folds.n_folds) throw DataError("no hold-out defined");
    const auto& holdout_ids = folds.folds[static_cast<std::size_t>(folds.holdout_fold)];
    const auto holdout = data.subset(holdout_ids);
    const auto holdout_records = data.record_subset(holdout_ids);
    const int views = spec.model.input_views;
    EvalReport report;
    nlohmann::json baselines = nlohmann::json::array();
    int model_index = 0;
    for (int v : folds.validation_folds()) {
        const auto train_ids = folds.training_ids(v);
        for (const auto& id : train_ids)
            if (std::find(holdout_ids.begin(), holdout_ids.end(), id) != holdout_ids.end())
                throw Error("hold-out case in training fold: " + id);
        const auto train_set = data.subset(train_ids);
        const auto val_set = data.subset(folds.folds[static_cast<std::size_t>(v)]);
        std::map<TrainMethod, TrainedModel> models;
        for (TrainMethod t : required_trainings(spec.methods, spec.ci.enabled)) {
            TrainResult r = train(train_set, val_set, spec.model, spec.train, t);
            if (spec.on_model) spec.on_model(model_index, t, r);
            models.emplace(t, std::move(r.model));
        }
        auto rows = predict_cases(models, holdout, spec.methods, spec.ci, model_index);
        report.predictions.insert(report.predictions.end(), rows.begin(), rows.end());
        if (spec.baselines) {
            MeasurementRegression reg;
            auto brows = baseline_predictions(data.record_subset(train_ids), holdout_records, views, model_index, &reg);
            report.predictions.insert(report.predictions.end(), brows.begin(), brows.end());
            baselines.push_back({{"model", model_index}, {"mode", to_string(reg.mode)}, {"coefficients", reg.coefficients},
                                 {"intercept", reg.intercept}});
        }
        ++model_index;
    }
    report.rows = summarize(report.predictions);
    report.details["baselines"] = baselines;
    return report;
}

namespace {

std::string opt_num(const std::optional<double>& v, int digits = 6) { return v ? io::format_fixed(*v, digits) : "NA"; }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json metrics_json(const MethodMetrics& m) {
    return {{"MRVA", m.mrva}, {"STD", m.std}, {"R", opt_json(m.r)}, {"SEN", opt_json(m.sen)},
            {"SPE", opt_json(m.spe)}, {"ACC", m.acc}, {"MCIA", opt_json(m.cia)}};
}

} // namespace

void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::filesystem::path& path) {
    std::string out = "case_id,method,volume_mL,clamped,eta,theta,ci_lower,ci_upper,views,model,true_volume_mL\n";
    for (const auto& r : rows) {
        out += r.case_id + "," + r.method + "," + io::format_fixed(r.volume_mL) + "," + (r.clamped ? "true" : "false") + ",";
        if (r.ci)
            out += io::format_fixed(r.ci->eta) + "," + io::format_fixed(r.ci->theta) + "," + io::format_fixed(r.ci->lower) +
                   "," + io::format_fixed(r.ci->upper);
        else
            out += "NA,NA,NA,NA";
        out += "," + r.views + "," + std::to_string(r.model) + "," + io::format_fixed(r.true_mL) + "\n";
    }
    io::write_text(path, out);
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
    std::istringstream in(io::read_text(path));
    std::string line;
    std::getline(in, line);
    std::vector<PredictionRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = io::split_csv_line(line);
        if (f.size() != 11) throw DataError("malformed predictions row: " + line);
        PredictionRow r;
        r.case_id = f[0];
        r.method = f[1];
        r.volume_mL = std::stod(f[2]);
        r.clamped = f[3] == "true";
        if (f[4] != "NA") {
            ConfidenceInterval ci;
            ci.eta = std::stod(f[4]);
            ci.theta = std::stod(f[5]);
            ci.lower = std::stod(f[6]);
            ci.upper = std::stod(f[7]);
            r.ci = ci;
        }
        r.views = f[8];
        r.model = std::stoi(f[9]);
        r.true_mL = std::stod(f[10]);
        rows.push_back(r);
    }
    return rows;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::string out = "method,views,MRVA,STD,R,SEN,SPE,ACC,MCIA\n";
    for (const auto& s : report.rows) {
        const auto& m = s.mean;
        out += s.method + "," + s.views + "," + io::format_fixed(m.mrva, 4) + "," + io::format_fixed(m.std, 4) + "," +
               opt_num(m.r, 4) + "," + opt_num(m.sen, 4) + "," + opt_num(m.spe, 4) + "," + io::format_fixed(m.acc, 4) + "," +
               opt_num(m.cia, 4) + "\n";
    }
    io::write_text(path, out);
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : report.rows) {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& m : s.per_model) per.push_back(metrics_json(m));
        rows.push_back({{"method", s.method}, {"views", s.views}, {"mean", metrics_json(s.mean)}, {"per_model", per}});
    }
    j["methods"] = rows;
    j["n_predictions"] = report.predictions.size();
    for (auto it = report.details.begin(); it != report.details.end(); ++it) j[it.key()] = it.value();
    return j;
}

void write_scatter_svg(const std::vector<ScatterPoint>& points, const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, bool diagonal, const std::filesystem::path& path) {
    const double W = 480, H = 420, L = 60, R = 20, T = 40, B = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (!points.empty()) {
        x0 = x1 = points[0].x;
        y0 = y1 = points[0].y;
        for (const auto& p : points) {
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y);
            y1 = std::max(y1, p.y);
        }
    }
    if (diagonal) {
        x0 = y0 = std::min(x0, y0);
        x1 = y1 = std::max(x1, y1);
    }
    auto pad = [](double& lo, double& hi) {
        const double span = hi - lo > 0 ? hi - lo : 1.0;
        lo -= 0.05 * span;
        hi += 0.05 * span;
    };
    pad(x0, x1);
    pad(y0, y1);
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    auto f = [](double v) { return io::format_fixed(v, 2); };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(W) + "\" height=\"" + f(H) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + f(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + title + "</text>\n";
    s += "<rect x=\"" + f(L) + "\" y=\"" + f(T) + "\" width=\"" + f(W - L - R) + "\" height=\"" + f(H - T - B) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
        s += "<text x=\"" + f(px(xv)) + "\" y=\"" + f(H - B + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
             io::format_fixed(xv, 1) + "</text>\n";
        s += "<text x=\"" + f(L - 4) + "\" y=\"" + f(py(yv) + 3) + "\" text-anchor=\"end\" font-size=\"10\">" +
             io::format_fixed(yv, 1) + "</text>\n";
    }
    s += "<text x=\"" + f(W / 2) + "\" y=\"" + f(H - 12) + "\" text-anchor=\"middle\" font-size=\"12\">" + xlabel + "</text>\n";
    s += "<text x=\"14\" y=\"" + f(H / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " + f(H / 2) +
         ")\">" + ylabel + "</text>\n";
    if (diagonal)
        s += "<line x1=\"" + f(px(x0)) + "\" y1=\"" + f(py(y0)) + "\" x2=\"" + f(px(x1)) + "\" y2=\"" + f(py(y1)) +
             "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    for (const auto& p : points)
        s += "<circle cx=\"" + f(px(p.x)) + "\" cy=\"" + f(py(p.y)) + "\" r=\"3\" fill=\"" +
             (p.group ? std::string("#c0392b") : std::string("#2e86c1")) + "\" fill-opacity=\"0.75\"/>\n";
    s += "</svg>\n";
    io::write_text(path, s);
}

} // namespace slicevol
