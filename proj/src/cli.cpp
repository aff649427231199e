#include "slicevol/cli.hpp"

#include <algorithm>
#include <ostream>

#include "slicevol/error.hpp"
#include "slicevol/io.hpp"
#include "slicevol/parallel.hpp"
#include "slicevol/serialization.hpp"

namespace slicevol {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::finalize() {
    dataset.seed = seed;
    train.seed = seed;
    ci.seed = seed;
    if (views != 1 && views != 2) throw ConfigError("views must be single or dual");
    model.input_views = views;
    preprocess.image_size = model.image_size;
    if (methods.empty()) throw ConfigError("no methods requested");
    if (ci.enabled && ci.samples < 2) throw ConfigError("ci samples must be at least 2");
    if (n_folds < 2) throw ConfigError("n_folds must be at least 2");
    if (holdout_fold < -1 || holdout_fold >= n_folds) throw ConfigError("holdout_fold out of range");
    if (preprocess.mode_filter_size < 1 || preprocess.mode_filter_size % 2 == 0) throw ConfigError("invalid kernel");
    dataset.validate();
    preprocess.grid.validate();
    model.validate();
    train.validate();
}

namespace {

json dataset_json(const DatasetConfig& d) {
    return {{"n", d.n},
            {"splenomegaly_fraction", d.splenomegaly_fraction},
            {"normal_volume_range_mL", d.normal_volume_range_mL},
            {"splenomegaly_volume_range_mL", d.splenomegaly_volume_range_mL},
            {"splenomegaly_mean_mL", d.splenomegaly_mean_mL},
            {"splenomegaly_sd_mL", d.splenomegaly_sd_mL},
            {"grid_dims", d.grid_dims},
            {"voxel_size_mm", d.voxel_size_mm},
            {"max_bend", d.max_bend},
            {"max_taper", d.max_taper},
            {"max_rotation_deg", d.max_rotation_deg},
            {"max_lobulation", d.max_lobulation},
            {"exponent_range", d.exponent_range},
            {"pure_ellipsoids", d.pure_ellipsoids}};
}

DatasetConfig dataset_from_json(const json& j) {
    json_reject_unknown(j,
                        {"n", "splenomegaly_fraction", "normal_volume_range_mL", "splenomegaly_volume_range_mL",
                         "splenomegaly_mean_mL", "splenomegaly_sd_mL", "grid_dims", "voxel_size_mm", "max_bend",
                         "max_taper", "max_rotation_deg", "max_lobulation", "exponent_range", "pure_ellipsoids"},
                        "dataset");
    DatasetConfig d;
    json_take(j, "n", d.n);
    json_take(j, "splenomegaly_fraction", d.splenomegaly_fraction);
    json_take(j, "normal_volume_range_mL", d.normal_volume_range_mL);
    json_take(j, "splenomegaly_volume_range_mL", d.splenomegaly_volume_range_mL);
    json_take(j, "splenomegaly_mean_mL", d.splenomegaly_mean_mL);
    json_take(j, "splenomegaly_sd_mL", d.splenomegaly_sd_mL);
    json_take(j, "grid_dims", d.grid_dims);
    json_take(j, "voxel_size_mm", d.voxel_size_mm);
    json_take(j, "max_bend", d.max_bend);
    json_take(j, "max_taper", d.max_taper);
    json_take(j, "max_rotation_deg", d.max_rotation_deg);
    json_take(j, "max_lobulation", d.max_lobulation);
    json_take(j, "exponent_range", d.exponent_range);
    json_take(j, "pure_ellipsoids", d.pure_ellipsoids);
    return d;
}

} // namespace

RunConfig run_config_from_json(const json& j) {
    json_reject_unknown(j,
                        {"schema_version", "data_dir", "output_dir", "seed", "views", "methods", "ci", "dataset",
                         "preprocess", "folds", "model", "train"},
                        "run config");
    if (!j.contains("schema_version")) throw ConfigError("missing schema_version");
    int version = 0;
    json_take(j, "schema_version", version);
    if (version != kRunConfigSchemaVersion) throw ConfigError("unsupported schema_version " + std::to_string(version));
    RunConfig c;
    std::string s;
    if (j.contains("data_dir")) {
        json_take(j, "data_dir", s);
        c.data_dir = s;
    }
    if (j.contains("output_dir")) {
        json_take(j, "output_dir", s);
        c.output_dir = s;
    }
    json_take(j, "seed", c.seed);
    if (j.contains("views")) {
        json_take(j, "views", s);
        c.views = views_from_name(s);
    }
    if (j.contains("methods")) {
        std::vector<std::string> names;
        json_take(j, "methods", names);
        c.methods.clear();
        for (const auto& n : names) c.methods.push_back(estimate_method_from_string(n));
    }
    if (j.contains("ci")) {
        const json& k = j.at("ci");
        json_reject_unknown(k, {"enabled", "samples"}, "ci");
        json_take(k, "enabled", c.ci.enabled);
        json_take(k, "samples", c.ci.samples);
    }
    if (j.contains("dataset")) c.dataset = dataset_from_json(j.at("dataset"));
    if (j.contains("preprocess")) {
        const json& k = j.at("preprocess");
        json_reject_unknown(k, {"grid_dims", "voxel_size_mm", "mode_filter_size"}, "preprocess");
        json_take(k, "grid_dims", c.preprocess.grid.dims);
        json_take(k, "voxel_size_mm", c.preprocess.grid.voxel_size_mm);
        json_take(k, "mode_filter_size", c.preprocess.mode_filter_size);
    }
    if (j.contains("folds")) {
        const json& k = j.at("folds");
        json_reject_unknown(k, {"n_folds", "holdout_fold"}, "folds");
        json_take(k, "n_folds", c.n_folds);
        if (k.contains("holdout_fold") && k.at("holdout_fold").is_null())
            c.holdout_fold = -1;
        else
            json_take(k, "holdout_fold", c.holdout_fold);
    }
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"), c.model);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    c.finalize();
    return c;
}

json to_json(const RunConfig& c) {
    std::vector<std::string> methods;
    for (auto m : c.methods) methods.push_back(to_string(m));
    return {{"schema_version", kRunConfigSchemaVersion},
            {"data_dir", c.data_dir.string()},
            {"output_dir", c.output_dir.string()},
            {"seed", c.seed},
            {"views", views_name(c.views)},
            {"methods", methods},
            {"ci", {{"enabled", c.ci.enabled}, {"samples", c.ci.samples}}},
            {"dataset", dataset_json(c.dataset)},
            {"preprocess",
             {{"grid_dims", c.preprocess.grid.dims},
              {"voxel_size_mm", c.preprocess.grid.voxel_size_mm},
              {"mode_filter_size", c.preprocess.mode_filter_size}}},
            {"folds", {{"n_folds", c.n_folds}, {"holdout_fold", c.holdout_fold < 0 ? json() : json(c.holdout_fold)}}},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)}};
}

RunConfig load_run_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config not found: " + path.string());
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError("malformed config: " + std::string(e.what()));
    }
    return run_config_from_json(j);
}

fs::path manifest_path(const RunConfig& c) { return c.data_dir / "manifest.csv"; }

fs::path model_stem(const RunConfig& c, TrainMethod m, int fold) {
    return c.output_dir / "models" / views_name(c.views) / (to_string(m) + "_fold" + std::to_string(fold));
}

namespace {

fs::path slice_path(const RunConfig& c, const std::string& id) { return c.data_dir / "slices" / (id + ".slice2d"); }

fs::path variant_path(const RunConfig& c, const std::string& id, int k) {
    return c.data_dir / "slices" / (id + ".aug" + std::to_string(k) + ".slice2d");
}

std::vector<CaseRecord> read_records(const RunConfig& c) {
    const fs::path m = manifest_path(c);
    if (!fs::exists(m)) throw DataError("missing manifest: " + m.string() + " (run generate first)");
    return io::read_manifest(m);
}

} // namespace

std::vector<CaseRecord> cmd_generate(const RunConfig& c, std::ostream& out) {
    fs::create_directories(c.data_dir / "volumes");
    std::vector<CaseRecord> records = make_dataset(c.dataset, c.data_dir);
    // fold assignment travels with the manifest
    const FoldSpec folds = make_folds(records, c.n_folds, c.seed, c.holdout_fold);
    for (auto& r : records) r.fold = folds.fold_of(r.case_id);
    io::write_manifest(records, manifest_path(c));
    const auto spleno = std::count_if(records.begin(), records.end(), [](const CaseRecord& r) { return r.splenomegaly; });
    out << "generated " << records.size() << " volumes, " << spleno << " splenomegaly, manifest " << manifest_path(c).string()
        << "\n";
    return records;
}

void cmd_preprocess(const RunConfig& c, std::ostream& out) {
    const auto records = read_records(c);
    fs::create_directories(c.data_dir / "slices");
    const int bank = c.train.augment_max_deg > 0.0 ? c.train.augment_bank : 0;
    parallel_for(records.size(), [&](std::size_t i) {
        const auto& r = records[i];
        const fs::path vol = c.data_dir / "volumes" / (r.case_id + ".seg3d");
        if (!fs::exists(vol)) throw DataError("missing volume file: " + vol.string());
        const TrainingSample s = make_sample(io::read_seg3d(vol), r, c.preprocess, bank, c.train.augment_max_deg, c.seed);
        io::write_slice2d(s.slices, slice_path(c, r.case_id));
        for (std::size_t k = 0; k < s.variants.size(); ++k)
            io::write_slice2d(s.variants[k], variant_path(c, r.case_id, static_cast<int>(k)));
    });
    out << "preprocessed " << records.size() << " cases (" << bank << " rotated variants each) into "
        << (c.data_dir / "slices").string() << "\n";
}

SampleSet load_samples(const RunConfig& c, bool with_variants) {
    SampleSet set;
    set.records = read_records(c);
    const int bank = with_variants && c.train.augment_max_deg > 0.0 ? c.train.augment_bank : 0;
    for (const auto& r : set.records) {
        const fs::path p = slice_path(c, r.case_id);
        if (!fs::exists(p)) throw DataError("missing slices for " + r.case_id + " (run preprocess first)");
        TrainingSample s;
        s.case_id = r.case_id;
        s.volume_mL = r.volume_mL;
        s.slices = io::read_slice2d(p);
        if (s.slices.coronal.rows != c.model.image_size) throw ConfigError("config mismatch: slices are not image_size");
        for (int k = 0; k < bank; ++k) {
            const fs::path v = variant_path(c, r.case_id, k);
            if (!fs::exists(v)) throw DataError("missing rotated variant " + v.string() + " (rerun preprocess)");
            s.variants.push_back(io::read_slice2d(v));
        }
        if (!set.samples.emplace(r.case_id, std::move(s)).second) throw DataError("duplicate case id " + r.case_id);
    }
    return set;
}

FoldSpec run_folds(const RunConfig& c, const std::vector<CaseRecord>& records) {
    const bool stored = !records.empty() && std::all_of(records.begin(), records.end(), [&](const CaseRecord& r) {
        return r.fold && *r.fold >= 0 && *r.fold < c.n_folds;
    });
    if (!stored) return make_folds(records, c.n_folds, c.seed, c.holdout_fold);
    FoldSpec f;
    f.n_folds = c.n_folds;
    f.holdout_fold = c.holdout_fold;
    f.folds.assign(static_cast<std::size_t>(c.n_folds), {});
    f.splenomegaly_counts.assign(static_cast<std::size_t>(c.n_folds), 0);
    for (const auto& r : records) {
        f.folds[static_cast<std::size_t>(*r.fold)].push_back(r.case_id);
        if (r.splenomegaly) ++f.splenomegaly_counts[static_cast<std::size_t>(*r.fold)];
    }
    return f;
}

void cmd_train(const RunConfig& c, std::ostream& out, const TrainCommandOptions& opts) {
    const SampleSet data = load_samples(c, true);
    const FoldSpec folds = run_folds(c, data.records);
    const auto trainings = required_trainings(c.methods, c.ci.enabled);
    for (int v : folds.validation_folds()) {
        const auto train_set = data.subset(folds.training_ids(v));
        const auto val_set = data.subset(folds.folds[static_cast<std::size_t>(v)]);
        for (TrainMethod t : trainings) {
            const fs::path stem = model_stem(c, t, v);
            fs::create_directories(stem.parent_path());
            TrainResult r;
            if (c.train.grid_search) {
                GridSearchResult g = grid_search(train_set, val_set, c.model, c.train, t);
                out << "grid search " << to_string(t) << " fold " << v << ": w1=" << g.w1 << " w2=" << g.w2 << "\n";
                r = std::move(g.result);
            } else {
                TrainOptions to;
                to.checkpoint = stem.string() + ".ckpt";
                to.resume = true;
                to.stop_after_epoch = opts.stop_after_epoch;
                r = train(train_set, val_set, c.model, c.train, t, to);
            }
            write_training_log(r.log, stem.string() + ".log.csv");
            if (!r.completed) {
                out << to_string(t) << " fold " << v << ": stopped after epoch " << r.log.size() << " (checkpoint kept)\n";
                continue;
            }
            r.model.save(stem);
            for (const char* ext : {".ckpt.json", ".ckpt.bin"}) fs::remove(stem.string() + ext);
            out << to_string(t) << " fold " << v << ": best epoch " << r.model.best_epoch << " -> " << stem.string()
                << ".json\n";
        }
    }
}

namespace {

std::map<TrainMethod, TrainedModel> load_fold_models(const RunConfig& c, int fold) {
    std::map<TrainMethod, TrainedModel> models;
    for (TrainMethod t : required_trainings(c.methods, c.ci.enabled)) {
        const fs::path stem = model_stem(c, t, fold);
        if (!fs::exists(stem.string() + ".json")) throw DataError("missing model " + stem.string() + ".json (run train first)");
        TrainedModel m = TrainedModel::load(stem);
        if (m.config.input_views != c.views || m.config.image_size != c.model.image_size)
            throw ConfigError("config mismatch: model " + stem.string() + " has different views or image size");
        models.emplace(t, std::move(m));
    }
    return models;
}

std::vector<std::string> target_ids(const FoldSpec& folds, const SampleSet& data) {
    if (folds.holdout_fold >= 0) return folds.folds[static_cast<std::size_t>(folds.holdout_fold)];
    std::vector<std::string> ids;
    for (const auto& r : data.records) ids.push_back(r.case_id);
    return ids;
}

void write_plots(const RunConfig& c, const std::vector<PredictionRow>& rows) {
    const fs::path dir = c.output_dir / "plots";
    fs::create_directories(dir);
    for (const auto& s : summarize(rows)) {
        std::vector<ScatterPoint> pts;
        for (const auto& r : rows)
            if (r.method == s.method && r.views == s.views)
                pts.push_back({r.true_mL, r.volume_mL, is_splenomegaly(r.true_mL) ? 1 : 0});
        write_scatter_svg(pts, s.method + " (" + s.views + ")", "true volume (mL)", "estimated volume (mL)", true,
                          dir / ("pred_vs_true_" + s.method + "_" + s.views + ".svg"));
    }
}

} // namespace

void cmd_estimate(const RunConfig& c, std::ostream& out) {
    const SampleSet data = load_samples(c, false);
    const FoldSpec folds = run_folds(c, data.records);
    const auto cases = data.subset(target_ids(folds, data));
    std::vector<PredictionRow> rows;
    int index = 0;
    for (int v : folds.validation_folds()) {
        const auto part = predict_cases(load_fold_models(c, v), cases, c.methods, c.ci, index++);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    fs::create_directories(c.output_dir);
    write_predictions_csv(rows, c.output_dir / "estimates.csv");
    out << "wrote " << rows.size() << " estimates to " << (c.output_dir / "estimates.csv").string() << "\n";
}

EvalReport cmd_evaluate(const RunConfig& c, std::ostream& out) {
    if (c.holdout_fold < 0) throw DataError("no hold-out defined");
    const SampleSet data = load_samples(c, false);
    const FoldSpec folds = run_folds(c, data.records);
    const auto& holdout_ids = folds.folds[static_cast<std::size_t>(folds.holdout_fold)];
    if (holdout_ids.empty()) throw DataError("no hold-out defined");
    const auto holdout = data.subset(holdout_ids);
    const auto holdout_records = data.record_subset(holdout_ids);

    EvalReport report;
    json baselines = json::array();
    std::optional<PcaResult> pca;
    std::vector<ScatterPoint> pca_points;
    int index = 0;
    for (int v : folds.validation_folds()) {
        const auto models = load_fold_models(c, v);
        const auto rows = predict_cases(models, holdout, c.methods, c.ci, index);
        report.predictions.insert(report.predictions.end(), rows.begin(), rows.end());
        MeasurementRegression reg;
        const auto brows = baseline_predictions(data.record_subset(folds.training_ids(v)), holdout_records, c.views, index, &reg);
        report.predictions.insert(report.predictions.end(), brows.begin(), brows.end());
        baselines.push_back({{"model", index}, {"fold", v}, {"mode", to_string(reg.mode)}, {"coefficients", reg.coefficients},
                             {"intercept", reg.intercept}});
        // latent picture from the first fold's first model
        if (index == 0) {
            const TrainedModel& m = models.begin()->second;
            std::vector<std::vector<double>> mus;
            std::vector<int> groups;
            for (const auto& e : m.training_mu_cache) {
                mus.push_back(e.mu);
                groups.push_back(is_splenomegaly(e.volume_mL) ? 1 : 0);
            }
            try {
                pca = latent_pca(mus);
                for (std::size_t i = 0; i < mus.size(); ++i)
                    pca_points.push_back({pca->coords[i][0], pca->coords[i][1], groups[i]});
            } catch (const Error&) {
                pca.reset();
            }
        }
        ++index;
    }
    report.rows = summarize(report.predictions);
    report.details["config"] = to_json(c);
    report.details["baselines"] = baselines;
    json fj = json::array();
    for (std::size_t f = 0; f < folds.folds.size(); ++f)
        fj.push_back({{"fold", f}, {"cases", folds.folds[f].size()}, {"splenomegaly", folds.splenomegaly_counts[f]}});
    report.details["folds"] = fj;
    report.details["holdout_fold"] = folds.holdout_fold;
    if (pca) report.details["latent_pca_explained_variance"] = pca->explained_variance;

    fs::create_directories(c.output_dir);
    io::write_text(c.output_dir / "report.json", report_to_json(report).dump(1) + "\n");
    write_report_csv(report, c.output_dir / "report.csv");
    write_predictions_csv(report.predictions, c.output_dir / "predictions.csv");
    write_plots(c, report.predictions);
    if (pca)
        write_scatter_svg(pca_points, "latent mean, first two principal components", "PC1", "PC2", false,
                          c.output_dir / "plots" / ("latent_pca_" + views_name(c.views) + ".svg"));
    for (const auto& s : report.rows) {
        out << s.method << " (" << s.views << "): MRVA " << io::format_fixed(s.mean.mrva, 2) << " +- "
            << io::format_fixed(s.mean.std, 2);
        if (s.mean.r) out << ", R " << io::format_fixed(*s.mean.r, 3);
        if (s.mean.cia) out << ", MCIA " << io::format_fixed(*s.mean.cia, 2);
        out << "\n";
    }
    return report;
}

void cmd_visualize(const RunConfig& c, std::ostream& out) {
    const SampleSet data = load_samples(c, false);
    const FoldSpec folds = run_folds(c, data.records);
    const fs::path dir = c.output_dir / "plots" / "slices";
    fs::create_directories(dir);
    const auto ids = target_ids(folds, data);
    for (const auto& id : ids) {
        const auto& s = data.samples.at(id);
        io::write_png(s.slices.coronal, dir / (id + "_coronal.png"));
        if (s.slices.transverse) io::write_png(*s.slices.transverse, dir / (id + "_transverse.png"));
    }
    const fs::path preds = c.output_dir / "predictions.csv";
    if (fs::exists(preds)) write_plots(c, read_predictions_csv(preds));
    out << "wrote slice images for " << ids.size() << " cases to " << dir.string() << "\n";
}

} // namespace slicevol
