#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slicevol/cli.hpp"
#include "slicevol/error.hpp"

using namespace slicevol;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kTraining = 4 };

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> methods;
    std::string views;
    std::string out;
    int stop_after_epoch = -1;
};

RunConfig resolve(const Flags& f) {
    RunConfig c = load_run_config(f.config);
    if (f.seed) c.seed = *f.seed;
    if (!f.methods.empty()) {
        c.methods.clear();
        for (const auto& m : f.methods) c.methods.push_back(estimate_method_from_string(m));
    }
    if (!f.views.empty()) c.views = views_from_name(f.views);
    if (!f.out.empty()) c.output_dir = f.out;
    c.finalize();
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spleen volume estimation from 2D slices with a residual VAE"};
    app.require_subcommand(1);
    Flags flags;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "Run config (JSON)")->required();
        sub->add_option("--seed", flags.seed, "Override the config seed");
        sub->add_option("--method", flags.methods, "Estimator: nn, plr, rvae_lr, rvae_fcnr (repeatable)");
        sub->add_option("--views", flags.views, "single or dual")->check(CLI::IsMember({"single", "dual"}));
        sub->add_option("--out", flags.out, "Output directory");
    };
    auto* gen = app.add_subcommand("generate", "Synthesize the phantom cohort and manifest");
    auto* pre = app.add_subcommand("preprocess", "Canonicalize, filter and extract slices");
    auto* trn = app.add_subcommand("train", "Train one model per cross-validation fold");
    auto* est = app.add_subcommand("estimate", "Write per-case volume estimates");
    auto* evl = app.add_subcommand("evaluate", "Metrics, report files and plots on the hold-out fold");
    auto* vis = app.add_subcommand("visualize", "Slice images and scatter plots");
    for (auto* s : {gen, pre, trn, est, evl, vis}) add_common(s);
    trn->add_option("--stop-after-epoch", flags.stop_after_epoch, "Stop early and keep checkpoints");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        const RunConfig c = resolve(flags);
        if (gen->parsed()) cmd_generate(c, std::cout);
        if (pre->parsed()) cmd_preprocess(c, std::cout);
        if (trn->parsed()) cmd_train(c, std::cout, {flags.stop_after_epoch});
        if (est->parsed()) cmd_estimate(c, std::cout);
        if (evl->parsed()) cmd_evaluate(c, std::cout);
        if (vis->parsed()) cmd_visualize(c, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kTraining;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}
